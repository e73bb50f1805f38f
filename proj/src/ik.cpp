// Damped least-squares inverse kinematics over the commanded values.

#include "hand_twin/detail/chain.hpp"
#include "hand_twin/detail/random.hpp"
#include "hand_twin/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include <limits>

namespace hand_twin {

std::string_view ik_status_name(IkStatus s) {
  switch (s) {
    case IkStatus::Converged: return "converged";
    case IkStatus::Infeasible: return "infeasible";
    case IkStatus::IterationLimit: return "iteration-limit";
  }
  return "?";
}

namespace {

constexpr double kMinDamping = 1e-6;
constexpr double kMaxDamping = 1e8;
constexpr int kPolishSteps = 200;
constexpr std::uint64_t kRestartSeed = 0x1cb3;

struct Problem {
  const HandDescription& desc;
  std::span<const IkTarget> targets;
  std::span<const IkContact> contacts;
  std::vector<int> vars;  // active command indices
  double scale = 1.0;     // normalizing length

  Eigen::Index rows() const {
    return static_cast<Eigen::Index>(3 * (targets.size() + contacts.size()));
  }
};

struct Evaluation {
  Eigen::VectorXd error;  // weighted, normalized
  Eigen::MatrixXd jac;    // weighted, normalized, active columns
  std::vector<double> distances;
  double cost = 0.0;
  double residual = 0.0;
};

Vec3 point_of(const detail::Chain& c, TargetPoint p) {
  return p == TargetPoint::Tip ? c.tip : c.dip;
}

Vec3 point_column(const HandState& state, const detail::Chain& chain, const Vec3& p, int cmd) {
  if (cmd == kWristFe) return Vec3::UnitY().cross(p);
  if (cmd == kWristRud) {
    const Vec3 axis = Eigen::AngleAxisd(deg2rad(state[kWristFe]), Vec3::UnitY()) * Vec3::UnitZ();
    return axis.cross(p);
  }
  Vec3 col = Vec3::Zero();
  for (const auto& cj : chain.joints) {
    if (cj.joint->command == cmd) col += cj.coefficient * cj.axis.cross(p - cj.origin);
  }
  return col;
}

Evaluation evaluate(const Problem& pb, const HandState& state, bool with_jacobian) {
  std::array<std::optional<detail::Chain>, kDigitCount> chains;
  auto chain = [&](DigitId id) -> const detail::Chain& {
    auto& slot = chains[static_cast<std::size_t>(id)];
    if (!slot) slot = detail::walk_digit(pb.desc, state, id);
    return *slot;
  };

  Evaluation ev;
  ev.error.setZero(pb.rows());
  if (with_jacobian) ev.jac.setZero(pb.rows(), static_cast<Eigen::Index>(pb.vars.size()));
  Eigen::Index row = 0;
  for (const auto& t : pb.targets) {
    const auto& c = chain(t.digit);
    const Vec3 p = point_of(c, t.point);
    const Vec3 e = t.position - p;
    ev.distances.push_back(e.norm());
    ev.error.segment<3>(row) = t.weight * e / pb.scale;
    if (with_jacobian) {
      for (std::size_t k = 0; k < pb.vars.size(); ++k) {
        ev.jac.block<3, 1>(row, static_cast<Eigen::Index>(k)) =
            t.weight * point_column(state, c, p, pb.vars[k]) / pb.scale;
      }
    }
    row += 3;
  }
  for (const auto& ct : pb.contacts) {
    const auto& a = chain(ct.first);
    const auto& b = chain(ct.second);
    const Vec3 e = b.tip - a.tip;  // drive first tip onto second tip
    ev.distances.push_back(e.norm());
    ev.error.segment<3>(row) = ct.weight * e / pb.scale;
    if (with_jacobian) {
      for (std::size_t k = 0; k < pb.vars.size(); ++k) {
        const int cmd = pb.vars[k];
        const Vec3 col =
            point_column(state, a, a.tip, cmd) - point_column(state, b, b.tip, cmd);
        ev.jac.block<3, 1>(row, static_cast<Eigen::Index>(k)) = ct.weight * col / pb.scale;
      }
    }
    row += 3;
  }
  ev.cost = 0.5 * ev.error.squaredNorm();
  ev.residual = ev.distances.empty()
                    ? 0.0
                    : *std::max_element(ev.distances.begin(), ev.distances.end());
  return ev;
}

DigitId worst_digit(const Problem& pb, const Evaluation& ev) {
  std::size_t worst = 0;
  for (std::size_t i = 1; i < ev.distances.size(); ++i) {
    if (ev.distances[i] > ev.distances[worst]) worst = i;
  }
  if (worst < pb.targets.size()) return pb.targets[worst].digit;
  const auto& c = pb.contacts[worst - pb.targets.size()];
  return c.first;
}

}  // namespace

IkResult solve_ik(const HandDescription& desc, std::span<const IkTarget> targets,
                  const HandState& seed, const IkOptions& options,
                  std::span<const IkContact> contacts) {
  if (targets.empty() && contacts.empty()) throw DomainError("solve_ik needs at least one target");
  if (!(options.tol_mm >= 0.0)) throw DomainError("IK tolerance must be non-negative");
  check_state(desc, seed);
  for (const auto& t : targets) {
    if (!t.position.allFinite()) throw DomainError("IK target position is not finite");
  }

  Problem pb{desc, targets, contacts, {}, desc.digit(DigitId::D2).reach()};
  for (int i = 0; i < kCommandCount; ++i) {
    if (options.active[static_cast<std::size_t>(i)]) pb.vars.push_back(i);
  }
  std::vector<JointLimits> limits;
  for (int v : pb.vars) limits.push_back(desc.command_limits(v));
  const auto n = static_cast<Eigen::Index>(pb.vars.size());

  // The step clamp acts on joint motion; the servo moves its joints by the
  // largest stage coupling.
  Eigen::VectorXd joint_rate = Eigen::VectorXd::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (pb.vars[static_cast<std::size_t>(k)] != kAbductionServo) continue;
    double c = 0.0;
    for (const auto& st : desc.transmission.abduction.stages) {
      c = std::max(c, std::abs(desc.transmission.abduction.coupling(st)));
    }
    if (c > 0.0) joint_rate[k] = c;
  }

  // Damped step. Active set: variables on a bound whose step points outward
  // are frozen.
  auto take_step = [&](const HandState& q, const Evaluation& ev, double lambda) {
    std::vector<bool> frozen(pb.vars.size(), false);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    for (int pass = 0; pass < 3; ++pass) {
      Eigen::MatrixXd jf = ev.jac;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (frozen[static_cast<std::size_t>(k)]) jf.col(k).setZero();
      }
      Eigen::MatrixXd h = jf.transpose() * jf;
      h.diagonal().array() += lambda * lambda;
      step = h.ldlt().solve(jf.transpose() * ev.error);
      bool changed = false;
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (frozen[ku]) continue;
        const double v = q[pb.vars[ku]];
        const bool at_min = v <= limits[ku].min_deg + 1e-12;
        const bool at_max = v >= limits[ku].max_deg - 1e-12;
        if ((at_min && step[k] < 0.0) || (at_max && step[k] > 0.0)) {
          frozen[ku] = true;
          changed = true;
        }
      }
      if (!changed) break;
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (frozen[static_cast<std::size_t>(k)]) step[k] = 0.0;
    }
    const double biggest = step.cwiseProduct(joint_rate).cwiseAbs().maxCoeff();
    if (biggest > options.max_step_rad) step *= options.max_step_rad / biggest;

    HandState trial = q;
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      trial[pb.vars[ku]] = limits[ku].clamp(q[pb.vars[ku]] + rad2deg(step[k]));
    }
    return trial;
  };

  IkResult result;
  HandState best = clamp_state(desc, seed);
  Evaluation best_ev = evaluate(pb, best, true);
  result.history.push_back(best_ev.cost);

  detail::Rng rng(kRestartSeed);
  HandState start = best;
  Evaluation ev = best_ev;
  int used = 0;
  bool stalled = false;
  bool any_stall = false;
  while (used < options.max_iter && best_ev.residual > options.tol_mm && n > 0) {
    // One damped least-squares descent from `start`.
    HandState q = start;
    double lambda = options.damping;
    std::vector<double> window{ev.cost};
    stalled = false;
    for (; used < options.max_iter; ++used) {
      if (ev.residual <= options.tol_mm) break;

      const HandState trial = take_step(q, ev, lambda);
      Evaluation next = evaluate(pb, trial, true);
      if (next.cost < ev.cost) {
        q = trial;
        ev = std::move(next);
        lambda = std::max(lambda * 0.5, kMinDamping);
        if (ev.cost < best_ev.cost) {
          best = q;
          best_ev = ev;
          result.history.push_back(ev.cost);
        }
      } else {
        lambda *= 4.0;
      }

      window.push_back(ev.cost);
      if (lambda > kMaxDamping) {
        stalled = true;
        ++used;
        break;
      }
      const auto span = static_cast<std::size_t>(std::max(1, options.plateau_window));
      if (window.size() > span) {
        const double old = window[window.size() - 1 - span];
        if (old - ev.cost <= options.plateau_rel * old) {
          stalled = true;
          ++used;
          break;
        }
      }
    }
    if (!stalled) break;
    any_stall = true;

    // Restart from the best state with the worst-fitting digit resampled;
    // every second restart also resamples the shared servo and wrist.
    start = best;
    const bool shared = result.restarts % 2 == 1;
    for (int c : detail::digit_commands(desc, worst_digit(pb, best_ev))) {
      const bool is_shared = c == kAbductionServo || c == kWristFe || c == kWristRud;
      if ((is_shared && !shared) || !options.active[static_cast<std::size_t>(c)]) continue;
      const auto lim = desc.command_limits(c);
      start[c] = rng.uniform(lim.min_deg, lim.max_deg);
    }
    ev = evaluate(pb, start, true);
    ++result.restarts;
  }

  // Polish a converged solution so the answer does not depend on where the
  // absolute tolerance happened to cut the descent.
  if (best_ev.residual <= options.tol_mm && n > 0) {
    double lambda = kMinDamping;
    for (int k = 0; k < kPolishSteps && lambda <= kMaxDamping; ++k) {
      const HandState trial = take_step(best, best_ev, lambda);
      Evaluation next = evaluate(pb, trial, true);
      if (next.cost < best_ev.cost) {
        const bool done = next.cost > 0.5 * best_ev.cost && next.residual < 1e-9 * pb.scale;
        best = trial;
        best_ev = std::move(next);
        lambda = std::max(lambda * 0.25, kMinDamping);
        if (done) break;
      } else {
        lambda *= 4.0;
      }
    }
  }

  result.state = best;
  result.iterations = used;
  result.residual_mm = best_ev.residual;
  result.target_residuals = best_ev.distances;
  if (best_ev.residual <= options.tol_mm) {
    result.status = IkStatus::Converged;
  } else if (any_stall) {
    result.status = IkStatus::Infeasible;
  } else {
    result.status = IkStatus::IterationLimit;
  }
  return result;
}

}  // namespace hand_twin
