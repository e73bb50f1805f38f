// HTTP + websocket transport for the simulator core. Everything runs on one
// io_context thread, so client messages and ticks are applied in order.

#include "hand_twin/service.hpp"

#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <set>

namespace hand_twin::service {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

class WsSession;

struct Hub {
  Core core;
  std::set<std::shared_ptr<WsSession>> clients;
  std::size_t max_queued = 64;

  explicit Hub(const HandDescription& desc) : core(desc) {}
  void broadcast(const std::shared_ptr<const std::string>& msg);
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
  WsSession(tcp::socket&& socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.clients.insert(self);
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> msg) {
    queue_.push_back(std::move(msg));
    // Drop the oldest queued message, never the one being written.
    if (queue_.size() > hub_.max_queued && queue_.size() > 2) queue_.erase(queue_.begin() + 1);
    if (queue_.size() == 1) write();
  }

private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.clients.erase(self);
        return;
      }
      const auto text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->send(std::make_shared<const std::string>(self->hub_.core.handle(text).dump()));
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->hub_.clients.erase(self);
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->write();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
};

void Hub::broadcast(const std::shared_ptr<const std::string>& msg) {
  for (const auto& c : clients) c->send(msg);
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
  HttpSession(tcp::socket&& socket, Hub& hub) : stream_(std::move(socket)), hub_(hub) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) {
                         beast::error_code ignored;
                         self->stream_.socket().shutdown(tcp::socket::shutdown_both, ignored);
                         return;
                       }
                       self->route();
                     });
  }

private:
  void route() {
    if (websocket::is_upgrade(req_) && req_.target() == "/control") {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_)->start(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::content_type, "application/json");
    if (req_.method() != http::verb::get) {
      res->result(http::status::method_not_allowed);
      res->body() = R"({"type":"error","code":"method","message":"GET only"})";
    } else if (req_.target() == "/state") {
      res->result(http::status::ok);
      res->body() = hub_.core.state().dump();
    } else if (req_.target() == "/healthz") {
      res->result(http::status::ok);
      res->body() = json{{"status", "ok"}, {"seq", hub_.core.sequence()}}.dump();
    } else {
      res->result(http::status::not_found);
      res->body() = R"({"type":"error","code":"not_found","message":"unknown path"})";
    }
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!res->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->read();
                      });
  }

  beast::tcp_stream stream_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

void accept_loop(tcp::acceptor& acceptor, Hub& hub) {
  acceptor.async_accept([&acceptor, &hub](beast::error_code ec, tcp::socket socket) {
    if (!ec) std::make_shared<HttpSession>(std::move(socket), hub)->read();
    if (acceptor.is_open()) accept_loop(acceptor, hub);
  });
}

}  // namespace

void serve(const HandDescription& desc, const ServeOptions& options) {
  if (!(options.publish_hz > 0.0)) throw DomainError("publish rate must be > 0");
  asio::io_context ioc{1};
  Hub hub(desc);
  hub.max_queued = std::max<std::size_t>(2, options.max_queued);

  tcp::acceptor acceptor(ioc);
  beast::error_code ec;
  const auto address = asio::ip::make_address(options.address, ec);
  if (ec) throw DomainError("bad listen address " + options.address);
  const tcp::endpoint endpoint(address, options.port);
  acceptor.open(endpoint.protocol(), ec);
  if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(endpoint, ec);
  if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw HandError("cannot listen on " + options.address + ":" + std::to_string(options.port) +
                    ": " + ec.message());
  }
  accept_loop(acceptor, hub);

  const double period = 1.0 / options.publish_hz;
  const auto period_ns = std::chrono::nanoseconds(static_cast<std::int64_t>(period * 1e9));
  asio::steady_timer timer(ioc);
  const auto started = std::chrono::steady_clock::now();
  auto deadline = started;
  std::function<void(beast::error_code)> on_tick = [&](beast::error_code tick_ec) {
    if (tick_ec) return;
    const bool out_of_time =
        options.run_seconds > 0.0 &&
        std::chrono::steady_clock::now() - started >=
            std::chrono::duration<double>(options.run_seconds);
    if ((options.stop != nullptr && options.stop->load()) || out_of_time) {
      ioc.stop();
      return;
    }
    hub.broadcast(std::make_shared<const std::string>(hub.core.step(period).dump()));
    deadline += period_ns;
    timer.expires_at(deadline);
    timer.async_wait(on_tick);
  };
  deadline += period_ns;
  timer.expires_at(deadline);
  timer.async_wait(on_tick);

  asio::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) { ioc.stop(); });

  if (options.on_ready) options.on_ready(acceptor.local_endpoint().port());
  ioc.run();
}

}  // namespace hand_twin::service
