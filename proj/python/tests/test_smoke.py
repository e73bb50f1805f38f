import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import hand_twin as ht

DATA = Path(__file__).resolve().parents[2] / "data"


def test_lead_and_friction_angles():
    assert ht.lead_angle(0.35, 2.5) == pytest.approx(math.degrees(math.atan(0.35 / (math.pi * 2.5))))
    assert ht.friction_angle(0.42) == pytest.approx(math.degrees(math.atan(0.42)))


def test_self_lock_default():
    r = ht.self_lock(ht.Hand())
    assert r["finger_screw"]["locking"]
    assert r["cmc_worm"]["locking"]
    assert r["finger_screw"]["lead_angle_deg"] == pytest.approx(2.55, abs=0.01)


def test_default_config_matches_schema():
    schema = json.loads((DATA / "hand.schema.json").read_text())
    jsonschema.validate(json.loads((DATA / "default_hand.json").read_text()), schema)
    jsonschema.validate(json.loads(ht.Hand().to_json()), schema)


def test_config_round_trip():
    hand = ht.Hand.from_file(str(DATA / "default_hand.json"))
    assert hand.validate() == []
    again = ht.Hand.from_json(hand.to_json())
    assert again.to_json() == hand.to_json()
    with pytest.raises(ht.HandError):
        ht.Hand.from_json("{not json")


def test_rom_aggregates():
    r = ht.rom(ht.Hand())
    assert len(r["rows"]) == 20
    hand = sum(row["hand_deg"] for row in r["rows"])
    human = sum(row["human_deg"] for row in r["rows"])
    assert r["advantage_with_wrist"] == pytest.approx(hand / human - 1.0)


def test_ik_round_trip():
    hand = ht.Hand()
    q = [0.0] * len(ht.COMMAND_NAMES)
    q[ht.COMMAND_NAMES.index("index_mcp")] = 30.0
    tip = ht.tips(hand, q)["D2"]
    r = ht.solve_ik(hand, "D2", tip)
    assert r["status"] == "converged"
    assert np.linalg.norm(ht.tips(hand, r["state"])["D2"] - tip) < 1e-3
    far = ht.solve_ik(hand, "D2", [900.0, 0.0, 0.0])
    assert far["status"] != "converged"


def test_workspace_is_deterministic():
    a = ht.sample_workspace(ht.Hand(), "D3", 100, seed=5)
    b = ht.sample_workspace(ht.Hand(), "D3", 100, seed=5)
    assert a.shape == (100, 3)
    assert np.array_equal(a, b)


def test_opposition():
    r = ht.opposition(ht.Hand(), "D2")
    assert r["success"]
    assert r["distance_mm"] <= 5.0


def test_wrist():
    hand = ht.Hand()
    s = ht.wrist_ik(hand, 30.0, 10.0)
    assert s["feasible"]
    fe, rud = ht.wrist_fk(hand, s["length_mm"])
    assert fe == pytest.approx(30.0, abs=1e-6)
    assert rud == pytest.approx(10.0, abs=1e-6)
    assert not ht.wrist_ik(hand, 80.0, 0.0)["feasible"]
    env = ht.wrist_envelope(hand, 1.0)
    assert env["flexion_deg"] == pytest.approx(52.0, abs=1.0)


def test_twin_messages():
    twin = ht.Twin()
    ack = twin.handle('{"type":"slider","id":"a","joint":"index_mcp","deg":45}')
    assert ack["type"] == "ack"
    for _ in range(45):
        t = twin.step(1.0 / 30.0)
    assert t["seq"] == 45
    assert twin.sequence == 45
    assert abs(t["measured"]["index_mcp"] - 45.0) < 0.1
    assert twin.handle("garbage")["code"] == "parse"
