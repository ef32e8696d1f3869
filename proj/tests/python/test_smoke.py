import json

import numpy as np
import pytest

import kinhmd


def test_pattern_landmarks():
    p = kinhmd.StimulusPattern()
    assert p.total_duration == 10.0
    assert p(2.0) == 5.0
    assert p(7.0) == -5.0
    assert kinhmd.eval_pattern(p, 0.25) == pytest.approx(2.5, rel=1e-12)
    with pytest.raises(kinhmd.DomainError):
        p(10.5)


def test_trace_integrates_to_zero():
    t, a = kinhmd.synthesize_trace(kinhmd.StimulusPattern(), 1000.0)
    assert len(t) == 10001 and a.shape == (10001, 3)
    v = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:, 0] + a[:-1, 0]) * np.diff(t))])
    assert abs(v[-1]) < 1e-6
    assert v.max() == pytest.approx(22.5, abs=0.01)


def test_rendering_and_torque():
    a = np.array([5.0, 0.0, 0.0])
    assert np.array_equal(kinhmd.render_force(a, "indirect", 2.0), [-10, 0, 0])
    assert np.array_equal(kinhmd.render_force(a, "direct", 2.0), [10, 0, 0])
    assert not kinhmd.render_force(a, "none", 2.0).any()
    assert kinhmd.torque_policy([0.5, 0, 0]) is None
    assert np.allclose(kinhmd.torque_policy([0, 3, 4]), [0, 0.6, 0.8])


def test_safety_primitives():
    assert np.allclose(kinhmd.clamp_force([9, 12, 0], 10), [6, 8, 0])
    assert np.allclose(kinhmd.limit_jerk([0, 0, 0], [10, 0, 0], 50, 1e-3), [0.05, 0, 0])
    assert kinhmd.kill_transition("ENGAGED", "kill") == "KILLED"
    assert kinhmd.kill_transition("KILLED", "engage") == "KILLED"
    assert kinhmd.kill_transition("KILLED", "rearm") == "DISARMED"
    with pytest.raises(kinhmd.HardFault):
        kinhmd.clamp_force([float("nan"), 0, 0])


def test_calibration_callback():
    answers = iter([True, True, True, False])
    r = kinhmd.calibrate_gain("p1", lambda gain, force: next(answers))
    assert r["accepted_gain"] == pytest.approx(0.625 * 2.0)
    assert len(r["steps"]) == 4
    r = kinhmd.calibrate_gain("p2", lambda gain, force: None)
    assert r["aborted"] and r["accepted_gain"] == pytest.approx(0.5)


def test_packets():
    records = [(4, [0.5, 1, 2, 3, 4, 5, 6, 7]), (17, [0] * 8)]
    data = kinhmd.encode_packet(records)
    assert data[:5] == b"DATA\x00" and len(data) == 5 + 2 * 36
    back = kinhmd.parse_packet(data)
    assert back[0][0] == 4 and back[0][1][0] == 0.5
    assert back[1][0] == 17
    with pytest.raises(kinhmd.PacketError):
        kinhmd.parse_packet(b"XATA\x00")
    with pytest.raises(kinhmd.PacketError):
        kinhmd.parse_packet(data[:-1])


def test_plant_equilibrium():
    log = kinhmd.simulate_force([3.0, 0, 0], 5.0)
    assert log["position"][-1, 0] == pytest.approx(0.01, rel=0.01)
    assert len(log["t"]) == 5000


def test_run_and_config(tmp_path):
    cfg = kinhmd.load_config({"cueing": {"mode": "indirect", "gain": 2.0}})
    assert cfg["safety"]["force_limit_n"] == 10.0
    out = kinhmd.run({"cueing": {"mode": "indirect"}, "log_path": str(tmp_path / "run.jsonl")}, duration=10.0)
    assert out["ticks"] == 10000
    assert np.linalg.norm(out["force"], axis=1).max() == pytest.approx(10.0)
    back = kinhmd.read_log(tmp_path / "run.jsonl")
    assert np.array_equal(back["force"], out["force"])

    none = kinhmd.run({"cueing": {"mode": "none"}}, duration=10.0)
    assert not none["force"].any()

    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"safety": {"force_limit_n": 80}}))
    with pytest.raises(kinhmd.ConfigError):
        kinhmd.load_config(str(path))


def test_plans_and_session():
    plan = kinhmd.plan_trials(10, 5)
    assert len(plan) == 30
    assert all(plan.count(c) == 10 for c in ("H_NONE", "H_DIRECT", "H_INDIRECT"))
    assert plan == kinhmd.plan_trials(10, 5)

    records = kinhmd.run_session(reps=1, seed=3, kills=[(1, 2.0)])
    assert len(records) == 3
    assert records[1]["cancelled"] and records[1]["ratings"] is None
    for r in records:
        if r["condition"] == "H_NONE":
            assert r["peak_force"] == 0.0


def test_five_number():
    assert kinhmd.five_number([3, -1, 0, 2, -3, 1, 0, 3, -2, 1]) == pytest.approx((-3, -0.75, 0.5, 1.75, 3))
