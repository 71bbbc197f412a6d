import asyncio
import json
import math

import numpy as np
import pytest

from twinop import presets, scenario
from twinop.gateway import Gateway, PROTOCOL_VERSION, serve
from twinop.kinematics import JointVector, forward_kinematics
from twinop.session import Session
from twinop.tasks import run_episode


def make_session(**kw):
    return Session(scenario.from_dict(presets.spiral_scenario(**kw)))


def test_snapshot_self_consistent():
    s = make_session()
    s.run_ticks(500)
    snap = Gateway(s).snapshot()
    assert snap["v"] == PROTOCOL_VERSION and snap["type"] == "snapshot"
    for twin in ("dt1", "dt2"):
        pose = forward_kinematics(s.model, JointVector(*snap[twin]["joints"]))
        assert math.dist(pose.position(), snap[twin]["pose"]) < 1e-9
    assert snap["scale"]["mode"] == "normal"
    assert snap["netem"]["rtt_ms"] == pytest.approx(1.0)


def test_snapshot_idle_session_stable_except_tick():
    s = Session(scenario.from_dict(presets.poke_scenario(duration=2.0)))
    gw = Gateway(s)
    s.run_ticks(300)  # let the robot settle onto the (f32-quantized) home target
    a = gw.snapshot()
    s.run_ticks(10)
    b = gw.snapshot()
    for snap in (a, b):  # the tick and the rolling byte counters advance by design
        snap.pop("tick")
        snap.pop("metrics")
    # poke has not started yet at t=310 ms, so nothing else changed
    assert a == b


def test_snapshot_cloud_decimated():
    s = make_session()
    from twinop.discrepancy import DiscrepancyCloud

    s.dt1.clouds = [DiscrepancyCloud(np.random.default_rng(0).normal(0, 1, (5000, 3)), 0.0)]
    snap = Gateway(s).snapshot()
    assert len(snap["cloud"]) == 2000
    again = Gateway(s).snapshot()
    assert snap["cloud"] == again["cloud"]  # decimation is deterministic


def test_stylus_move_updates_dt1_within_one_tick():
    s = make_session()
    gw = Gateway(s)
    ack = gw.handle_command({"v": 1, "type": "stylus-move", "position": [0.01, 0.0, 0.05]})
    assert ack["type"] == "ack"
    s.tick()
    assert s.dt1.pose.x == pytest.approx(0.30, abs=1e-6)
    assert s.dt1.pose.z == pytest.approx(0.0705, abs=1e-6)


def test_set_scale_applies_next_tick_and_changes_mapping():
    s = make_session()
    gw = Gateway(s)
    gw.handle_command({"v": 1, "type": "stylus-move", "position": [0.0, 0.0, 0.0]})
    s.tick()
    assert gw.handle_command({"v": 1, "type": "set-scale", "mode": "micro"})["type"] == "ack"
    s.tick()
    assert s.scale_mode.name == "micro"
    gw.handle_command({"v": 1, "type": "stylus-move", "position": [0.013, 0.0, 0.0]})
    s.tick()
    # 13 mm of stylus motion maps to 10 mm of robot motion
    assert s.dt1.pose.x == pytest.approx(0.30, abs=1e-6)


def test_set_netem_applies():
    s = make_session()
    gw = Gateway(s)
    gw.handle_command({"v": 1, "type": "set-netem", "rtt_ms": 100.0, "loss": 0.1})
    s.tick()
    assert s.cfg.netem.rtt == pytest.approx(0.1)
    assert s.cfg.netem.loss == pytest.approx(0.1)
    snap = Gateway(s).snapshot()
    assert snap["netem"]["rtt_ms"] == pytest.approx(100.0)


def test_place_object_negative_radius_rejected():
    s = make_session()
    gw = Gateway(s)
    err = gw.handle_command(
        {"v": 1, "type": "place-object", "id": 50, "shape": "sphere",
         "center": [0.3, 0.0, 0.05], "radius": -0.01}
    )
    assert err["type"] == "error"
    assert "place-object" in err["field"]
    assert 50 not in s.real_world


def test_place_and_remove_object_round_trip():
    s = make_session()
    gw = Gateway(s)
    ok = gw.handle_command(
        {"v": 1, "type": "place-object", "id": 50, "shape": "box",
         "center": [0.3, 0.0, 0.05], "half_extents": [0.02, 0.02, 0.02], "class": 0}
    )
    assert ok["type"] == "ack"
    s.tick()
    assert 50 in s.real_world
    gw.handle_command({"v": 1, "type": "remove-object", "id": 50})
    s.tick()
    assert 50 not in s.real_world


def test_unknown_command_rejected():
    gw = Gateway(make_session())
    err = gw.handle_command({"v": 1, "type": "warp-drive"})
    assert err["type"] == "error" and err["field"] == "type"


def test_missing_field_names_path():
    gw = Gateway(make_session())
    err = gw.handle_command({"v": 1, "type": "stylus-move"})
    assert err["type"] == "error"
    assert err["field"] == "stylus-move.position"


def test_malformed_position_rejected_without_state_change():
    s = make_session()
    gw = Gateway(s)
    before = s.stylus
    err = gw.handle_command({"v": 1, "type": "stylus-move", "position": [1.0, "x", 3.0]})
    assert err["type"] == "error"
    assert s.stylus == before


def test_observer_isolation_trace_identical():
    # an observer polling snapshots at an arbitrary rate never perturbs the episode
    base = run_episode(scenario.from_dict(presets.spiral_scenario(seed=33, duration=40.0)))

    sc = scenario.from_dict(presets.spiral_scenario(seed=33, duration=40.0))
    from twinop.tasks import build_operator, spiral_from_scenario

    ref = spiral_from_scenario(sc)
    session = Session(sc)
    gw = Gateway(session)
    op = build_operator(sc, ref)
    snaps = 0
    max_ticks = int(round(sc.run.duration / session.tick_dt))
    while session.tick_index < max_ticks and not op.done:
        session.set_stylus(op.sample(session, session.now))
        session.tick()
        if session.tick_index % 37 == 0:
            gw.snapshot()
            snaps += 1
    session.trace.emit(ev="done", t=session.now, reason="complete")
    for _ in range(int(round(sc.run.drain / session.tick_dt))):
        session.tick()
    assert snaps > 100
    assert session.trace.text() == base.trace_text()


def test_episode_pause_resume():
    gw = Gateway(make_session())
    assert gw.handle_command({"v": 1, "type": "episode", "action": "pause"})["type"] == "ack"
    assert gw.paused
    assert gw.handle_command({"v": 1, "type": "episode", "action": "start"})["type"] == "ack"
    assert not gw.paused
    err = gw.handle_command({"v": 1, "type": "episode", "action": "reset"})
    assert err["type"] == "error" and "busy" in err["message"]


def test_live_websocket_round_trip():
    import websockets

    async def scenario_run():
        sc = scenario.from_dict(presets.poke_scenario(duration=5.0))
        server_task = asyncio.create_task(serve(sc, "127.0.0.1", 8971, speed=8.0))
        try:
            await asyncio.sleep(0.2)
            async with websockets.connect("ws://127.0.0.1:8971") as op:
                await op.send(json.dumps({"v": 1, "role": "operator"}))
                hello = json.loads(await op.recv())
                assert hello["type"] == "ack"
                # a second commander is rejected
                async with websockets.connect("ws://127.0.0.1:8971") as op2:
                    await op2.send(json.dumps({"v": 1, "role": "operator"}))
                    busy = json.loads(await op2.recv())
                    assert busy["type"] == "error"
                # observers attach freely and get snapshots
                async with websockets.connect("ws://127.0.0.1:8971") as obs:
                    await obs.send(json.dumps({"v": 1, "role": "observer"}))
                    got_snapshot = False
                    for _ in range(40):
                        msg = json.loads(await asyncio.wait_for(obs.recv(), 5.0))
                        if msg["type"] == "snapshot":
                            got_snapshot = True
                            assert "dt1" in msg and "cloud" in msg
                            break
                    assert got_snapshot
                    # observers cannot command
                    await obs.send(json.dumps({"v": 1, "type": "set-scale", "mode": "micro"}))
                    while True:
                        msg = json.loads(await asyncio.wait_for(obs.recv(), 5.0))
                        if msg["type"] == "error":
                            assert msg["field"] == "role"
                            break
                # the commander can
                await op.send(json.dumps({"v": 1, "type": "set-scale", "mode": "micro"}))
                while True:
                    msg = json.loads(await asyncio.wait_for(op.recv(), 5.0))
                    if msg["type"] == "ack" and msg.get("command") == "set-scale":
                        break
        finally:
            server_task.cancel()
            try:
                await server_task
            except asyncio.CancelledError:
                pass

    asyncio.run(scenario_run())
