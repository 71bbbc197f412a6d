import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twinop import wire
from twinop.discrepancy import DiscrepancyCloud
from twinop.kinematics import ArmModel, JointVector, Pose, calibrate, forward_kinematics
from twinop.scene import Box, Registry, RegistryEntry, SceneObject, Sphere, Detection
from twinop.twinsync import (
    MACRO,
    MICRO,
    NORMAL,
    Dt1Controller,
    Dt1Ingestor,
    Dt2Controller,
    Geofence,
    HapticSample,
    TwinState,
    apply_motion_scale,
    contact_force,
    real_robot_step,
    safety_clamp,
    sync_environment,
)

MODEL = ArmModel()
FENCE = Geofence((0.17, -0.14, 0.0), (0.40, 0.14, 0.26), margin=0.05)
HOME = Pose(0.29, 0.0, 0.05)


def make_dt1(objects=()):
    from twinop.kinematics import inverse_kinematics

    joints = inverse_kinematics(MODEL, HOME)
    pose = forward_kinematics(MODEL, joints)
    calib = calibrate(Pose(0, 0, 0), pose)
    state = TwinState(joints, pose, {o.instance_id: o for o in objects})
    ctrl = Dt1Controller(
        MODEL, calib, FENCE, anchor_stylus=(0.0, 0.0, 0.0), anchor_robot=pose.position()
    )
    return ctrl, state


def test_motion_scale_micro_mapping():
    assert apply_motion_scale((1.3, 0.0, 0.0), MICRO) == pytest.approx((1.0, 0.0, 0.0))


def test_motion_scale_macro_mapping():
    assert apply_motion_scale((0.7, 0.0, 0.0), MACRO) == pytest.approx((1.0, 0.0, 0.0))


def test_motion_scale_normal_identity():
    assert apply_motion_scale((1.0, 1.0, 1.0), NORMAL) == (1.0, 1.0, 1.0)


@given(
    d=st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
    alpha=st.floats(-5, 5),
)
def test_motion_scale_linearity(d, alpha):
    scaled = apply_motion_scale(d, MICRO)
    scaled_alpha = apply_motion_scale(tuple(alpha * x for x in d), MICRO)
    for a, b in zip(scaled_alpha, scaled):
        assert a == pytest.approx(alpha * b, abs=1e-12)


def test_safety_clamp_inside_unchanged():
    pose = Pose(0.3, 0.0, 0.1)
    out, veto = safety_clamp(pose, FENCE)
    assert out == pose and not veto


def test_safety_clamp_small_violation_clamped():
    out, veto = safety_clamp(Pose(0.41, 0.0, 0.1), FENCE)  # 1 cm out, margin 5 cm
    assert out.x == 0.40 and not veto


def test_safety_clamp_large_violation_vetoed():
    out, veto = safety_clamp(Pose(0.50, 0.0, 0.1), FENCE)  # 10 cm out
    assert out.x == 0.40 and veto


def test_contact_force_free_space():
    f = contact_force([SceneObject(1, 0, Sphere((0, 0, 0), 0.1))], (0.5, 0.5, 0.5))
    assert f.magnitude == 0.0 and f.force == (0.0, 0.0, 0.0)


def test_contact_force_sphere_1mm():
    sphere = SceneObject(1, 0, Sphere((0.0, 0.0, 0.0), 0.05))
    tip = (0.049, 0.0, 0.0)  # 1 mm inside
    f = contact_force([sphere], tip, stiffness=300.0)
    assert f.magnitude == pytest.approx(0.3, abs=1e-9)
    assert f.force[0] == pytest.approx(0.3, abs=1e-9)  # radially outward (+x)


def test_contact_force_deep_capped():
    sphere = SceneObject(1, 0, Sphere((0.0, 0.0, 0.0), 0.2))
    f = contact_force([sphere], (0.1, 0.0, 0.0), stiffness=300.0, cap=3.3)
    assert f.magnitude == pytest.approx(3.3)


def test_contact_force_table_2mm():
    table = SceneObject(1, 0, Box((0.0, 0.0, 0.0), (0.5, 0.5, 0.02)))
    f = contact_force([table], (0.0, 0.0, 0.018), stiffness=300.0)  # 2 mm below the top
    assert f.magnitude == pytest.approx(0.6, abs=1e-9)
    assert f.force[2] == pytest.approx(0.6, abs=1e-9)  # pushes back up


def test_contact_force_cylinder_side():
    cyl = SceneObject(1, 0, __import__("twinop.scene", fromlist=["Cylinder"]).Cylinder((0, 0, 0), 0.05, 0.2))
    f = contact_force([cyl], (0.049, 0.0, 0.1), stiffness=300.0)
    assert f.magnitude == pytest.approx(0.3, abs=1e-9)
    assert f.force[0] > 0


def test_dt1_home_is_fixed_point():
    ctrl, state = make_dt1()
    force, datagram, veto = ctrl.step(
        state, HapticSample((0, 0, 0), 1.0, False, 0.0, 1), emit=True, t_us=0
    )
    assert force.magnitude == 0.0
    assert not veto and datagram is not None
    msg = wire.decode(datagram)
    assert math.dist(msg.pose.position(), HOME.position()) < 1e-6


def test_dt1_emits_clamped_pose_on_boundary():
    ctrl, state = make_dt1()
    # stylus 5 cm beyond the +x face (0.40): target x = 0.29 + 0.16 = 0.45
    force, datagram, veto = ctrl.step(
        state, HapticSample((0.16, 0, 0), 1.0, False, 0.0, 1), emit=True, t_us=0
    )
    assert not veto and datagram is not None
    msg = wire.decode(datagram)
    assert msg.pose.x == pytest.approx(0.40, abs=1e-6)


def test_dt1_vetoes_beyond_margin():
    ctrl, state = make_dt1()
    force, datagram, veto = ctrl.step(
        state, HapticSample((0.31, 0, 0), 1.0, False, 0.0, 1), emit=True, t_us=0
    )
    assert veto and datagram is None
    assert FENCE.contains(state.pose)  # DT1 itself stays clamped inside


def test_dt1_contact_force_against_scene():
    table = SceneObject(1, 0, Box((0.29, 0.0, 0.0), (0.2, 0.2, 0.02)), (150, 150, 155))
    ctrl, state = make_dt1([table])
    # drive the tool 2 mm into the table top (z = 0.018): stylus dz = -0.032
    force, _, _ = ctrl.step(
        state, HapticSample((0.0, 0.0, -0.032), 1.0, True, 0.0, 1), emit=False, t_us=0
    )
    assert force.magnitude == pytest.approx(300.0 * 0.002, rel=1e-6)
    assert force.force[2] > 0


def test_dt1_scale_switch_rebases_without_jump():
    ctrl, state = make_dt1()
    s1 = HapticSample((0.02, 0.0, 0.0), 1.0, False, 0.0, 1)
    ctrl.step(state, s1, emit=False, t_us=0)
    pose_before = state.pose
    ctrl.set_mode(MICRO, s1.position)
    force, _, _ = ctrl.step(state, s1, emit=False, t_us=1)
    assert math.dist(state.pose.position(), pose_before.position()) < 1e-9
    # further deltas now scale 1.3:1
    s2 = HapticSample((0.033, 0.0, 0.0), 1.0, False, 0.001, 2)
    ctrl.step(state, s2, emit=False, t_us=2)
    assert state.pose.x == pytest.approx(pose_before.x + 0.013 / 1.3, abs=1e-9)


def test_dt1_latest_value_semantics():
    ctrl1, state1 = make_dt1()
    samples = [HapticSample((0.01 * i, 0.0, 0.0), 1.0, False, i * 0.001, i) for i in range(1, 6)]
    for s in samples:
        ctrl1.step(state1, s, emit=False, t_us=0)
    ctrl2, state2 = make_dt1()
    ctrl2.step(state2, samples[-1], emit=False, t_us=0)
    assert state1.pose == state2.pose


def make_dt2():
    from twinop.kinematics import inverse_kinematics

    joints = inverse_kinematics(MODEL, HOME)
    state = TwinState(joints, forward_kinematics(MODEL, joints))
    return Dt2Controller(MODEL, FENCE), state


def test_dt2_tracks_pose_stream():
    ctrl, state = make_dt2()
    for i, x in enumerate((0.30, 0.31, 0.32)):
        cmd = ctrl.ingest(state, wire.encode_pose(Pose(x, 0, 0.1), i, i * 1000), float(i))
        assert cmd is not None
    assert state.pose.x == pytest.approx(0.32, abs=1e-6)


def test_dt2_discards_duplicate_seq():
    ctrl, state = make_dt2()
    ctrl.ingest(state, wire.encode_pose(Pose(0.30, 0, 0.1), 5, 0), 0.0)
    pose_before = state.pose
    cmd = ctrl.ingest(state, wire.encode_pose(Pose(0.35, 0, 0.1), 5, 1), 0.1)
    assert cmd is None and state.pose == pose_before
    assert ctrl.stale_discarded == 1


def test_dt2_vetoes_forged_out_of_fence_pose():
    ctrl, state = make_dt2()
    pose_before = state.pose
    cmd = ctrl.ingest(state, wire.encode_pose(Pose(0.60, 0, 0.1), 1, 0), 0.0)
    assert cmd is None and ctrl.vetoed == 1
    assert state.pose == pose_before


def test_dt2_drops_corrupt_datagram():
    ctrl, state = make_dt2()
    data = bytearray(wire.encode_pose(Pose(0.3, 0, 0.1), 1, 0))
    data[20] ^= 0xFF
    cmd = ctrl.ingest(state, bytes(data), 0.0)
    assert cmd is None and ctrl.decode_errors == 1


def test_real_robot_holds_without_commands():
    q = JointVector(0.1, 0.2, -0.3)
    assert real_robot_step(q, None, 0.01, MODEL) == q


def test_real_robot_converges_to_constant_command():
    q = JointVector(0, 0, 0)
    target = JointVector(0.3, 0.2, -0.4)
    for _ in range(200):
        q = real_robot_step(q, target, 0.01, MODEL)
    assert q == target
    assert real_robot_step(q, target, 0.01, MODEL) == target


REGISTRY = Registry([RegistryEntry(3, "scalpel", 0.97, Sphere((0, 0, 0), 0.02), (200, 50, 50))])


def _twins():
    from twinop.kinematics import inverse_kinematics

    joints = inverse_kinematics(MODEL, HOME)
    pose = forward_kinematics(MODEL, joints)
    return TwinState(joints, pose), TwinState(joints, pose)


def _empty_cloud():
    return DiscrepancyCloud(np.zeros((0, 3)), 0.0)


def test_sync_confident_detection_goes_coordinate_path():
    dt1, dt2 = _twins()
    det = Detection(3, 0.95, (0.32, 0.05, 0.06), 10)
    result = sync_environment(
        dt1, dt2, [det], _empty_cloud(), REGISTRY, seq_start=0, t_us=0, now=1.0, cloud_id=0
    )
    assert len(result.object_datagrams) == 1
    assert len(result.object_datagrams[0]) == 46
    assert 10 in dt2.objects and dt2.objects[10].class_id == 3
    # DT1 learns about it only through the datagram
    assert 10 not in dt1.objects
    ingest = Dt1Ingestor(REGISTRY)
    ingest.ingest(dt1, result.object_datagrams[0], 1.1)
    assert 10 in dt1.objects
    assert np.allclose(dt1.objects[10].shape.center, (0.32, 0.05, 0.06), atol=1e-6)


def test_sync_low_confidence_goes_cloud_path():
    dt1, dt2 = _twins()
    det = Detection(3, 0.85, (0.32, 0.05, 0.06), 10)
    result = sync_environment(
        dt1, dt2, [det], _empty_cloud(), REGISTRY, seq_start=0, t_us=0, now=1.0, cloud_id=0
    )
    assert result.object_datagrams == [] and result.routed_to_cloud == [det]
    assert 10 not in dt2.objects


def test_sync_gate_boundary_is_known_path():
    dt1, dt2 = _twins()
    det = Detection(3, 0.9, (0.32, 0.05, 0.06), 10)
    result = sync_environment(
        dt1, dt2, [det], _empty_cloud(), REGISTRY, seq_start=0, t_us=0, now=1.0, cloud_id=0
    )
    assert len(result.object_datagrams) == 1  # ties take the known-object path


def test_sync_unknown_class_is_foreign():
    dt1, dt2 = _twins()
    det = Detection(99, 0.99, (0.32, 0.05, 0.06), 10)
    result = sync_environment(
        dt1, dt2, [det], _empty_cloud(), REGISTRY, seq_start=0, t_us=0, now=1.0, cloud_id=0
    )
    assert result.object_datagrams == [] and result.routed_to_cloud == [det]


def test_sync_nothing_to_do():
    dt1, dt2 = _twins()
    result = sync_environment(
        dt1, dt2, [], _empty_cloud(), REGISTRY, seq_start=0, t_us=0, now=1.0, cloud_id=0
    )
    assert result.object_datagrams == [] and result.cloud_datagrams == []
    assert dt1.objects == {} and dt2.objects == {}


def test_sync_cloud_chunked_and_integrated():
    dt1, dt2 = _twins()
    rng = np.random.default_rng(0)
    cloud = DiscrepancyCloud(rng.normal(0.3, 0.02, (250, 3)), 2.0)
    result = sync_environment(
        dt1, dt2, [], cloud, REGISTRY, seq_start=0, t_us=0, now=2.0, cloud_id=7
    )
    assert len(result.cloud_datagrams) == 3  # 123 + 123 + 4
    assert dt2.clouds == [cloud]
    ingest = Dt1Ingestor(REGISTRY)
    for dg in result.cloud_datagrams:
        ingest.ingest(dt1, dg, 2.1)
    assert len(dt1.clouds) == 1 and len(dt1.clouds[0]) == 250
    assert np.allclose(dt1.clouds[0].points, cloud.points, atol=1e-6)


def test_cloud_partial_finalized_when_newer_arrives():
    dt1, _ = _twins()
    rng = np.random.default_rng(1)
    pts_a = rng.normal(0.3, 0.02, (250, 3)).astype(np.float32)
    chunks_a = wire.chunk_cloud(pts_a, cloud_id=1, seq_start=0, t_us=0)
    pts_b = rng.normal(0.3, 0.02, (200, 3)).astype(np.float32)
    chunks_b = wire.chunk_cloud(pts_b, cloud_id=2, seq_start=10, t_us=1)
    ingest = Dt1Ingestor(REGISTRY)
    ingest.ingest(dt1, chunks_a[0], 0.0)  # chunk 1 of cloud 1 lost
    ingest.ingest(dt1, chunks_a[2], 0.0)
    assert dt1.clouds == []  # still waiting
    ingest.ingest(dt1, chunks_b[0], 0.1)  # newer cloud: finalize the partial
    assert len(dt1.clouds) == 1
    assert len(dt1.clouds[0]) == 123 + 4
    ingest.ingest(dt1, chunks_b[1], 0.2)  # cloud 2 completes and replaces it
    assert len(dt1.clouds[0]) == 200
