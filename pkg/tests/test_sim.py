import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finemanip.errors import DemoFailureError, EmptySceneError, OutOfWorkspaceError, PlacementError, TaskSpecError
from finemanip.sim import (
    ALL_TASKS,
    NOVEL_TASKS,
    TRAIN_TASKS,
    ArticulatedJoint,
    GripperState,
    SceneObject,
    TaskSpec,
    WorldState,
    check_success,
    load_task,
    render_point_cloud,
    reset_task,
    script_expert_demo,
    step_gripper,
)
from finemanip.sim.world import GRASP_RADIUS, STOP_MARGIN, WORKSPACE_HI, WORKSPACE_LO
from finemanip.types import GripperAction


def box_scene(extra=(), table_half=(0.35, 0.35, 0.01)):
    table = SceneObject("table", "box", table_half, [0, 0, -table_half[2]])
    return WorldState([table, *extra], [], GripperState(np.array([0.0, 0.0, 0.35])), rng_seed=5)


def test_task_lists():
    assert len(TRAIN_TASKS) == 8 and len(NOVEL_TASKS) == 4
    for name in ALL_TASKS:
        assert load_task(name).name == name


def test_unknown_task():
    with pytest.raises(TaskSpecError):
        load_task("juggle-cups")


def test_reset_deterministic():
    spec = load_task("slide-drawer-open")
    a, b = reset_task(spec, 7), reset_task(spec, 7)
    for oa, ob in zip(a.objects, b.objects):
        np.testing.assert_array_equal(oa.position, ob.position)
    c = reset_task(spec, 8)
    assert not np.array_equal(a.object("drawer").position, c.object("drawer").position)


def test_reset_home_open():
    s = reset_task(load_task("press-button"), 0)
    assert s.gripper.open and s.gripper.held_object is None and s.step_count == 0


def test_placement_failure():
    d = load_task("lift-block").to_json()
    d["objects"][0]["position"] = [[1.0, 2.0], [1.0, 2.0], [0.02, 0.02]]
    with pytest.raises(PlacementError):
        reset_task(TaskSpec.from_json(d), 0)


@pytest.mark.parametrize("name", ALL_TASKS)
def test_fresh_reset_not_successful(name):
    spec = load_task(name)
    for seed in range(3):
        assert not check_success(reset_task(spec, seed), spec)


def test_render_shape_and_membership():
    box = SceneObject("b", "box", [0.05, 0.05, 0.05], [0.1, 0.0, 0.05])
    state = box_scene([box])
    pts, oid = render_point_cloud(state, 2048)
    assert pts.shape == (2048, 3) and oid.shape == (2048,)
    on_table = (oid == 0) & (np.abs(pts[:, 2]) < 1e-9)
    local = np.abs(pts - box.position)
    on_box = (oid == 1) & np.isclose(local.max(axis=1), 0.05, atol=1e-9)
    assert np.all(on_table | on_box)
    assert render_point_cloud(state, 64)[0].shape == (64, 3)


def test_render_min_points_and_empty():
    state = box_scene()
    with pytest.raises(ValueError):
        render_point_cloud(state, 63)
    state.objects = []
    with pytest.raises(EmptySceneError):
        render_point_cloud(state, 64)


def test_render_translation_equivariant():
    box = SceneObject("b", "box", [0.04, 0.03, 0.05], [0.0, 0.05, 0.05])
    cyl = SceneObject("c", "cylinder", [0.03, 0.03, 0.04], [-0.1, -0.05, 0.04])
    state = box_scene([box, cyl], table_half=(0.2, 0.2, 0.01))
    moved = state.copy()
    for o in moved.objects:
        o.position = o.position + np.array([0.1, 0.0, 0.0])
    a, _ = render_point_cloud(state, 512)
    b, _ = render_point_cloud(moved, 512)
    np.testing.assert_allclose(b - a, np.tile([0.1, 0.0, 0.0], (512, 1)), atol=1e-12)


def test_blocked_by_box():
    box = SceneObject("b", "box", [0.05, 0.05, 0.05], [0.0, 0.0, 0.1])
    state = box_scene([box])
    state.gripper.position = np.array([-0.2, 0.0, 0.1])
    new, outcome = step_gripper(state, GripperAction(np.array([0.2, 0.0, 0.1]), a_collide=False))
    assert outcome == "blocked"
    assert new.gripper.position[0] == pytest.approx(-0.05 - STOP_MARGIN)
    # collisions allowed: passes through
    new2, outcome2 = step_gripper(state, GripperAction(np.array([0.2, 0.0, 0.1]), a_collide=True))
    assert outcome2 == "ok" and new2.gripper.position[0] == pytest.approx(0.2)


def drawer_state():
    drawer = SceneObject("drawer", "box", [0.1, 0.08, 0.05], [0.0, 0.1, 0.05], attached_joint="j")
    handle = SceneObject("handle", "box", [0.04, 0.012, 0.012], [0.0, 0.008, 0.06], attached_joint="j",
                         graspable=True)
    joint = ArticulatedJoint("j", "prismatic", [0.0, -1.0, 0.0], (0.0, 0.16), 0.0, "handle")
    state = box_scene([drawer, handle])
    state.joints = [joint]
    return state


def test_grasp_and_pull_prismatic():
    state = drawer_state()
    # close 1 cm in front of the handle face
    state.gripper.position = np.array([0.0, 0.008 - 0.012 - 0.01, 0.06])
    state, _ = step_gripper(state, GripperAction(state.gripper.position.copy(), a_open=False))
    assert state.gripper.held_object == "handle"
    target = state.gripper.position + np.array([0.0, -0.08, 0.0])
    state, _ = step_gripper(state, GripperAction(target, a_open=False, a_collide=True))
    assert state.joint("j").value == pytest.approx(0.08)
    target = state.gripper.position + np.array([0.0, -0.2, 0.0])
    state, _ = step_gripper(state, GripperAction(target, a_open=False, a_collide=True))
    assert state.joint("j").value == pytest.approx(0.16)


def test_grasp_radius():
    state = drawer_state()
    state.gripper.position = np.array([0.0, 0.008 - 0.012 - GRASP_RADIUS - 0.005, 0.06])
    new, _ = step_gripper(state, GripperAction(state.gripper.position.copy(), a_open=False))
    assert new.gripper.held_object is None and not new.gripper.open


def test_release_noop():
    state = drawer_state()
    state.gripper.open = False
    new, _ = step_gripper(state, GripperAction(state.gripper.position.copy(), a_open=True))
    assert new.gripper.open and new.step_count == state.step_count + 1
    for a, b in zip(state.objects, new.objects):
        np.testing.assert_array_equal(a.position, b.position)
    assert new.joint("j").value == state.joint("j").value


def test_out_of_workspace_no_change():
    state = drawer_state()
    before = state.gripper.position.copy()
    with pytest.raises(OutOfWorkspaceError):
        step_gripper(state, GripperAction(np.array([0.0, 0.0, 0.8])))
    np.testing.assert_array_equal(state.gripper.position, before)
    assert state.step_count == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.0, 0.4), st.booleans(),
                          st.booleans()), min_size=1, max_size=8))
def test_joint_limits_hold(moves):
    state = drawer_state()
    for x, y, z, op, col in moves:
        state, _ = step_gripper(state, GripperAction(np.array([x, y, z]), a_open=op, a_collide=col))
        j = state.joint("j")
        assert j.limits[0] <= j.value <= j.limits[1]
        assert state.gripper.held_object is None or not state.gripper.open
        assert np.all(state.gripper.position >= WORKSPACE_LO) and np.all(state.gripper.position <= WORKSPACE_HI)


def test_step_does_not_mutate_input():
    state = drawer_state()
    snap = state.copy()
    step_gripper(state, GripperAction(np.array([0.1, 0.1, 0.2]), a_open=False, a_collide=True))
    np.testing.assert_array_equal(state.gripper.position, snap.gripper.position)
    assert state.gripper.open == snap.gripper.open


def test_success_predicates():
    spec = load_task("slide-drawer-open")
    state = reset_task(spec, 0)
    state.joint("drawer_joint").value = 0.09
    assert check_success(state, spec)
    spec = load_task("push-block-to-target")
    state = reset_task(spec, 0)
    params = spec.success["params"]
    block = state.object(params["object"])
    pad = state.object(params["reference"]).position
    block.position = np.array([pad[0] + params["radius"] - 0.005, pad[1], block.position[2]])
    assert check_success(state, spec)
    block.position = np.array([pad[0] + params["radius"] + 0.005, pad[1], block.position[2]])
    assert not check_success(state, spec)


@pytest.mark.parametrize("name", ALL_TASKS)
def test_expert_reaches_success(name):
    spec = load_task(name)
    for seed in range(50):
        traj, states = script_expert_demo(spec.with_variation(seed), seed, n_points=64, return_states=True)
        assert check_success(states[-1], spec)
        # pauses at waypoints and open flips only there
        assert np.all(traj.velocity[traj.waypoint_frames] < 1e-6)
        flips = set(np.flatnonzero(traj.open[1:] != traj.open[:-1]) + 1)
        assert flips <= set(traj.waypoint_frames)


def test_expert_frames_per_segment():
    traj = script_expert_demo(load_task("press-button"), 3, n_points=64)
    starts = [0] + traj.waypoint_frames[:-1]
    for a, b in zip(starts, traj.waypoint_frames):
        assert b - a >= 5


def test_expert_failure_detected():
    d = load_task("press-button").to_json()
    d["success"] = {"kind": "joint-value-threshold", "params": {"joint": d["joints"][0]["id"], "min": 10.0}}
    with pytest.raises(DemoFailureError):
        script_expert_demo(TaskSpec.from_json(d), 0, n_points=64)


def test_demo_deterministic():
    spec = load_task("stack-two-blocks")
    a = script_expert_demo(spec, 4, n_points=64)
    b = script_expert_demo(spec, 4, n_points=64)
    np.testing.assert_array_equal(a.clouds, b.clouds)
    np.testing.assert_array_equal(a.poses, b.poses)
