"""Kinematic tabletop world: scene types, reset, point-cloud rendering, gripper stepping."""
from __future__ import annotations

import copy
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySceneError, OutOfWorkspaceError, PlacementError
from ..geometry import (
    IDENTITY_QUAT,
    normalize_quat,
    point_box_distance,
    points_in_box,
    quat_multiply,
    axis_angle_quat,
    quat_to_matrix,
    rotate_about,
    segment_box_entry,
)
from ..types import GripperAction

WORKSPACE_LO = np.array([-0.4, -0.4, 0.0])
WORKSPACE_HI = np.array([0.4, 0.4, 0.5])
HOME_POSITION = np.array([0.0, 0.0, 0.35])
GRASP_RADIUS = 0.02
STOP_MARGIN = 0.005
MAX_PLACEMENT_ATTEMPTS = 1000
TABLE_ID = "table"

OUTCOME_OK = "ok"
OUTCOME_BLOCKED = "blocked"


@dataclass
class SceneObject:
    id: str
    shape: str  # box | cylinder | sphere
    half_extents: np.ndarray
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    color_tag: str = ""
    attached_joint: str | None = None
    graspable: bool = False
    pushable: bool = False

    def __post_init__(self):
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64)
        self.position = np.asarray(self.position, dtype=np.float64)
        self.rotation = normalize_quat(self.rotation, tol=1e-6)
        if self.shape not in ("box", "cylinder", "sphere"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if not np.all(self.half_extents > 0):
            raise ValueError(f"object {self.id!r}: half extents must be positive")

    def collision_half(self) -> np.ndarray:
        """Half extents of the local-frame bounding box used for contact tests."""
        h = self.half_extents
        if self.shape == "cylinder":
            return np.array([h[0], h[0], h[2]])
        if self.shape == "sphere":
            return np.array([h[0], h[0], h[0]])
        return h


@dataclass
class ArticulatedJoint:
    id: str
    kind: str  # prismatic | revolute
    axis: np.ndarray
    limits: tuple[float, float]
    value: float
    child_object: str
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=np.float64)
        n = np.linalg.norm(self.axis)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"joint {self.id!r}: axis must be unit length")
        self.origin = np.asarray(self.origin, dtype=np.float64)
        lo, hi = self.limits
        self.limits = (float(lo), float(hi))
        if not lo <= self.value <= hi:
            raise ValueError(f"joint {self.id!r}: value {self.value} outside limits {self.limits}")


@dataclass
class GripperState:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    open: bool = True
    held_object: str | None = None

    @property
    def agent_state(self) -> np.ndarray:
        """The 4-vector (open, x, y, z) observed by the policy."""
        return np.array([1.0 if self.open else 0.0, *self.position])


@dataclass
class WorldState:
    objects: list[SceneObject]
    joints: list[ArticulatedJoint]
    gripper: GripperState
    rng_seed: int
    step_count: int = 0

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def object(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def joint(self, jid: str) -> ArticulatedJoint:
        for j in self.joints:
            if j.id == jid:
                return j
        raise KeyError(jid)

    def joint_group(self, jid: str) -> list[SceneObject]:
        return [o for o in self.objects if o.attached_joint == jid]


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def in_workspace(p) -> bool:
    p = np.asarray(p)
    return bool(np.all(p >= WORKSPACE_LO - 1e-12) and np.all(p <= WORKSPACE_HI + 1e-12))


# ---------------------------------------------------------------- reset


def _table_object(spec) -> SceneObject:
    half = np.asarray(spec.table_half, dtype=np.float64)
    return SceneObject(TABLE_ID, "box", half, np.array([0.0, 0.0, -half[2]]), color_tag="wood")


def _footprint(center, half) -> tuple[np.ndarray, np.ndarray]:
    return center[:2] - half[:2], center[:2] + half[:2]


def _sample_offset(template: dict, rng) -> np.ndarray:
    if "offset_range" in template:
        r = np.asarray(template["offset_range"], dtype=np.float64)
        return r[:, 0] + rng.random(3) * (r[:, 1] - r[:, 0])
    return np.asarray(template["offset"], dtype=np.float64)


def reset_task(spec, seed: int) -> WorldState:
    """Place the task's objects with a seeded PRNG and park the gripper at home.

    Anchor objects are rejection-sampled so their footprints lie on the table and
    clear every other anchor; dependent objects are placed by offset from their anchor.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    rng = np.random.default_rng([int(seed), _stable_hash(spec.name), int(spec.variation)])
    table = _table_object(spec)
    tlo, thi = _footprint(table.position, table.half_extents)
    templates = spec.object_templates()

    groups: dict[str, list] = {}
    for t in templates:
        groups.setdefault(t.get("relative_to") or t["id"], []).append(t)

    placed: dict[str, SceneObject] = {}
    occupied: list[tuple[np.ndarray, np.ndarray]] = []
    for t in templates:
        if t.get("relative_to"):
            continue
        half = np.asarray(t["half_extents"], dtype=np.float64)
        ranges = np.asarray(t["position"], dtype=np.float64)
        clearance = float(t.get("clearance", 0.03))
        members = groups[t["id"]]
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            pos = ranges[:, 0] + rng.random(3) * (ranges[:, 1] - ranges[:, 0])
            offsets = {m["id"]: _sample_offset(m, rng) for m in members[1:]}
            # union footprint of the anchor and its dependents
            lo, hi = _footprint(pos, half)
            for m in members[1:]:
                mlo, mhi = _footprint(pos + offsets[m["id"]], np.asarray(m["half_extents"]))
                lo, hi = np.minimum(lo, mlo), np.maximum(hi, mhi)
            if np.any(lo < tlo) or np.any(hi > thi):
                continue
            if any(np.all(lo < ohi + clearance) and np.all(hi > olo - clearance) for olo, ohi in occupied):
                continue
            break
        else:
            raise PlacementError(f"could not place {t['id']!r} after {MAX_PLACEMENT_ATTEMPTS} attempts")
        occupied.append((lo, hi))
        for m in members:
            p = pos if m is t else pos + offsets[m["id"]]
            placed[m["id"]] = SceneObject(
                id=m["id"],
                shape=m.get("shape", "box"),
                half_extents=np.asarray(m["half_extents"], dtype=np.float64),
                position=p,
                rotation=np.asarray(m.get("rotation", IDENTITY_QUAT), dtype=np.float64),
                color_tag=m.get("color", ""),
                attached_joint=m.get("attached_joint"),
                graspable=bool(m.get("graspable", False)),
                pushable=bool(m.get("pushable", False)),
            )

    objects = [table] + [placed[t["id"]] for t in templates]
    joints, initial = [], []
    for jt in spec.joint_templates():
        origin = placed[jt["origin_relative_to"]].position + np.asarray(jt.get("origin_offset", [0, 0, 0]))
        v = jt.get("value", 0.0)
        if isinstance(v, (list, tuple)):
            v = v[0] + rng.random() * (v[1] - v[0])
        initial.append(float(v))
        joints.append(
            ArticulatedJoint(
                id=jt["id"], kind=jt["kind"], axis=np.asarray(jt["axis"], dtype=np.float64),
                limits=tuple(jt["limits"]), value=0.0, child_object=jt["child"], origin=origin,
            )
        )
    state = WorldState(objects, joints, GripperState(HOME_POSITION.copy()), rng_seed=int(seed))
    # templates describe the rest pose; move articulated parts to their initial value
    for j, v in zip(state.joints, initial):
        _apply_joint_delta(state, j, v)
    return state


# ---------------------------------------------------------------- rendering


def _face_patches(obj: SceneObject):
    """Yield (area, sampler) per visible surface patch; sampler maps uv in [0,1)^2 to local points."""
    h = obj.half_extents
    r = quat_to_matrix(obj.rotation)
    patches = []
    if obj.shape == "box":
        for axis in range(3):
            for sign in (-1.0, 1.0):
                normal = np.zeros(3)
                normal[axis] = sign
                if (r @ normal)[2] < -0.9:
                    continue  # facing the table
                a, b = [k for k in range(3) if k != axis]
                area = 4.0 * h[a] * h[b]

                def sampler(uv, axis=axis, sign=sign, a=a, b=b):
                    p = np.zeros((uv.shape[0], 3))
                    p[:, axis] = sign * h[axis]
                    p[:, a] = (2 * uv[:, 0] - 1) * h[a]
                    p[:, b] = (2 * uv[:, 1] - 1) * h[b]
                    return p

                patches.append((area, sampler))
    elif obj.shape == "cylinder":
        rad, hh = h[0], h[2]

        def top(uv):
            rr = rad * np.sqrt(uv[:, 0])
            th = 2 * np.pi * uv[:, 1]
            return np.stack([rr * np.cos(th), rr * np.sin(th), np.full(uv.shape[0], hh)], axis=1)

        def side(uv):
            th = 2 * np.pi * uv[:, 0]
            return np.stack([rad * np.cos(th), rad * np.sin(th), (2 * uv[:, 1] - 1) * hh], axis=1)

        patches.append((np.pi * rad * rad, top))
        patches.append((2 * np.pi * rad * 2 * hh, side))
    else:
        rad = h[0]

        def sphere(uv):
            z = 2 * uv[:, 0] - 1
            th = 2 * np.pi * uv[:, 1]
            s = np.sqrt(np.maximum(1 - z * z, 0.0))
            return rad * np.stack([s * np.cos(th), s * np.sin(th), z], axis=1)

        patches.append((4 * np.pi * rad * rad, sphere))
    return patches


def render_point_cloud(state: WorldState, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n_points`` surface points, uniform by area, cropped to the workspace.

    Returns (points n×3 float64, object index per point into ``state.objects``).
    Points hidden inside another object (e.g. table under a box) are rejected.
    The sample stream depends only on (rng_seed, step_count, n_points).
    """
    if n_points < 64:
        raise ValueError("n_points must be at least 64")
    if not state.objects:
        raise EmptySceneError("scene has no objects")
    patches = []
    for oi, obj in enumerate(state.objects):
        for area, sampler in _face_patches(obj):
            patches.append((oi, area, sampler))
    areas = np.array([p[1] for p in patches])
    probs = areas / areas.sum()
    rng = np.random.default_rng([int(state.rng_seed), int(state.step_count), int(n_points), 7])
    out_p, out_o, have = [], [], 0
    for _ in range(64):
        k = 2 * n_points
        choice = rng.choice(len(patches), size=k, p=probs)
        uv = rng.random((k, 2))
        pts = np.empty((k, 3))
        oid = np.empty(k, dtype=np.int64)
        for pi in np.unique(choice):
            sel = choice == pi
            oi, _, sampler = patches[pi]
            obj = state.objects[oi]
            local = sampler(uv[sel])
            pts[sel] = local @ quat_to_matrix(obj.rotation).T + obj.position
            oid[sel] = oi
        keep = np.all(pts >= WORKSPACE_LO - 1e-9, axis=1) & np.all(pts <= WORKSPACE_HI, axis=1)
        for oi, obj in enumerate(state.objects):
            inside = points_in_box(pts, obj.position, obj.collision_half() + 1e-4, obj.rotation)
            keep &= ~(inside & (oid != oi))
        out_p.append(pts[keep])
        out_o.append(oid[keep])
        have += int(keep.sum())
        if have >= n_points:
            break
    else:
        raise EmptySceneError("no visible surface inside the workspace")
    return np.concatenate(out_p)[:n_points], np.concatenate(out_o)[:n_points]


# ---------------------------------------------------------------- stepping


def _apply_joint_delta(state: WorldState, joint: ArticulatedJoint, delta: float) -> float:
    """Move a joint by ``delta`` (clamped) and carry its attached objects. Returns the applied delta."""
    lo, hi = joint.limits
    new = min(max(joint.value + delta, lo), hi)
    applied = new - joint.value
    joint.value = new
    if applied == 0.0:
        return 0.0
    for obj in state.joint_group(joint.id):
        if joint.kind == "prismatic":
            obj.position = obj.position + applied * joint.axis
        else:
            obj.position = rotate_about(obj.position, joint.origin, joint.axis, applied)
            obj.rotation = normalize_quat(quat_multiply(axis_angle_quat(joint.axis, applied), obj.rotation))
    return applied


def _signed_angle(joint: ArticulatedJoint, p0, p1) -> float:
    a = np.asarray(p0) - joint.origin
    b = np.asarray(p1) - joint.origin
    a = a - joint.axis * (a @ joint.axis)
    b = b - joint.axis * (b @ joint.axis)
    if np.linalg.norm(a) < 1e-9 or np.linalg.norm(b) < 1e-9:
        return 0.0
    return float(np.arctan2(np.cross(a, b) @ joint.axis, a @ b))


def _excluded_ids(state: WorldState) -> set[str]:
    held = state.gripper.held_object
    if held is None:
        return set()
    obj = state.object(held)
    if obj.attached_joint is None:
        return {held}
    return {o.id for o in state.joint_group(obj.attached_joint)} | {held}


def _strictly_inside(p, obj: SceneObject) -> bool:
    local = quat_to_matrix(obj.rotation).T @ (np.asarray(p) - obj.position)
    return bool(np.all(np.abs(local) < obj.collision_half() - 1e-9))


def _entry_interval(p0, p1, obj: SceneObject):
    return segment_box_entry(p0, p1, obj.position, obj.collision_half(), obj.rotation)


def step_gripper(state: WorldState, action: GripperAction) -> tuple[WorldState, str]:
    """Apply one keyframe action; returns the new state and ``"ok"`` or ``"blocked"``.

    The input state is never mutated.
    """
    rot = normalize_quat(action.a_rot, tol=1e-3)
    target = np.asarray(action.a_position, dtype=np.float64)
    if not np.all(np.isfinite(target)) or not in_workspace(target):
        raise OutOfWorkspaceError(f"target {target.tolist()} outside workspace")
    new = state.copy()
    g = new.gripper
    start = g.position.copy()
    motion = target - start
    length = float(np.linalg.norm(motion))
    outcome = OUTCOME_OK
    final = target.copy()
    excluded = _excluded_ids(new)

    if length > 0.0 and not action.a_collide:
        t_hit = None
        for obj in new.objects:
            if obj.id in excluded or _strictly_inside(start, obj):
                continue
            iv = _entry_interval(start, target, obj)
            if iv is None or iv[1] - iv[0] <= 1e-12:
                continue
            if t_hit is None or iv[0] < t_hit:
                t_hit = iv[0]
        if t_hit is not None:
            travel = max(0.0, t_hit * length - STOP_MARGIN)
            final = start + motion * (travel / length)
            outcome = OUTCOME_BLOCKED
    elif length > 0.0:
        for obj in new.objects:
            if obj.id in excluded or not obj.pushable:
                continue
            iv = _entry_interval(start, target, obj)
            if iv is None or iv[1] - iv[0] <= 1e-12:
                continue
            remaining = (1.0 - iv[0]) * motion
            if obj.attached_joint is not None:
                joint = new.joint(obj.attached_joint)
                if joint.kind == "prismatic":
                    _apply_joint_delta(new, joint, max(0.0, float(remaining @ joint.axis)))
            elif not _strictly_inside(start, obj):
                obj.position = obj.position + np.array([remaining[0], remaining[1], 0.0])

    # carry the held object
    if g.held_object is not None:
        held = new.object(g.held_object)
        delta = final - start
        if held.attached_joint is None:
            held.position = held.position + delta
        else:
            joint = new.joint(held.attached_joint)
            if joint.kind == "prismatic":
                _apply_joint_delta(new, joint, float(delta @ joint.axis))
            else:
                _apply_joint_delta(new, joint, _signed_angle(joint, start, final))

    g.position = final
    g.rotation = rot
    if action.a_open and not g.open:
        g.open = True
        g.held_object = None
    elif not action.a_open and g.open:
        g.open = False
        best, best_d = None, GRASP_RADIUS
        for obj in new.objects:
            if not obj.graspable:
                continue
            d = point_box_distance(final, obj.position, obj.collision_half(), obj.rotation)
            if d <= best_d and (best is None or d < best_d):
                best, best_d = obj.id, d
        g.held_object = best
    new.step_count += 1
    return new, outcome


# ---------------------------------------------------------------- success


def _resolve_point(state: WorldState, ref: str) -> np.ndarray:
    if ref == "gripper":
        return state.gripper.position
    return state.object(ref).position


def evaluate_predicate(state: WorldState, kind: str, params: dict) -> bool:
    if kind == "joint-value-threshold":
        v = state.joint(params["joint"]).value
        if "min" in params and v < params["min"]:
            return False
        if "max" in params and v > params["max"]:
            return False
        return True
    if kind == "object-position-within-radius":
        p = _resolve_point(state, params["object"])
        ref = _resolve_point(state, params["reference"]) + np.asarray(params.get("offset", [0, 0, 0]))
        d = p - ref
        if params.get("plane") == "xy":
            d = d[:2]
        return bool(np.linalg.norm(d) <= params["radius"])
    if kind == "grasp-held":
        if state.gripper.held_object != params["object"]:
            return False
        return bool(state.object(params["object"]).position[2] >= params.get("min_height", -np.inf))
    if kind == "all-of":
        return all(evaluate_predicate(state, p["kind"], p.get("params", {})) for p in params["predicates"])
    raise ValueError(f"unknown success predicate {kind!r}")


def check_success(state: WorldState, spec) -> bool:
    """Evaluate the task's success rule on ``state`` (pure)."""
    return evaluate_predicate(state, spec.success["kind"], spec.success.get("params", {}))
