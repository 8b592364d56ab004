"""
Deterministic top-down tabletop world.

State is an immutable `SimState`; `reset` and `step` are pure functions of
(scene, actions). `TabletopSim` wraps them for callers that need a live
handle (perception oracles, the planner, evaluation).
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..errors import OccludedTarget, TooManyObjects, UnknownObject, UnplaceableScene
from ..schema.config import SimConfig
from ..schema.observation import Action, BBox, Observation
from ..schema.scene import MAX_OBJECTS, ObjectSpec, SceneSpec
from .render import (
    apply_lighting,
    circumradius,
    draw_fingers,
    draw_gripper_marker,
    light_gains,
    rasterize,
    wrist_bounds,
)

logger = logging.getLogger(__name__)

Pose = tuple[float, float, float]
Gripper = tuple[float, float, float, float]


@dataclass(frozen=True)
class SimState:
    """Gripper (x, y, z, g), object poses aligned with scene.objects, held id, step."""

    scene: SceneSpec
    config: SimConfig
    gripper: Gripper
    poses: tuple[Pose, ...]
    held_object: str | None = None
    step: int = 0
    lift_counter: int = 0
    removed: frozenset[str] = frozenset()

    def index_of(self, object_id: str) -> int:
        for i, obj in enumerate(self.scene.objects):
            if obj.object_id == object_id:
                return i
        raise UnknownObject(f"Unknown object id: {object_id}")

    def pose_of(self, object_id: str) -> Pose:
        return self.poses[self.index_of(object_id)]

    @property
    def held_index(self) -> int | None:
        return None if self.held_object is None else self.index_of(self.held_object)

    @property
    def proprio(self) -> np.ndarray:
        return np.asarray(self.gripper, dtype=np.float32)

    def on_table(self) -> list[ObjectSpec]:
        """Objects still in the table region (not held, not placed in the bin)."""
        x0, y0, x1, y1 = self.config.table
        out = []
        for obj, (x, y, _) in zip(self.scene.objects, self.poses):
            if obj.object_id in self.removed or obj.object_id == self.held_object:
                continue
            if x0 <= x <= x1 and y0 <= y <= y1:
                out.append(obj)
        return out


# --- placement ---------------------------------------------------------------

def _required_gap(a: ObjectSpec, b: ObjectSpec, config: SimConfig) -> float:
    return max(config.min_separation, circumradius(a) + circumradius(b))


def _fits_table(obj: ObjectSpec, x: float, y: float, config: SimConfig) -> bool:
    x0, y0, x1, y1 = config.table
    r = circumradius(obj)
    return x0 + r <= x <= x1 - r and y0 + r <= y <= y1 - r


def _conflicts(objects: list[ObjectSpec], poses: list[Pose], i: int, config: SimConfig) -> bool:
    x, y, _ = poses[i]
    if not _fits_table(objects[i], x, y, config):
        return True
    for j in range(len(objects)):
        if j == i:
            continue
        xj, yj, _ = poses[j]
        if np.hypot(x - xj, y - yj) < _required_gap(objects[i], objects[j], config):
            return True
    return False


def place_objects(
    objects: list[ObjectSpec],
    poses: list[Pose],
    rng: np.random.Generator,
    config: SimConfig,
) -> list[Pose]:
    """Re-place objects that violate the table or separation constraints.

    Valid poses are kept untouched; offending objects are resampled one at a
    time with `rng` until they fit or `placement_retries` is exhausted.
    """
    poses = list(poses)
    x0, y0, x1, y1 = config.table
    for i in range(len(objects)):
        if not _conflicts(objects[: i + 1], poses[: i + 1], i, config):
            continue
        r = circumradius(objects[i])
        for _ in range(config.placement_retries):
            x = float(rng.uniform(x0 + r, x1 - r))
            y = float(rng.uniform(y0 + r, y1 - r))
            poses[i] = (x, y, poses[i][2])
            if not _conflicts(objects[: i + 1], poses[: i + 1], i, config):
                break
        else:
            raise UnplaceableScene(
                f"Could not place {objects[i].object_id} after {config.placement_retries} retries"
            )
    return poses


# --- core operations ---------------------------------------------------------

def reset(scene: SceneSpec, config: SimConfig | None = None) -> tuple[SimState, Observation]:
    """Home the gripper and place the scene's objects."""
    config = config or SimConfig()
    if len(scene.objects) > MAX_OBJECTS:
        raise TooManyObjects(f"{len(scene.objects)} objects; at most {MAX_OBJECTS} allowed")
    rng = np.random.default_rng(scene.rng_seed)
    poses = place_objects(scene.objects, [o.pose for o in scene.objects], rng, config)
    state = SimState(
        scene=scene,
        config=config,
        gripper=tuple(float(v) for v in config.home),
        poses=tuple(poses),
    )
    return state, observe(state)


def _grippable(obj: ObjectSpec, pose: Pose, config: SimConfig) -> bool:
    if obj.graspable:
        return True
    if not obj.pushable:
        return False
    return overhang(obj, pose, config) >= config.overhang_fraction * obj.size


def edge_distance(pose: Pose, config: SimConfig) -> tuple[float, np.ndarray]:
    """Distance from an object centre to the nearest table edge and the outward normal."""
    x, y, _ = pose
    x0, y0, x1, y1 = config.table
    candidates = [
        (x - x0, (-1.0, 0.0)),
        (x1 - x, (1.0, 0.0)),
        (y - y0, (0.0, -1.0)),
        (y1 - y, (0.0, 1.0)),
    ]
    dist, normal = min(candidates, key=lambda c: c[0])
    return dist, np.asarray(normal)


def overhang(obj: ObjectSpec, pose: Pose, config: SimConfig) -> float:
    dist, _ = edge_distance(pose, config)
    return obj.size - dist


def _push(state: SimState, old: Gripper, new: Gripper, poses: list[Pose]) -> None:
    """Kinematic push: a low gripper moving into an object's contact disc shoves it out."""
    cfg = state.config
    if old[2] >= cfg.z_low or new[2] >= cfg.z_low:
        return
    motion = np.array([new[0] - old[0], new[1] - old[1]])
    if not np.any(motion):
        return
    g_old = np.array(old[:2])
    g_new = np.array(new[:2])
    for i, obj in enumerate(state.scene.objects):
        if obj.object_id == state.held_object or obj.object_id in state.removed:
            continue
        center = np.array(poses[i][:2])
        contact = obj.size + cfg.push_radius
        d_old = np.linalg.norm(center - g_old)
        d_new = np.linalg.norm(center - g_new)
        if d_old < contact - 1e-6 or d_new >= contact or np.dot(motion, center - g_old) <= 0:
            continue
        away = center - g_new
        norm = np.linalg.norm(away)
        direction = away / norm if norm > 0 else motion / np.linalg.norm(motion)
        cx, cy = np.clip(g_new + direction * contact, 0.0, 1.0)
        poses[i] = (float(cx), float(cy), poses[i][2])


def step(state: SimState, action: Action | np.ndarray) -> tuple[SimState, Observation, bool]:
    """Advance one control step toward the action target under the rate limit."""
    cfg = state.config
    target = action.target if isinstance(action, Action) else np.asarray(action, dtype=np.float64)
    target = np.clip(np.asarray(target, dtype=np.float64)[:4], 0.0, 1.0)
    old = np.asarray(state.gripper, dtype=np.float64)
    delta = np.clip(target - old, -cfg.delta_max, cfg.delta_max)
    new = np.clip(old + delta, 0.0, 1.0)
    new_g: Gripper = tuple(float(v) for v in new)

    poses = list(state.poses)
    _push(state, state.gripper, new_g, poses)

    held = state.held_object
    if held is None:
        if old[3] >= cfg.g_close > new[3] and new[2] < cfg.z_low:
            best, best_d = None, cfg.r_grasp
            for i, obj in enumerate(state.scene.objects):
                if obj.object_id in state.removed or not _grippable(obj, poses[i], cfg):
                    continue
                d = float(np.hypot(poses[i][0] - new[0], poses[i][1] - new[1]))
                if d <= best_d:
                    best, best_d = obj.object_id, d
            held = best
            if held is not None:
                logger.debug("step %d: attached %s", state.step, held)
    elif new[3] >= cfg.g_close:
        logger.debug("step %d: released %s", state.step, held)
        held = None

    if held is not None:
        i = state.index_of(held)
        poses[i] = (new_g[0], new_g[1], poses[i][2])

    lift = state.lift_counter + 1 if held is not None and new[2] >= cfg.z_lift else 0
    next_state = replace(
        state,
        gripper=new_g,
        poses=tuple(poses),
        held_object=held,
        step=state.step + 1,
        lift_counter=lift,
    )
    done = success_check(next_state) or next_state.step >= cfg.max_steps
    return next_state, observe(next_state), done


def success_check(state: SimState) -> bool:
    """Held object lifted to z_lift or higher for lift_steps consecutive steps."""
    return state.held_object is not None and state.lift_counter >= state.config.lift_steps


# --- rendering and ground truth ----------------------------------------------

def _visible_poses(state: SimState) -> list[Pose]:
    """Poses with binned objects moved out of view."""
    return [(-10.0, -10.0, p[2]) if o.object_id in state.removed else p
            for o, p in zip(state.scene.objects, state.poses)]


def render_head(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Lit head-camera RGB and its id-buffer."""
    n = state.config.image_size
    rgb, ids, (X, Y) = rasterize(
        state.scene, _visible_poses(state), state.held_index, (0.0, 0.0, 1.0, 1.0), n, state.config.table
    )
    draw_gripper_marker(rgb, ids, X, Y, state.gripper)
    gains = light_gains(state.scene.lighting, state.step, state.scene.rng_seed)
    return apply_lighting(rgb, gains), ids


def render_wrist(state: SimState) -> np.ndarray:
    n = state.config.image_size
    rgb, _, _ = rasterize(
        state.scene, _visible_poses(state), state.held_index, wrist_bounds(state.gripper), n, state.config.table
    )
    draw_fingers(rgb, state.gripper[3])
    gains = light_gains(state.scene.lighting, state.step, state.scene.rng_seed)
    return apply_lighting(rgb, gains)


def observe(state: SimState, mask: np.ndarray | None = None) -> Observation:
    head, _ = render_head(state)
    n = state.config.image_size
    return Observation(
        head_rgb=head,
        wrist_rgb=render_wrist(state),
        proprio=state.proprio,
        mask=np.zeros((n, n, 1), dtype=np.uint8) if mask is None else mask,
    )


def gt_mask(state: SimState, object_id: str) -> np.ndarray:
    """H×W×1 u8 mask of the object's visible pixels in the head view."""
    index = state.index_of(object_id)
    _, ids = render_head(state)
    return (ids == index).astype(np.uint8)[..., None]


def gt_bbox(state: SimState, object_id: str) -> BBox:
    bbox = BBox.from_mask(gt_mask(state, object_id))
    if bbox is None:
        raise OccludedTarget(f"{object_id} has no visible pixels")
    return bbox


# --- scripted motions used by the planner's Place and Reset phases ------------

def place_in_bin(state: SimState) -> SimState:
    """Lift, carry to the bin corner and open; the object leaves the scene."""
    if state.held_object is None:
        return state
    bx, by = state.config.bin_xy
    waypoints = [
        (state.gripper[0], state.gripper[1], 1.0, 0.0),
        (bx, by, 1.0, 0.0),
        (bx, by, 1.0, 1.0),
    ]
    current = state
    for wp in waypoints:
        for _ in range(_steps_to(current.gripper, wp, state.config.delta_max)):
            current, _, _ = step(current, np.asarray(wp))
    return replace(current, removed=current.removed | {state.held_object}, held_object=None)


def reset_robot(state: SimState) -> SimState:
    """Release anything held, return home, and restart the step and lift counters."""
    return replace(
        state,
        gripper=tuple(float(v) for v in state.config.home),
        held_object=None,
        step=0,
        lift_counter=0,
    )


def _steps_to(current: Gripper, target: tuple, delta_max: float) -> int:
    gap = np.max(np.abs(np.asarray(target) - np.asarray(current)))
    return int(np.ceil(gap / delta_max - 1e-9))


class TabletopSim:
    """Stateful handle over the pure world functions."""

    def __init__(self, config: SimConfig | None = None):
        self.config = config or SimConfig()
        self.state: SimState | None = None

    def reset(self, scene: SceneSpec) -> Observation:
        self.state, obs = reset(scene, self.config)
        return obs

    def step(self, action: Action | np.ndarray) -> tuple[Observation, bool]:
        self.state, obs, done = step(self._require(), action)
        return obs, done

    def observe(self, mask: np.ndarray | None = None) -> Observation:
        return observe(self._require(), mask)

    def success(self) -> bool:
        return success_check(self._require())

    def id_buffer(self) -> np.ndarray:
        return render_head(self._require())[1]

    def gt_mask(self, object_id: str) -> np.ndarray:
        return gt_mask(self._require(), object_id)

    def gt_bbox(self, object_id: str) -> BBox:
        return gt_bbox(self._require(), object_id)

    def place_held(self) -> None:
        self.state = place_in_bin(self._require())

    def reset_robot(self) -> Observation:
        self.state = reset_robot(self._require())
        return observe(self.state)

    def _require(self) -> SimState:
        if self.state is None:
            raise RuntimeError("Simulator used before reset()")
        return self.state
