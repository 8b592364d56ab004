"""
Scripted demonstration expert.

The expert is stateless with respect to the world: every action is a
function of the current `SimState` plus per-episode waypoint offsets, so it
recovers naturally from pushes and missed grasps.
"""

import logging

import numpy as np

from ..errors import UnknownObject, UnreachableTarget
from ..schema.observation import Action
from .world import SimState, edge_distance

logger = logging.getLogger(__name__)

TOL = 1e-6
PUSH_CLEARANCE = 0.03
ALIGN_TOL = 1e-3


def _hover_or_rise(state: SimState, x: float, y: float) -> np.ndarray:
    """Move laterally at hover height; rise in place first when low."""
    gx, gy, gz, _ = state.gripper
    cfg = state.config
    if gz < cfg.z_low:
        return np.array([gx, gy, cfg.z_hover, 1.0])
    return np.array([x, y, cfg.z_hover, 1.0])


def grasp_action(state: SimState, target_id: str, offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Hover above the target, descend, close, lift."""
    cfg = state.config
    gx, gy, gz, gg = state.gripper
    if state.held_object == target_id:
        return np.array([gx, gy, 1.0, 0.0])
    if state.held_object is not None:
        return np.array([gx, gy, gz, 1.0])

    px, py, _ = state.pose_of(target_id)
    tx, ty = px + offset[0], py + offset[1]
    if max(abs(gx - tx), abs(gy - ty)) > TOL:
        return _hover_or_rise(state, tx, ty)
    if gz > cfg.z_grasp + TOL:
        if gg < 1.0 - TOL and gz >= cfg.z_low:
            return np.array([tx, ty, gz, 1.0])
        return np.array([tx, ty, cfg.z_grasp, 1.0])
    if gg > TOL:
        return np.array([tx, ty, cfg.z_grasp, 0.0])
    # closed at grasp height with nothing held: reopen and back off
    return np.array([tx, ty, cfg.z_hover, 1.0])


def push_action(state: SimState, target_id: str) -> np.ndarray | None:
    """Push a pushable object toward its nearest table edge.

    Returns None once the object is grippable (caller switches to grasping).
    """
    cfg = state.config
    obj = state.scene.object(target_id)
    pose = state.pose_of(target_id)
    _, normal = edge_distance(pose, cfg)
    if obj.size - edge_distance(pose, cfg)[0] >= cfg.overhang_fraction * obj.size:
        return None

    gx, gy, gz, _ = state.gripper
    center = np.array(pose[:2])
    contact = obj.size + cfg.push_radius
    rel = np.array([gx, gy]) - center
    along = float(np.dot(rel, normal))
    across = float(rel[0] * normal[1] - rel[1] * normal[0])

    if gz <= cfg.z_grasp + TOL and along < 0 and abs(across) < ALIGN_TOL:
        nxt = np.array([gx, gy]) + normal * cfg.delta_max
        return np.array([nxt[0], nxt[1], cfg.z_grasp, 1.0])

    pre = center - normal * (contact + PUSH_CLEARANCE)
    if max(abs(gx - pre[0]), abs(gy - pre[1])) > TOL:
        return _hover_or_rise(state, float(pre[0]), float(pre[1]))
    return np.array([pre[0], pre[1], cfg.z_grasp, 1.0])


def _check_target(state: SimState, target_id: str, task_kind: str) -> None:
    obj = state.scene.object(target_id)
    if obj is None:
        raise UnknownObject(f"Unknown object id: {target_id}")
    if task_kind == "grasp" and not obj.graspable:
        raise UnreachableTarget(f"{target_id} is not graspable")
    if task_kind == "nonprehensile" and not (obj.graspable or obj.pushable):
        raise UnreachableTarget(f"{target_id} can be neither grasped nor pushed")


def scripted_expert(
    state: SimState,
    target_id: str,
    task_kind: str = "grasp",
    offset: tuple[float, float] = (0.0, 0.0),
) -> Action:
    """Noiseless expert action for the current state."""
    _check_target(state, target_id, task_kind)
    if task_kind == "nonprehensile" and state.held_object != target_id:
        pushed = push_action(state, target_id)
        if pushed is not None:
            return Action(target=np.clip(pushed, 0.0, 1.0))
    return Action(target=np.clip(grasp_action(state, target_id, offset), 0.0, 1.0))


class ScriptedExpert:
    """Expert with bounded Gaussian grasp-point noise drawn once per episode."""

    def __init__(self, target_id: str, task_kind: str, rng: np.random.Generator, noise_std: float = 0.01):
        self.target_id = target_id
        self.task_kind = task_kind
        self.rng = rng
        self.noise_std = noise_std
        self.offset = (0.0, 0.0)

    def begin(self, state: SimState) -> None:
        _check_target(state, self.target_id, self.task_kind)
        bound = 0.4 * state.config.r_grasp
        raw = self.rng.normal(0.0, self.noise_std, size=2) if self.noise_std > 0 else np.zeros(2)
        self.offset = tuple(float(v) for v in np.clip(raw, -bound, bound))
        logger.debug("expert offset for %s: %s", self.target_id, self.offset)

    def act(self, state: SimState) -> Action:
        return scripted_expert(state, self.target_id, self.task_kind, self.offset)
