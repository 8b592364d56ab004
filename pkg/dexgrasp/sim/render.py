"""
Top-down rasterizer for the tabletop world.

Every pixel is evaluated at its world coordinate (pixel centre), so the head
camera and the wrist crop share one code path. Rendering produces both the
lit RGB image and an id-buffer (-1 background, -2 gripper, otherwise the
object's index in the scene).
"""

import numpy as np

from ..schema.scene import Background, BackgroundSpec, LightingSpec, ObjectSpec, SceneSpec, Shape

BACKGROUND_ID = -1
GRIPPER_ID = -2

TABLE_WHITE = (244, 244, 244)
FLOOR = (90, 90, 90)
GRIPPER_COLOR = (40, 40, 40)
FINGER_COLOR = (60, 60, 60)
CHECKER_DARK = (120, 120, 120)
WOOD_BASE = (180, 120, 70)

BAR_ASPECT = 0.35


def pixel_grid(bounds: tuple[float, float, float, float], n: int) -> tuple[np.ndarray, np.ndarray]:
    """World (X, Y) of every pixel centre; row 0 is the top (largest y)."""
    x0, y0, x1, y1 = bounds
    centers = (np.arange(n, dtype=np.float64) + 0.5) / n
    xs = x0 + centers * (x1 - x0)
    ys = y1 - centers * (y1 - y0)
    return np.meshgrid(xs, ys)


def footprint(obj: ObjectSpec, pose: tuple[float, float, float], X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    x, y, theta = pose
    dx, dy = X - x, Y - y
    s = obj.size
    if obj.shape == Shape.CIRCLE:
        return dx * dx + dy * dy <= s * s
    c, si = np.cos(theta), np.sin(theta)
    u = c * dx + si * dy
    v = -si * dx + c * dy
    if obj.shape == Shape.SQUARE:
        return (np.abs(u) <= s) & (np.abs(v) <= s)
    if obj.shape == Shape.BAR:
        return (np.abs(u) <= s) & (np.abs(v) <= BAR_ASPECT * s)
    # equilateral triangle with circumradius s, apex along local +v
    inside = np.ones_like(X, dtype=bool)
    for angle in (-np.pi / 2, np.pi / 6, 5 * np.pi / 6):
        inside &= u * np.cos(angle) + v * np.sin(angle) <= 0.5 * s
    return inside


def circumradius(obj: ObjectSpec) -> float:
    """Radius of the smallest centred disc containing the footprint."""
    if obj.shape == Shape.SQUARE:
        return obj.size * np.sqrt(2.0)
    if obj.shape == Shape.BAR:
        return obj.size * np.sqrt(1.0 + BAR_ASPECT**2)
    return obj.size


def background_rgb(
    spec: BackgroundSpec,
    X: np.ndarray,
    Y: np.ndarray,
    table: tuple[float, float, float, float],
    seed: int,
) -> np.ndarray:
    """Unlit background colours; every channel value is an even integer."""
    tx0, ty0, tx1, ty1 = table
    out = np.empty(X.shape + (3,), dtype=np.float64)
    out[:] = FLOOR
    on_table = (X >= tx0) & (X <= tx1) & (Y >= ty0) & (Y <= ty1)

    if spec.kind == Background.WHITE:
        pattern = np.broadcast_to(np.asarray(TABLE_WHITE, dtype=np.float64), out.shape)
    elif spec.kind == Background.CHECKER:
        cell = (tx1 - tx0) / spec.scale
        parity = (np.floor((X - tx0) / cell) + np.floor((Y - ty0) / cell)) % 2
        pattern = np.where(parity[..., None] == 0, np.asarray(TABLE_WHITE), np.asarray(CHECKER_DARK))
    elif spec.kind == Background.COLORFUL_CLOTH:
        rng = np.random.default_rng([seed, 7])
        colors = rng.integers(20, 118, size=(spec.scale, spec.scale, 3)) * 2
        ci = np.clip(((X - tx0) / (tx1 - tx0) * spec.scale).astype(int), 0, spec.scale - 1)
        ri = np.clip(((Y - ty0) / (ty1 - ty0) * spec.scale).astype(int), 0, spec.scale - 1)
        pattern = colors[ri, ci].astype(np.float64)
    else:
        grain = 0.75 + 0.25 * np.sin(2 * np.pi * spec.scale * (X + 0.05 * np.sin(6 * np.pi * Y)))
        pattern = 2.0 * np.rint(np.asarray(WOOD_BASE, dtype=np.float64) * grain[..., None] / 2.0)

    out[on_table] = pattern[on_table]
    return out


def light_gains(spec: LightingSpec, step: int, seed: int) -> np.ndarray:
    """Per-channel multiplicative gains at a given timestep."""
    gains = spec.gain * np.asarray(spec.tint, dtype=np.float64)
    if spec.hue_rate:
        phase = np.random.default_rng([seed, 11]).uniform(0.0, 2 * np.pi)
        angle = phase + 2 * np.pi * spec.hue_rate * step + 2 * np.pi * np.arange(3) / 3
        gains = gains * (0.55 + 0.45 * np.cos(angle))
    return gains


def apply_lighting(rgb: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Pixel-wise gain, rounded and clamped to uint8."""
    return np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * gains), 0, 255).astype(np.uint8)


def rasterize(
    scene: SceneSpec,
    poses: list[tuple[float, float, float]],
    held_index: int | None,
    bounds: tuple[float, float, float, float],
    n: int,
    table: tuple[float, float, float, float],
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Unlit RGB and id-buffer of the objects over the background.

    The held object is painted last so it occludes anything beneath it.
    """
    X, Y = pixel_grid(bounds, n)
    rgb = background_rgb(scene.background, X, Y, table, scene.rng_seed)
    ids = np.full((n, n), BACKGROUND_ID, dtype=np.int16)
    order = [i for i in range(len(scene.objects)) if i != held_index]
    if held_index is not None:
        order.append(held_index)
    for i in order:
        obj = scene.objects[i]
        inside = footprint(obj, poses[i], X, Y)
        rgb[inside] = obj.color
        ids[inside] = i
    return rgb, ids, (X, Y)


def draw_gripper_marker(
    rgb: np.ndarray,
    ids: np.ndarray,
    X: np.ndarray,
    Y: np.ndarray,
    gripper: tuple[float, float, float, float],
) -> None:
    """Hollow square at the gripper's planar position; side grows with aperture."""
    gx, gy, _, g = gripper
    n = X.shape[0]
    pixel = abs(X[0, 1] - X[0, 0]) if n > 1 else 1.0
    half = 0.02 + 0.02 * g
    cheb = np.maximum(np.abs(X - gx), np.abs(Y - gy))
    ring = (cheb <= half) & (cheb > half - pixel)
    rgb[ring] = GRIPPER_COLOR
    ids[ring] = GRIPPER_ID


def draw_fingers(rgb: np.ndarray, aperture: float) -> None:
    """Two finger bars in the lower half of the wrist view, spaced by aperture."""
    n = rgb.shape[0]
    width = max(1, n // 16)
    center = n // 2
    offset = int(round(n / 16 + aperture * n / 4))
    rows = slice(n // 2, n)
    for col in (center - offset - width, center + offset):
        lo, hi = max(col, 0), min(col + width, n)
        if lo < hi:
            rgb[rows, lo:hi] = FINGER_COLOR


def wrist_bounds(gripper: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    """Square crop centred at the gripper; closer to the table means more zoom."""
    gx, gy, gz, _ = gripper
    half = 0.1 + 0.3 * gz
    return (gx - half, gy - half, gx + half, gy + half)
