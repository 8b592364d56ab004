"""
Attention overlays: scale the HSV value channel of the head image by the
rescaled attention map times a brightness gain.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv  # noqa: E402


def overlay_attention(image: np.ndarray, attention: np.ndarray, gain: float = 2.0) -> np.ndarray:
    """H×W×3 uint8 image and H×W nonnegative map → uint8 overlay.

    The map is rescaled by its maximum; value ← clamp(value × gain × map).
    """
    attention = np.asarray(attention, dtype=np.float64)
    if attention.shape != np.asarray(image).shape[:2]:
        raise ValueError(f"Map shape {attention.shape} does not match image {np.asarray(image).shape[:2]}")
    if (attention < 0).any():
        raise ValueError("Attention map must be nonnegative")
    peak = attention.max()
    scale = attention / peak if peak > 0 else np.zeros_like(attention)
    hsv = rgb_to_hsv(np.asarray(image, dtype=np.float64) / 255.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * gain * scale, 0.0, 1.0)
    return np.clip(np.rint(hsv_to_rgb(hsv) * 255.0), 0, 255).astype(np.uint8)


def save_panel(path: str | Path, panels: list[tuple[str, np.ndarray]], title: str | None = None) -> Path:
    """Row of labelled images written as one PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3.2), squeeze=False)
    for ax, (label, img) in zip(axes[0], panels):
        ax.imshow(img, interpolation="nearest")
        ax.set_title(label, fontsize=9)
        ax.axis("off")
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
