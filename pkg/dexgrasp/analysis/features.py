"""
PCA visualization of frozen patch features.

All patches of all images are pooled. The first principal component is
thresholded (Otsu) to separate foreground from background; a second PCA on
the foreground patches maps its top three components to RGB.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict
from sklearn.decomposition import PCA

from ..perception.encoder import encode
from ..schema.config import EncoderSpec
from ..utils.imaging import enlarge

logger = logging.getLogger(__name__)

DEGENERATE_STD = 1e-9
BASELINE_LEVEL = 127.5


class FeatureViz(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: list[np.ndarray]
    foreground: list[np.ndarray]
    components: int
    degenerate: bool = False


def otsu_threshold(values: np.ndarray) -> float:
    """Split point maximizing between-class variance; midpoint between neighbours."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    uniq, counts = np.unique(v, return_counts=True)
    if len(uniq) < 2:
        return float(uniq[0]) if len(uniq) else 0.0
    weights = counts / counts.sum()
    w0 = np.cumsum(weights)[:-1]
    mu_cum = np.cumsum(weights * uniq)[:-1]
    mu_total = float((weights * uniq).sum())
    w1 = 1.0 - w0
    between = (mu_total * w0 - mu_cum) ** 2 / (w0 * w1)
    i = int(np.argmax(between))
    return float(0.5 * (uniq[i] + uniq[i + 1]))


def fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each component so its largest-magnitude loading is positive."""
    comps = np.array(components, dtype=np.float64)
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return comps


def _project(features: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    pca = PCA(n_components=n, svd_solver="full").fit(features)
    comps = fix_signs(pca.components_)
    return (features - pca.mean_) @ comps.T, comps


def patch_features(images: list[np.ndarray], spec: EncoderSpec) -> tuple[list[np.ndarray], tuple[int, int]]:
    """Per-image L×D features with the flat-image response subtracted."""
    side = np.asarray(images[0]).shape[0]
    baseline = encode(np.full((side, side, 3), BASELINE_LEVEL), spec, side).tokens
    grids = [encode(img, spec, side) for img in images]
    return [g.tokens - baseline for g in grids], grids[0].grid


def pca_feature_viz(images: list[np.ndarray], spec: EncoderSpec, enlarge_factor: int = 1) -> FeatureViz:
    """RGB feature images on the patch grid, channels normalized to [0, 1]."""
    if not images:
        raise ValueError("pca_feature_viz needs at least one image")
    per_image, grid = patch_features(images, spec)
    n_patches = grid[0] * grid[1]
    X = np.concatenate(per_image, axis=0)

    if X.std(axis=0).max() < DEGENERATE_STD:
        logger.warning("feature matrix has zero variance; visualization is degenerate")
        blank = [enlarge(np.zeros(grid + (3,)), enlarge_factor) for _ in images]
        return FeatureViz(images=blank, foreground=[np.zeros(grid, dtype=bool) for _ in images],
                          components=0, degenerate=True)

    first, _ = _project(X, 1)
    threshold = otsu_threshold(first[:, 0])
    fg = first[:, 0] > threshold
    if not fg.any():
        fg[:] = True

    centered = X[fg] - X[fg].mean(axis=0)
    rank = int(np.linalg.matrix_rank(centered)) if fg.sum() > 1 else 0
    n = min(3, rank)
    rgb = np.zeros((len(X), 3))
    if n > 0:
        scores, _ = _project(X[fg], n)
        lo, hi = scores.min(axis=0), scores.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        rgb[np.flatnonzero(fg), :n] = np.where(hi > lo, (scores - lo) / span, 0.0)

    out_images, out_fg = [], []
    for i in range(len(images)):
        block = slice(i * n_patches, (i + 1) * n_patches)
        out_images.append(enlarge(rgb[block].reshape(grid + (3,)), enlarge_factor))
        out_fg.append(fg[block].reshape(grid))
    return FeatureViz(images=out_images, foreground=out_fg, components=n)


def to_uint8(viz_image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(viz_image * 255.0), 0, 255).astype(np.uint8)
