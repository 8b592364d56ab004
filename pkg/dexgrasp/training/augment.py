"""
Color jitter for demonstration images.

Brightness, contrast and saturation go through Pillow's ImageEnhance; hue
is a cyclic shift of the H channel in Pillow's HSV mode. Each factor is
drawn uniformly from [1 - delta, 1 + delta] (hue: [-delta, delta] turns).
"""

import numpy as np
from PIL import Image, ImageEnhance

from ..schema.config import JitterParams
from ..utils.imaging import to_pil


def sample_factors(rng: np.random.Generator, params: JitterParams) -> dict[str, float]:
    """Draw one set of jitter factors; zero deltas yield identity factors without consuming rng."""
    factors = {}
    for name in ("brightness", "contrast", "saturation"):
        delta = getattr(params, name)
        factors[name] = float(rng.uniform(1.0 - delta, 1.0 + delta)) if delta > 0 else 1.0
    factors["hue"] = float(rng.uniform(-params.hue, params.hue)) if params.hue > 0 else 0.0
    return factors


def shift_hue(image: Image.Image, shift: float) -> Image.Image:
    if shift == 0.0:
        return image
    h, s, v = image.convert("HSV").split()
    offset = int(round(shift * 255))
    h = h.point(lambda p: (p + offset) % 256)
    return Image.merge("HSV", (h, s, v)).convert("RGB")


def apply_factors(image: np.ndarray, factors: dict[str, float]) -> np.ndarray:
    if (factors["brightness"], factors["contrast"], factors["saturation"], factors["hue"]) == (1.0, 1.0, 1.0, 0.0):
        return image
    pil = to_pil(image)
    if factors["brightness"] != 1.0:
        pil = ImageEnhance.Brightness(pil).enhance(factors["brightness"])
    if factors["contrast"] != 1.0:
        pil = ImageEnhance.Contrast(pil).enhance(factors["contrast"])
    if factors["saturation"] != 1.0:
        pil = ImageEnhance.Color(pil).enhance(factors["saturation"])
    pil = shift_hue(pil, factors["hue"])
    return np.asarray(pil, dtype=np.uint8).copy()


def color_jitter(image: np.ndarray, rng: np.random.Generator, params: JitterParams) -> np.ndarray:
    """H×W×3 uint8 → jittered H×W×3 uint8; identity when every delta is 0."""
    return apply_factors(image, sample_factors(rng, params))
