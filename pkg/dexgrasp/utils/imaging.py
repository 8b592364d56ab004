"""
Image helpers: PNG encode/decode, base64 payloads for HTTP adapters, and
nearest-neighbour enlargement for figures.
"""

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image


def to_pil(image: np.ndarray) -> Image.Image:
    """uint8 H×W×3 (or H×W / H×W×1 mask) array to a PIL image."""
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return Image.fromarray(arr)


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    to_pil(image).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    return np.asarray(img).copy()


def png_base64(image: np.ndarray) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def decode_png_base64(payload: str) -> np.ndarray:
    return decode_png(base64.b64decode(payload))


def mask_to_png_base64(mask: np.ndarray) -> str:
    """Binary mask as a 0/255 grayscale PNG."""
    m = np.asarray(mask)
    if m.ndim == 3:
        m = m[..., 0]
    return png_base64((m > 0).astype(np.uint8) * 255)


def mask_from_png_base64(payload: str) -> np.ndarray:
    arr = decode_png_base64(payload)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return (arr > 127).astype(np.uint8)[..., None]


def save_png(path: str | Path, image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    to_pil(image).save(path, format="PNG")
    return path


def enlarge(image: np.ndarray, factor: int) -> np.ndarray:
    """Integer nearest-neighbour upscale (figures only)."""
    if factor <= 1:
        return np.asarray(image)
    return np.repeat(np.repeat(np.asarray(image), factor, axis=0), factor, axis=1)
