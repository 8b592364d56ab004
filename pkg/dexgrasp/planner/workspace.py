"""
Workspace cropping: keep the table region, paint everything else white.
"""

import numpy as np

WHITE = (255, 255, 255)


def crop_workspace(head_image: np.ndarray, workspace: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Copy of `head_image` with pixels outside (x1, y1, x2, y2) set to white.

    `workspace=None` keeps the full frame.
    """
    image = np.asarray(head_image)
    if workspace is None:
        return image.copy()
    h, w = image.shape[:2]
    x1, y1, x2, y2 = workspace
    x1, y1 = max(0, x1), max(0, y1)
    x2, y2 = min(w, x2), min(h, y2)
    out = np.empty_like(image)
    out[:] = WHITE
    if x1 < x2 and y1 < y2:
        out[y1:y2, x1:x2] = image[y1:y2, x1:x2]
    return out
