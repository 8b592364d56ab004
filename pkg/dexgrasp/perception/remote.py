"""
HTTP adapters for external perception services.

Wire protocol (JSON):
    POST {endpoint}/encode   {image}              -> {tokens, grid}
    POST {endpoint}/segment  {image, bbox}        -> {mask}
    POST {endpoint}/track    {session, image[, mask]} -> {mask}
Images and masks travel as base64 PNG.
"""

import itertools
import logging
import os

import numpy as np
import requests
import torch
from torch import nn

from ..errors import RemoteServiceError, WrongResolution
from ..schema.config import EncoderSpec, PerceptionConfig
from ..schema.observation import BBox
from ..utils.imaging import mask_from_png_base64, mask_to_png_base64, png_base64
from .encoder import FeatureGrid

logger = logging.getLogger(__name__)

_sessions = itertools.count()


class PerceptionClient:
    def __init__(self, endpoint: str, timeout_s: float = 30.0, max_retries: int = 2,
                 session: requests.Session | None = None):
        if not endpoint:
            raise RemoteServiceError("No perception endpoint configured (set PERCEPTION_ENDPOINT)")
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.session = session or requests.Session()

    @classmethod
    def from_config(cls, config: PerceptionConfig) -> "PerceptionClient":
        return cls(config.endpoint, config.timeout_s)

    @classmethod
    def from_env(cls) -> "PerceptionClient":
        return cls(os.environ.get("PERCEPTION_ENDPOINT", ""))

    def post(self, route: str, payload: dict) -> dict:
        url = f"{self.endpoint}/{route}"
        last_error = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self.session.post(url, json=payload, timeout=self.timeout_s)
                response.raise_for_status()
                return response.json()
            except (requests.RequestException, ValueError) as e:
                last_error = e
                logger.warning("POST %s failed (attempt %d): %s", url, attempt + 1, e)
        raise RemoteServiceError(f"POST {url} failed after {self.max_retries + 1} attempts: {last_error}")

    def encode(self, image: np.ndarray, source: str = "head") -> FeatureGrid:
        body = self.post("encode", {"image": png_base64(image)})
        return FeatureGrid(tokens=np.asarray(body["tokens"], dtype=np.float64),
                           grid=tuple(body["grid"]), source=source)

    def segment(self, image: np.ndarray, bbox: BBox) -> np.ndarray:
        body = self.post("segment", {"image": png_base64(image), "bbox": bbox.as_list()})
        return mask_from_png_base64(body["mask"])

    def track(self, session_id: str, image: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        payload = {"session": session_id, "image": png_base64(image)}
        if mask is not None:
            payload["mask"] = mask_to_png_base64(mask)
        return mask_from_png_base64(self.post("track", payload)["mask"])


class RemoteSegmenter:
    def __init__(self, client: PerceptionClient):
        self.client = client

    def segment(self, image: np.ndarray, bbox: BBox) -> np.ndarray:
        return self.client.segment(image, bbox)


class RemoteTracker:
    """One tracking session; the first call sends the initial mask."""

    def __init__(self, client: PerceptionClient):
        self.client = client
        self.session_id = f"session-{os.getpid()}-{next(_sessions)}"
        self.started = False

    def initialize(self, mask: np.ndarray, image: np.ndarray | None = None) -> np.ndarray:
        self.started = True
        if image is None:
            return mask
        return self.client.track(self.session_id, image, mask)

    def track(self, prev_mask: np.ndarray, image: np.ndarray) -> np.ndarray:
        if not self.started:
            return self.initialize(prev_mask, image)
        return self.client.track(self.session_id, image)


class RemoteEncoder(nn.Module):
    """Non-trainable encoder whose tokens come from the /encode endpoint."""

    def __init__(self, client: PerceptionClient, spec: EncoderSpec, image_side: int):
        super().__init__()
        self.client = client
        self.spec = spec
        self.image_side = image_side
        self.grid = image_side // spec.patch_side

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.shape[1] != self.image_side or images.shape[2] != self.image_side:
            raise WrongResolution(f"Expected {self.image_side}px images, got {tuple(images.shape)}")
        out = []
        for image in images.detach().cpu().numpy():
            grid = self.client.encode(np.clip(image, 0, 255).astype(np.uint8))
            if grid.tokens.shape != (self.num_tokens, self.spec.output_dim):
                raise WrongResolution(f"Remote encoder returned {grid.tokens.shape}")
            out.append(torch.from_numpy(grid.tokens))
        return torch.stack(out).to(device=images.device, dtype=torch.float32)
