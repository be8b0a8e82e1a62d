"""Embedding model backends.

Two pretrained vision foundation models (loaded lazily; they need torch,
transformers, and downloadable weights) plus a tiny deterministic
reference model used in tests and offline smoke runs.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ModelUnavailable


class ToyProjection:
    """Deterministic stand-in model: grayscale 16x16 pixels through a fixed
    random projection. No heavyweight dependencies, bit-stable output."""

    model_id = "toy-proj-64"
    dim = 64
    preprocess = "grayscale,resize16x16,bilinear,scale1/255"

    def __init__(self):
        rng = np.random.default_rng(0xEDB)
        self._proj = rng.standard_normal((256, self.dim)) / 16.0

    def embed_batch(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for img in images:
            small = img.convert("L").resize((16, 16), Image.BILINEAR)
            pixels = np.asarray(small, dtype=np.float64).reshape(-1) / 255.0
            rows.append(pixels @ self._proj)
        return np.stack(rows).astype(np.float32)


class ClipVitB16:
    """CLIP ViT-B/16 image tower (512-d) via transformers."""

    model_id = "clip-vit-b16"
    dim = 512
    preprocess = "clip-default(openai/clip-vit-base-patch16)"
    hub_name = "openai/clip-vit-base-patch16"

    def __init__(self):
        try:
            import torch
            from transformers import CLIPImageProcessor, CLIPVisionModelWithProjection

            self._torch = torch
            self._proc = CLIPImageProcessor.from_pretrained(self.hub_name)
            self._model = CLIPVisionModelWithProjection.from_pretrained(self.hub_name)
            self._model.eval()
        except Exception as e:
            raise ModelUnavailable(f"{self.model_id}: {e}") from e

    def embed_batch(self, images: list[Image.Image]) -> np.ndarray:
        inputs = self._proc(images=images, return_tensors="pt")
        with self._torch.no_grad():
            out = self._model(**inputs)
        return out.image_embeds.cpu().numpy().astype(np.float32)


class DinoV2B:
    """DINOv2 ViT-B (768-d CLS token) via transformers."""

    model_id = "dinov2-vitb"
    dim = 768
    preprocess = "dinov2-default(facebook/dinov2-base)"
    hub_name = "facebook/dinov2-base"

    def __init__(self):
        try:
            import torch
            from transformers import AutoImageProcessor, AutoModel

            self._torch = torch
            self._proc = AutoImageProcessor.from_pretrained(self.hub_name)
            self._model = AutoModel.from_pretrained(self.hub_name)
            self._model.eval()
        except Exception as e:
            raise ModelUnavailable(f"{self.model_id}: {e}") from e

    def embed_batch(self, images: list[Image.Image]) -> np.ndarray:
        inputs = self._proc(images=images, return_tensors="pt")
        with self._torch.no_grad():
            out = self._model(**inputs)
        return out.pooler_output.cpu().numpy().astype(np.float32)


MODELS = {
    ToyProjection.model_id: ToyProjection,
    ClipVitB16.model_id: ClipVitB16,
    DinoV2B.model_id: DinoV2B,
}


def load_model(model_id: str):
    if model_id not in MODELS:
        raise ModelUnavailable(
            f"unknown model {model_id!r}; supported: {sorted(MODELS)}"
        )
    return MODELS[model_id]()
