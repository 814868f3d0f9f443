"""Patch-feature backbones: a deterministic mock and a self-supervised ViT.

A backbone maps a resized float image (H, W, 3) with H, W divisible by its
patch size to an (H/p, W/p, C) float32 token grid: the last transformer
block's patch tokens with the class token dropped.  The mock produces
cheap deterministic statistics so the export pipeline and file contract can
run in CI without weights or a network connection.
"""

from __future__ import annotations

import numpy as np


class BackboneLoadError(RuntimeError):
    """Weights could not be obtained or the model failed to build."""


class MockBackbone:
    """Deterministic per-patch statistics standing in for ViT tokens."""

    name = "mock"
    patch_size = 8
    channels = 8

    def extract(self, image: np.ndarray) -> np.ndarray:
        h, w = image.shape[:2]
        p = self.patch_size
        if h % p or w % p:
            raise ValueError("image dimensions must be divisible by the patch size")
        hp, wp = h // p, w // p
        patches = image.reshape(hp, p, wp, p, 3).transpose(0, 2, 1, 3, 4)
        means = patches.mean(axis=(2, 3))
        stds = patches.std(axis=(2, 3))
        rows = np.broadcast_to(np.arange(hp)[:, None, None] / max(hp - 1, 1), (hp, wp, 1))
        cols = np.broadcast_to(np.arange(wp)[None, :, None] / max(wp - 1, 1), (hp, wp, 1))
        feats = np.concatenate([means, stds, rows, cols], axis=2)
        return feats.astype(np.float32)


class DinoViTBackbone:
    """DINO-pretrained ViT-S/8 pulled from torch.hub.

    Patch tokens come from the last block; the position embedding is resized
    bilinearly to the token grid so non-square, non-default sizes work.
    """

    name = "dino_vits8"
    patch_size = 8

    def __init__(self, device: str = "cpu"):
        try:
            import torch

            self._torch = torch
            self._model = torch.hub.load("facebookresearch/dino:main", "dino_vits8")
        except Exception as exc:
            raise BackboneLoadError(f"could not load dino_vits8: {exc}") from exc
        self._model.eval()
        self._device = device
        self._model.to(device)
        self.channels = int(self._model.embed_dim)

    def _positional(self, hp: int, wp: int):
        torch = self._torch
        pos = self._model.pos_embed  # (1, 1 + n0, c)
        cls_pos, patch_pos = pos[:, :1], pos[:, 1:]
        n0 = patch_pos.shape[1]
        side = int(round(n0**0.5))
        grid = patch_pos.reshape(1, side, side, -1).permute(0, 3, 1, 2)
        grid = torch.nn.functional.interpolate(
            grid, size=(hp, wp), mode="bilinear", align_corners=False
        )
        grid = grid.permute(0, 2, 3, 1).reshape(1, hp * wp, -1)
        return torch.cat([cls_pos, grid], dim=1)

    def extract(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        h, w = image.shape[:2]
        p = self.patch_size
        if h % p or w % p:
            raise ValueError("image dimensions must be divisible by the patch size")
        hp, wp = h // p, w // p
        mean = np.array([0.485, 0.456, 0.406])
        std = np.array([0.229, 0.224, 0.225])
        x = (image / 255.0 - mean) / std
        tensor = torch.from_numpy(x.transpose(2, 0, 1)[None]).float().to(self._device)
        model = self._model
        with torch.no_grad():
            tokens = model.patch_embed(tensor)
            cls = model.cls_token.expand(1, -1, -1)
            tokens = torch.cat([cls, tokens], dim=1)
            tokens = tokens + self._positional(hp, wp)
            for block in model.blocks:
                tokens = block(tokens)
            tokens = model.norm(tokens)
        patch_tokens = tokens[0, 1:].cpu().numpy()  # cls token dropped
        return patch_tokens.reshape(hp, wp, -1).astype(np.float32)


def load_backbone(name: str, device: str = "cpu"):
    if name == "mock":
        return MockBackbone()
    if name == "dino_vits8":
        return DinoViTBackbone(device=device)
    raise BackboneLoadError(f"unknown backbone {name!r}")
