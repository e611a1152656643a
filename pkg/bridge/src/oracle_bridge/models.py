"""Classifier backends for the bridge.

Built-in backends need no ML stack: ``echo:<p1,p2,...>`` always replies with
a fixed vector, ``uniform:<k>`` with 1/k per class. ``torchvision:<name>``
loads a pretrained torchvision model lazily; the bridge owns preprocessing
(resize and normalization) so callers always submit raw 8-bit pixels at the
stored image's native size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Preprocess:
    """Deterministic preprocessing applied before the model forward pass."""

    resize: int = 224            # square side the input is resized to
    resize_policy: str = "stretch"  # or "center-crop"
    mean: tuple[float, ...] = (0.485, 0.456, 0.406)
    std: tuple[float, ...] = (0.229, 0.224, 0.225)


class EchoModel:
    """Replies with the same (pre-set) vector for every image."""

    def __init__(self, probs):
        vec = np.asarray(probs, dtype=np.float64).ravel()
        if vec.size == 0 or np.any(vec < 0) or vec.sum() <= 0:
            raise ValueError("echo vector must be nonnegative with positive sum")
        self.vec = vec
        self.num_classes = vec.size

    def predict(self, pixels: np.ndarray) -> np.ndarray:
        return self.vec.copy()


class UniformModel:
    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ValueError("need at least one class")
        self.num_classes = num_classes

    def predict(self, pixels: np.ndarray) -> np.ndarray:
        return np.full(self.num_classes, 1.0 / self.num_classes)


class TorchvisionModel:
    """Pretrained torchvision classifier with bridge-owned preprocessing."""

    def __init__(self, name: str, preprocess: Preprocess):
        import torch
        import torchvision.models as tvm

        self._torch = torch
        factory = getattr(tvm, name, None)
        if factory is None:
            raise ValueError(f"unknown torchvision model {name!r}")
        self.model = factory(weights="DEFAULT")
        self.model.eval()
        self.preprocess = preprocess
        self.num_classes = 1000

    def _prepare(self, pixels: np.ndarray):
        torch = self._torch
        x = torch.from_numpy(pixels.astype(np.float32) / 255.0)
        if x.shape[2] == 1:
            x = x.repeat(1, 1, 3)
        x = x.permute(2, 0, 1).unsqueeze(0)
        size = self.preprocess.resize
        if self.preprocess.resize_policy == "center-crop":
            short = min(x.shape[2], x.shape[3])
            scale = size / short
            new_hw = (round(x.shape[2] * scale), round(x.shape[3] * scale))
            x = torch.nn.functional.interpolate(
                x, size=new_hw, mode="bilinear", align_corners=False
            )
            top = (x.shape[2] - size) // 2
            left = (x.shape[3] - size) // 2
            x = x[:, :, top : top + size, left : left + size]
        else:
            x = torch.nn.functional.interpolate(
                x, size=(size, size), mode="bilinear", align_corners=False
            )
        mean = torch.tensor(self.preprocess.mean).view(1, 3, 1, 1)
        std = torch.tensor(self.preprocess.std).view(1, 3, 1, 1)
        return (x - mean) / std

    def predict(self, pixels: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            logits = self.model(self._prepare(pixels))
            probs = torch.softmax(logits[0], dim=0)
        return probs.numpy().astype(np.float64)


def load_model(spec: str, preprocess: Preprocess):
    """Build a backend from its spec string."""
    kind, sep, rest = spec.partition(":")
    if kind == "echo" and sep:
        return EchoModel([float(v) for v in rest.split(",")])
    if kind == "uniform" and sep:
        return UniformModel(int(rest))
    if kind == "torchvision" and sep:
        return TorchvisionModel(rest, preprocess)
    raise ValueError(
        f"unknown model spec {spec!r} (expected echo:<p,..>, uniform:<k>, "
        f"or torchvision:<name>)"
    )
