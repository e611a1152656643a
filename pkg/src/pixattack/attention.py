"""Attention maps for target images.

A small conv -> relu -> global-average-pooling -> linear network acts as a
white-box proxy; its class activation map (class-weighted sum of the final
feature maps) highlights the spatially salient region. Maps computed
elsewhere (e.g. from a real proxy network) can be loaded from PGM instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import (
    DimensionMismatch,
    FileFormatError,
    Image,
    read_pgm,
    round_half_away,
    write_pgm,
)

WEIGHTS_MAGIC = "gapnet-weights"
WEIGHTS_VERSION = 1


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """Single-channel 8-bit saliency map matching a target image spatially."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise DimensionMismatch(f"attention map must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("attention values outside [0, 255]")
            arr = arr.astype(np.uint8)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ProxyModel:
    """Fixed-weight conv/GAP classifier used only to produce attention maps.

    ``filters`` has shape (K, kh, kw, C) with odd kh, kw; ``class_weights``
    has shape (K, num_classes). The forward pass is: valid cross-correlation
    of the [0,1]-scaled image with each filter, strided subsampling, relu,
    global average pooling, then the linear class head.
    """

    filters: np.ndarray
    class_weights: np.ndarray
    stride: int = 1

    def __post_init__(self):
        filters = np.asarray(self.filters, dtype=np.float64)
        weights = np.asarray(self.class_weights, dtype=np.float64)
        if filters.ndim != 4:
            raise ValueError(f"filters must be (K, kh, kw, C), got shape {filters.shape}")
        k, kh, kw, c = filters.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"filter spatial size must be odd, got {kh}x{kw}")
        if c not in (1, 3):
            raise ValueError(f"filter channels must be 1 or 3, got {c}")
        if weights.ndim != 2 or weights.shape[0] != k:
            raise ValueError(
                f"class weights must be (K={k}, num_classes), got shape {weights.shape}"
            )
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        for name, arr in (("filters", filters), ("class_weights", weights)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_classes(self) -> int:
        return self.class_weights.shape[1]

    @property
    def input_channels(self) -> int:
        return self.filters.shape[3]

    def feature_maps(self, image: Image) -> np.ndarray:
        """Post-relu feature maps, shape (K, Hf, Wf)."""
        _, kh, kw, c = self.filters.shape
        if image.channels != c:
            raise DimensionMismatch(
                f"proxy expects {c}-channel input, image has {image.channels}"
            )
        if image.height < kh or image.width < kw:
            raise DimensionMismatch(
                f"image {image.height}x{image.width} smaller than {kh}x{kw} filter"
            )
        x = image.pixels.astype(np.float64) / 255.0
        windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
        fmaps = np.einsum("hwcij,kijc->khw", windows, self.filters)
        fmaps = fmaps[:, :: self.stride, :: self.stride]
        return np.maximum(fmaps, 0.0)

    def scores(self, image: Image) -> np.ndarray:
        """Pre-softmax class scores, shape (num_classes,)."""
        pooled = self.feature_maps(image).mean(axis=(1, 2))
        return pooled @ self.class_weights

    def predict(self, image: Image) -> int:
        return int(np.argmax(self.scores(image)))


def seed_proxy(
    seed: int,
    channels: int = 3,
    num_filters: int = 8,
    kernel: int = 3,
    stride: int = 2,
    num_classes: int = 10,
) -> ProxyModel:
    """Deterministic toy proxy: weights are a pure function of the seed."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(kernel * kernel * channels)
    filters = rng.normal(0.0, scale, size=(num_filters, kernel, kernel, channels))
    class_weights = rng.normal(0.0, 1.0, size=(num_filters, num_classes))
    return ProxyModel(filters, class_weights, stride=stride)


def _resize_axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n_out == 1 or n_in == 1:
        src = np.zeros(n_out)
    else:
        src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with corner alignment."""
    a = np.asarray(a, dtype=np.float64)
    y0, y1, fy = _resize_axis_coords(a.shape[0], out_h)
    x0, x1, fx = _resize_axis_coords(a.shape[1], out_w)
    rows = a[y0, :] * (1.0 - fy)[:, None] + a[y1, :] * fy[:, None]
    return rows[:, x0] * (1.0 - fx)[None, :] + rows[:, x1] * fx[None, :]


def resize_nearest(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    y0, y1, fy = _resize_axis_coords(a.shape[0], out_h)
    x0, x1, fx = _resize_axis_coords(a.shape[1], out_w)
    ys = np.where(fy < 0.5, y0, y1)
    xs = np.where(fx < 0.5, x0, x1)
    return a[np.ix_(ys, xs)]


def rescale_to_bytes(values: np.ndarray) -> np.ndarray:
    """Affine rescale of a nonnegative map so min -> 0 and max -> 255.

    All-zero input stays zero; a constant positive map becomes all 255
    (every pixel equally salient). The mapping is monotone.
    """
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi == 0.0:
        return np.zeros(values.shape, dtype=np.uint8)
    if hi == lo:
        return np.full(values.shape, 255, dtype=np.uint8)
    scaled = (values - lo) * (255.0 / (hi - lo))
    return round_half_away(scaled).astype(np.uint8)


def compute_cam(proxy: ProxyModel, image: Image, upsample: str = "bilinear") -> AttentionMap:
    """Class activation map of the proxy's top-1 class on the image.

    The class-weighted feature-map sum is rectified at zero, upsampled to
    image resolution, then rescaled to 8 bits via rescale_to_bytes.
    """
    fmaps = proxy.feature_maps(image)
    top = proxy.predict(image)
    raw = np.tensordot(proxy.class_weights[:, top], fmaps, axes=1)
    rect = np.maximum(raw, 0.0)
    if upsample == "bilinear":
        up = resize_bilinear(rect, image.height, image.width)
    elif upsample == "nearest":
        up = resize_nearest(rect, image.height, image.width)
    else:
        raise ValueError(f"unknown upsample mode {upsample!r}")
    return AttentionMap(rescale_to_bytes(up))


def load_attention(path: str | Path, height: int, width: int) -> AttentionMap:
    """Load an externally computed map from PGM; size must match the target."""
    values = read_pgm(path)
    if values.shape != (height, width):
        raise DimensionMismatch(
            f"{path}: attention map is {values.shape[0]}x{values.shape[1]}, "
            f"target image is {height}x{width}"
        )
    return AttentionMap(values)


def save_attention(amap: AttentionMap, path: str | Path) -> None:
    write_pgm(path, amap.values)


# --------------------------------------------------------------------------
# Proxy weight files: plain text, whitespace-tokenized.
#
#   gapnet-weights 1
#   stride <s>
#   filters <K> <kh> <kw> <C>
#   <K*kh*kw*C floats>
#   class_weights <K> <num_classes>
#   <K*num_classes floats>

def save_proxy(proxy: ProxyModel, path: str | Path) -> None:
    k, kh, kw, c = proxy.filters.shape
    lines = [
        f"{WEIGHTS_MAGIC} {WEIGHTS_VERSION}",
        f"stride {proxy.stride}",
        f"filters {k} {kh} {kw} {c}",
        " ".join(repr(float(v)) for v in proxy.filters.ravel()),
        f"class_weights {k} {proxy.num_classes}",
        " ".join(repr(float(v)) for v in proxy.class_weights.ravel()),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_proxy(path: str | Path) -> ProxyModel:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FileFormatError(f"{path}: empty weights file")
    header = lines[0].split()
    if len(header) != 2 or header[0] != WEIGHTS_MAGIC or header[1] != str(WEIGHTS_VERSION):
        raise FileFormatError(f"{path}: bad header {lines[0]!r}")
    fields: dict[str, list[str]] = {}
    i = 1
    order = []
    while i < len(lines):
        parts = lines[i].split()
        key = parts[0]
        fields[key] = parts[1:]
        order.append(key)
        if key in ("filters", "class_weights"):
            i += 1
            if i >= len(lines):
                raise FileFormatError(f"{path}: missing values for {key}")
            fields[key + "/values"] = lines[i].split()
        i += 1
    try:
        stride = int(fields["stride"][0])
        k, kh, kw, c = (int(v) for v in fields["filters"])
        filters = np.array([float(v) for v in fields["filters/values"]])
        wk, wm = (int(v) for v in fields["class_weights"])
        weights = np.array([float(v) for v in fields["class_weights/values"]])
    except (KeyError, ValueError, IndexError) as exc:
        raise FileFormatError(f"{path}: malformed weights file: {exc}") from exc
    if filters.size != k * kh * kw * c or weights.size != wk * wm or wk != k:
        raise FileFormatError(f"{path}: weight counts disagree with declared shapes")
    return ProxyModel(filters.reshape(k, kh, kw, c), weights.reshape(k, wm), stride=stride)
