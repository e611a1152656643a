"""Attackable-pixel selection and the genome coordinate system.

The attention map is binarized (nonzero value -> candidate pixel), then
refined by parity: neighboring pixels carry redundant information, so only
one of every two is kept, i.e. the checkerboard cells whose 1-based (l + w)
coordinate sum is even. The surviving spatial positions, crossed with the
image channels, define the ordered decision variables of the search.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionMap
from .images import DimensionMismatch, read_pgm, write_pgm

MASK_SEGMENTS = ("even", "odd")


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Boolean spatial mask over a target image."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {arr.shape}")
        arr = arr.astype(bool).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())


def full_mask(height: int, width: int) -> PixelMask:
    return PixelMask(np.ones((height, width), dtype=bool))


def checkerboard(height: int, width: int, segment: str = "even") -> PixelMask:
    """Cells whose 1-based coordinate sum has the given parity."""
    if segment not in MASK_SEGMENTS:
        raise ValueError(f"segment must be one of {MASK_SEGMENTS}, got {segment!r}")
    ls, ws = np.indices((height, width))
    want = 0 if segment == "even" else 1
    # 1-based (l + w) parity equals 0-based (l + w) parity.
    return PixelMask((ls + ws) % 2 == want)


def binarize(amap: AttentionMap) -> PixelMask:
    """Candidate pixel wherever the attention value is nonzero."""
    return PixelMask(amap.values != 0)


def parity_refine(mask: PixelMask, segment: str = "even") -> PixelMask:
    """Keep one pixel of every two neighboring ones: intersect with the
    checkerboard segment. The result is always a subset of the input."""
    board = checkerboard(mask.height, mask.width, segment)
    return PixelMask(mask.bits & board.bits)


@dataclass(frozen=True, eq=False)
class VariableIndex:
    """Deterministic bijection between genome slots and (l, w, c) triples.

    Triples are strictly row-major: by row l, then column w, then channel c.
    Every selected spatial position contributes one variable per channel.
    """

    height: int
    width: int
    channels: int
    ls: np.ndarray
    ws: np.ndarray
    cs: np.ndarray

    def __post_init__(self):
        for name in ("ls", "ws", "cs"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        flat = (self.ls * self.width + self.ws) * self.channels + self.cs
        flat.setflags(write=False)
        object.__setattr__(self, "flat_positions", flat)
        lookup = {
            (int(l), int(w), int(c)): i
            for i, (l, w, c) in enumerate(zip(self.ls, self.ws, self.cs))
        }
        object.__setattr__(self, "_lookup", lookup)

    @property
    def size(self) -> int:
        return int(self.ls.size)

    def __len__(self) -> int:
        return self.size

    def triple(self, slot: int) -> tuple[int, int, int]:
        return int(self.ls[slot]), int(self.ws[slot]), int(self.cs[slot])

    def slot_of(self, l: int, w: int, c: int) -> int:
        try:
            return self._lookup[(l, w, c)]
        except KeyError:
            raise ValueError(f"position ({l}, {w}, {c}) is not an indexed variable") from None


def build_index(mask: PixelMask, channels: int) -> VariableIndex:
    """One variable per (set spatial bit x channel), row-major order."""
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    ys, xs = np.nonzero(mask.bits)  # C-order: row-major by construction
    ls = np.repeat(ys, channels)
    ws = np.repeat(xs, channels)
    cs = np.tile(np.arange(channels, dtype=np.int64), ys.size)
    return VariableIndex(mask.height, mask.width, channels, ls, ws, cs)


def build_attack_mask(
    height: int,
    width: int,
    amap: AttentionMap | None,
    use_attention: bool = True,
    use_parity: bool = True,
    segment: str = "even",
) -> tuple[PixelMask, bool]:
    """Compose the final attackable-pixel mask for an attack run.

    Returns (mask, fallback_used). An empty composition falls back to the
    checkerboard over the full image so the attack stays runnable.
    """
    mask = full_mask(height, width)
    if use_attention:
        if amap is None:
            raise ValueError("attention enabled but no attention map supplied")
        if (amap.height, amap.width) != (height, width):
            raise DimensionMismatch(
                f"attention map {amap.height}x{amap.width} does not match "
                f"image {height}x{width}"
            )
        mask = binarize(amap)
    if use_parity:
        mask = parity_refine(mask, segment)
    if mask.popcount == 0:
        warnings.warn(
            "attackable-pixel mask is empty; falling back to the full-image "
            "checkerboard",
            RuntimeWarning,
            stacklevel=2,
        )
        return checkerboard(height, width, segment), True
    return mask, False


def save_mask(mask: PixelMask, path: str | Path) -> None:
    """PGM export: 255 = included, 0 = excluded."""
    write_pgm(path, np.where(mask.bits, 255, 0).astype(np.uint8))


def load_mask(path: str | Path) -> PixelMask:
    """PGM import; any nonzero pixel counts as included."""
    return PixelMask(read_pgm(path) != 0)
