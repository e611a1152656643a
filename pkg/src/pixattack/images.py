"""8-bit images, sparse pixel perturbations, and PNG/PNM file I/O.

Images are row-major uint8 arrays of shape (height, width, channels) with
channels 1 (grayscale) or 3 (RGB). Perturbations are real-valued during
search; the image handed to a classifier is always re-quantized to valid
8-bit intensities (round half away from zero, then clamp to [0, 255]).

Supported file formats: PNG (via Pillow) plus binary PPM (P6) and PGM (P5)
with maxval 255. PGM doubles as the interchange format for masks and
attention maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterator

import numpy as np
from PIL import Image as PILImage

if TYPE_CHECKING:
    from .masking import VariableIndex

INTENSITY_MAX = 255


class DimensionMismatch(ValueError):
    """Shapes of image, mask, index, or perturbation disagree."""


class FileFormatError(ValueError):
    """Unsupported or malformed image file."""


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero."""
    v = np.asarray(values, dtype=np.float64)
    return np.where(v >= 0.0, np.floor(v + 0.5), np.ceil(v - 0.5))


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable 8-bit image, shape (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise DimensionMismatch(f"expected HxWxC pixel array, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise DimensionMismatch(f"channels must be 1 or 3, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"degenerate image shape {arr.shape}")
        if arr.dtype != np.uint8:
            info = np.asarray(arr)
            if info.size and (info.min() < 0 or info.max() > INTENSITY_MAX):
                raise ValueError("intensities outside [0, 255]")
            arr = arr.astype(np.uint8)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


def images_equal(a: Image, b: Image) -> bool:
    return a.shape == b.shape and bool(np.array_equal(a.pixels, b.pixels))


@dataclass(frozen=True, eq=False)
class SparsePerturbation:
    """Real-valued perturbation over a subset of indexed variables.

    ``slots`` are positions in a VariableIndex (each resolving to an
    (l, w, c) pixel coordinate), ``values`` the additive intensity changes.
    Zero-valued entries are legal and retained.
    """

    slots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        slots = np.asarray(self.slots, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if slots.shape != values.shape:
            raise DimensionMismatch(
                f"{slots.size} slots but {values.size} values"
            )
        if slots.size and slots.min() < 0:
            raise ValueError("negative variable slot")
        if np.unique(slots).size != slots.size:
            raise ValueError("duplicate variable slots")
        slots = slots.copy()
        values = values.copy()
        slots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_genome(cls, genome: np.ndarray) -> "SparsePerturbation":
        """Dense genome over all indexed variables, slot i = variable i."""
        genome = np.asarray(genome, dtype=np.float64)
        return cls(np.arange(genome.size, dtype=np.int64), genome)

    def __len__(self) -> int:
        return int(self.slots.size)

    def entries(self) -> Iterator[tuple[int, float]]:
        for s, v in zip(self.slots, self.values):
            yield int(s), float(v)


def _check_index(image: Image, index: "VariableIndex") -> None:
    if (index.height, index.width, index.channels) != image.shape:
        raise DimensionMismatch(
            f"index built for {(index.height, index.width, index.channels)} "
            f"but image is {image.shape}"
        )


def apply_perturbation(image: Image, pert: SparsePerturbation, index: "VariableIndex") -> Image:
    """Add the perturbation to the image, re-quantizing to valid intensities.

    Perturbed positions become clamp(round(u + x), 0, 255); all other pixels
    are untouched.
    """
    _check_index(image, index)
    if len(pert) and pert.slots.max() >= index.size:
        raise DimensionMismatch(
            f"slot {int(pert.slots.max())} out of range for index of size {index.size}"
        )
    flat = image.pixels.reshape(-1).copy()
    pos = index.flat_positions[pert.slots]
    stacked = flat[pos].astype(np.float64) + pert.values
    flat[pos] = np.clip(round_half_away(stacked), 0, INTENSITY_MAX).astype(np.uint8)
    return Image(flat.reshape(image.shape))


def effective_perturbation(
    image: Image, pert: SparsePerturbation, index: "VariableIndex"
) -> SparsePerturbation:
    """Integer change actually realized per entry after rounding and clamping.

    Keeps the same slots as the input, including entries that collapsed
    to zero.
    """
    _check_index(image, index)
    if len(pert) and pert.slots.max() >= index.size:
        raise DimensionMismatch(
            f"slot {int(pert.slots.max())} out of range for index of size {index.size}"
        )
    pos = index.flat_positions[pert.slots]
    orig = image.pixels.reshape(-1)[pos].astype(np.float64)
    applied = np.clip(round_half_away(orig + pert.values), 0, INTENSITY_MAX)
    return SparsePerturbation(pert.slots, applied - orig)


def l2_norm(pert: SparsePerturbation) -> float:
    """Euclidean norm of the entry values; implicit zeros contribute nothing."""
    return float(np.linalg.norm(pert.values))


# --------------------------------------------------------------------------
# File I/O
#
# PNM (P5/P6) headers: magic, width, height, maxval as ASCII tokens separated
# by whitespace, '#' comments allowed between tokens, a single whitespace byte
# before the raster. Only maxval 255 is supported.

def _read_pnm_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    tokens: list[int] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FileFormatError("truncated PNM header")
        try:
            tokens.append(int(data[i:j]))
        except ValueError as exc:
            raise FileFormatError(f"bad PNM header token {data[i:j]!r}") from exc
        i = j
    if i >= n or not data[i : i + 1].isspace():
        raise FileFormatError("missing whitespace after PNM header")
    return tokens, i + 1


def _read_pnm(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise FileFormatError(f"{path}: expected {magic.decode()} file")
    (width, height, maxval), offset = _read_pnm_tokens(data, 3, len(magic))
    if maxval != INTENSITY_MAX:
        raise FileFormatError(f"{path}: unsupported maxval {maxval}")
    if width < 1 or height < 1:
        raise FileFormatError(f"{path}: degenerate size {width}x{height}")
    need = width * height * channels
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise FileFormatError(f"{path}: raster truncated ({len(raster)}/{need} bytes)")
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, channels).copy()


def read_pgm(path: str | Path) -> np.ndarray:
    """Binary PGM (P5) as a (height, width) uint8 array."""
    return _read_pnm(path, b"P5", 1)


def read_ppm(path: str | Path) -> np.ndarray:
    """Binary PPM (P6) as a (height, width, 3) uint8 array."""
    return _read_pnm(path, b"P6", 3)


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim == 3 and gray.shape[2] == 1:
        gray = gray[:, :, 0]
    if gray.ndim != 2:
        raise DimensionMismatch(f"PGM needs a single channel, got shape {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(gray.tobytes())


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionMismatch(f"PPM needs three channels, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb.tobytes())


def load_image(path: str | Path) -> Image:
    """Load a PNG, PPM, or PGM file by suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        with PILImage.open(path) as im:
            if im.mode == "L":
                return Image(np.asarray(im)[:, :, np.newaxis])
            if im.mode == "RGB":
                return Image(np.asarray(im))
            raise FileFormatError(f"{path}: unsupported PNG mode {im.mode}")
    if suffix == ".ppm":
        return Image(read_ppm(path))
    if suffix == ".pgm":
        return Image(read_pgm(path)[:, :, np.newaxis])
    raise FileFormatError(f"{path}: unknown image suffix {suffix!r}")


def save_image(image: Image, path: str | Path) -> None:
    """Write a PNG, PPM, or PGM file by suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        if image.channels == 1:
            PILImage.fromarray(image.pixels[:, :, 0], mode="L").save(path)
        else:
            PILImage.fromarray(image.pixels, mode="RGB").save(path)
        return
    if suffix == ".ppm":
        if image.channels != 3:
            raise DimensionMismatch("PPM output needs a 3-channel image")
        write_ppm(path, image.pixels)
        return
    if suffix == ".pgm":
        if image.channels != 1:
            raise DimensionMismatch("PGM output needs a 1-channel image")
        write_pgm(path, image.pixels[:, :, 0])
        return
    raise FileFormatError(f"{path}: unknown image suffix {suffix!r}")
