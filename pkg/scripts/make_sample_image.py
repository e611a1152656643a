"""Regenerate the bundled sample images (deterministic)."""

from pathlib import Path

import numpy as np

from pixattack.images import Image, save_image

OUT_DIR = Path(__file__).resolve().parents[1] / "data"


def smooth_rgb(seed: int, size: int = 32) -> Image:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    base = np.stack(
        [
            120 + 80 * np.sin(2.3 * np.pi * yy),
            110 + 70 * np.cos(1.7 * np.pi * xx),
            128 + 60 * np.sin(1.1 * np.pi * (xx + yy)),
        ],
        axis=2,
    )
    noisy = base + rng.normal(0, 12, base.shape)
    return Image(np.clip(noisy, 0, 255).astype(np.uint8))


def main() -> None:
    OUT_DIR.mkdir(exist_ok=True)
    save_image(smooth_rgb(2024), OUT_DIR / "sample_rgb_32.png")
    gray = smooth_rgb(2025).pixels[:, :, :1]
    save_image(Image(gray), OUT_DIR / "sample_gray_32.pgm")
    print(f"wrote sample images to {OUT_DIR}")


if __name__ == "__main__":
    main()
