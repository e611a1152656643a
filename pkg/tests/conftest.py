import numpy as np
import pytest

from pixattack.images import Image


def random_image(seed: int, height: int = 16, width: int = 16, channels: int = 3) -> Image:
    rng = np.random.default_rng(seed)
    return Image(rng.integers(0, 256, (height, width, channels), dtype=np.uint8))


@pytest.fixture
def rgb_image() -> Image:
    return random_image(7)


@pytest.fixture
def gray_image() -> Image:
    return random_image(11, channels=1)
