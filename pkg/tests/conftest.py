import numpy as np
import pytest

from xprobe import ImageTensor, make_grid


def flat_image(height=9, width=9, channels=1, value=0.8, ident=None):
    """Uniform bright image; every patch is occupied against a zero baseline."""
    pixels = np.full((channels, height, width), value, dtype=np.float32)
    return ImageTensor(pixels, ident=ident)


def random_bright_image(rng, height=9, width=9, channels=1, low=0.25, high=1.0, ident=None):
    pixels = rng.uniform(low, high, size=(channels, height, width)).astype(np.float32)
    return ImageTensor(pixels, ident=ident)


@pytest.fixture
def grid3():
    return make_grid(9, 9, 3, 3)


@pytest.fixture
def image9():
    return flat_image(9, 9)
