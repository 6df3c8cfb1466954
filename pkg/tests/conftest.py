import numpy as np
import pytest

import support


@pytest.fixture
def test_image() -> np.ndarray:
    return support.structured_image()


@pytest.fixture
def frame():
    return support.simple_frame()


@pytest.fixture
def annotation():
    return support.simple_annotation()
