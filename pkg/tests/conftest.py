import math

import numpy as np
import pytest
from hypothesis import settings

from flashgp import LinearImage
from flashgp.scenesynth import (
    build_dataset,
    compose_from_lights,
    make_procedural_stacks,
)

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


def shading_field(height: int, width: int) -> np.ndarray:
    """Smooth, everywhere-varying positive field (no flat patches)."""
    ys, xs = np.mgrid[0:height, 0:width]
    u = xs / max(width - 1, 1)
    v = ys / max(height - 1, 1)
    return 0.25 + 0.2 * np.sin(5.0 * u + 1.0) * np.cos(4.0 * v) + 0.15 * u + 0.1 * v * v


@pytest.fixture
def achromatic_image() -> LinearImage:
    """R=G=B image with non-constant shading."""
    s = shading_field(24, 24)
    return LinearImage(np.repeat(s[:, :, None], 3, axis=2))


@pytest.fixture
def textured_image() -> LinearImage:
    """Chromatic image with smooth spatial variation in every channel."""
    s = shading_field(24, 24)
    ys, xs = np.mgrid[0:24, 0:24]
    t = 0.5 + 0.4 * np.sin(0.7 * xs + 0.3 * ys)
    data = np.stack([s * (0.6 + 0.3 * t), s * (0.5 + 0.1 * t), s * 0.55], axis=2)
    return LinearImage(data)


@pytest.fixture(scope="session")
def small_stack():
    """One 64x64 procedural object with exact shading."""
    return make_procedural_stacks(1, 64, 64, seed=7)[0]


@pytest.fixture(scope="session")
def two_light_scene():
    """128x128 gray-dominant scene, two separated chromatic lights, white flash."""
    stack = make_procedural_stacks(1, 128, 128, seed=3)[0]
    l1 = np.array([0.8, 0.45, 0.35])
    l2 = np.array([0.3, 0.45, 0.85])
    triplet = compose_from_lights(stack, [0, 4], [l1, l2], np.array([1.0, 1.0, 1.0]))
    return stack, triplet


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small on-disk dataset: 1 object, 48px, N in {2, 3}."""
    out = tmp_path_factory.mktemp("tinyds")
    stacks = make_procedural_stacks(1, 48, 48, seed=11)
    manifest = build_dataset(stacks, out, n_values=(2, 3), seed=5)
    return manifest


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def rotated_from_red(theta_deg: float) -> np.ndarray:
    """Unit vector theta degrees away from (1,0,0), inside the positive octant."""
    t = math.radians(theta_deg)
    return np.array([math.cos(t), math.sin(t), 0.0])
