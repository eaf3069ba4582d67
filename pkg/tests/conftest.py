import numpy as np
import pytest

from leaftrack import TrackConfig, build_library, default_templates, prepare_frame

from helpers import HALF_LEN, ROT_STEP, SCALES, centered_pose, single_leaf_scene


@pytest.fixture(scope="session")
def basics():
    return default_templates(4, HALF_LEN)


@pytest.fixture(scope="session")
def lib(basics):
    return build_library(basics, SCALES, ROT_STEP)


@pytest.fixture(scope="session")
def scene23(basics):
    """64x64 single-leaf frame: shape 1 at scale 1.25, centered, light blur."""
    tpl = basics[1]
    pose = centered_pose(tpl, 1.25, 64, 64)
    spec, frames, truth = single_leaf_scene(tpl, pose)
    return {"tpl": tpl, "pose": pose, "spec": spec,
            "frames": frames, "truth": truth}


@pytest.fixture(scope="session")
def scene23_fields(scene23):
    return prepare_frame(scene23["frames"][0], TrackConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
