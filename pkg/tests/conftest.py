"""
Fixtures compartilhadas: rede em miniatura, templates pequenos e um dataset
sintético minúsculo gerado uma vez por sessão.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from data.dataset import load_dataset
from data.synthetic import generate_synthetic
from geometry.pointcloud import RigidTransform
from popup.model import PopupNetwork
from popup.templates import build_templates
from tests.support import TINY_DATA, TINY_KEYPOINTS, tiny_model_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture
def tiny_templates():
    return build_templates(["ball", "board"], TINY_KEYPOINTS, seed=3)


@pytest.fixture
def tiny_network(tiny_config):
    return PopupNetwork(tiny_config)


@pytest.fixture
def human_cloud(rng):
    """Nuvem humana de brinquedo: 60 pontos espalhados num volume de ~1 m."""
    return rng.normal(0.0, 0.3, size=(60, 3)) + np.array([0.0, 0.0, 1.0])


@pytest.fixture
def gt_pose():
    R = Rotation.from_euler("z", 30.0, degrees=True).as_matrix()
    return RigidTransform(R, np.array([0.1, -0.05, 1.1]))


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    generate_synthetic(TINY_DATA, str(out))
    return out


@pytest.fixture
def tiny_dataset(tiny_dataset_dir):
    return load_dataset(str(tiny_dataset_dir))
