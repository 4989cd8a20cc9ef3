import numpy as np
import pytest

from latentmotion.generator import BlobDecoder
from latentmotion.latent import compute_pca_basis
from latentmotion.discriminators import VideoDiscConfig
from latentmotion.training import Models, TrainConfig


# PASS/FAIL lines from test_acceptance.py, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def blob_gen():
    return BlobDecoder(latent_dim=16, image_size=16, channels=3, seed=0)


@pytest.fixture(scope="session")
def blob_basis(blob_gen):
    samples = blob_gen.sample_latent(np.random.default_rng(7), 400)
    return compute_pca_basis(samples, 12).astype(np.float32)


@pytest.fixture
def tiny_cfg():
    dv = VideoDiscConfig(channels=(4, 4, 8, 8, 1), strides=(2, 1, 1, 1, 1), scales=2)
    return TrainConfig(n_frames=8, batch=3, bank_size=8, proj_dim=8, di_channels=(4, 4, 8, 8),
                       seed=5, mapper_hidden=8, dv=dv)


@pytest.fixture
def tiny_models(blob_gen, blob_basis, tiny_cfg):
    return Models(blob_gen, blob_basis, tiny_cfg)
