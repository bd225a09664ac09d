import pytest
import torch
from hypothesis import settings

from stylevox import frontend
from stylevox.config import toy_config

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

DATA_DIR = __file__.rsplit("/", 1)[0] + "/data"


@pytest.fixture(scope="session")
def vocab():
    return frontend.default_vocabulary()


@pytest.fixture(scope="session")
def tables():
    return frontend.default_tables()


@pytest.fixture()
def tiny_cfg():
    """Much smaller than toy_config; for per-step model tests."""
    cfg = toy_config()
    cfg.d_model = 32
    cfg.n_layers = 1
    cfg.conv_hidden_dim = 64
    cfg.prompt_dim = 16
    cfg.global_dim = 32
    cfg.latent_channels = 32
    cfg.posterior_hidden = 32
    cfg.posterior_layers = 2
    cfg.flow_layers = 2
    cfg.flow_hidden = 32
    cfg.flow_wn_layers = 1
    cfg.duration_hidden = 32
    cfg.upsample_initial_channels = 32
    cfg.mpd_base_channels = 2
    cfg.segment_frames = 8
    cfg.batch_size = 2
    cfg.validate()
    return cfg


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)
