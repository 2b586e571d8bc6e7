from pathlib import Path

import pytest

from annotation_incentives.config import load_config

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture(scope="session")
def ref_gaussian():
    return load_config(CONFIG_DIR / "reference_gaussian.toml")


@pytest.fixture(scope="session")
def ref_latent():
    return load_config(CONFIG_DIR / "reference_latent.toml")
