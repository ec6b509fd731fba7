import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dlczsim.config import load_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def paper_defaults_path():
    return CONFIG_DIR / "paper-defaults.yaml"


@pytest.fixture(scope="session")
def paper_analyzers_path():
    return CONFIG_DIR / "paper-analyzers.yaml"


@pytest.fixture(scope="session")
def paper_cfg(paper_defaults_path):
    return load_config(paper_defaults_path)


@pytest.fixture(scope="session")
def ana_cfg(paper_analyzers_path):
    return load_config(paper_analyzers_path)
