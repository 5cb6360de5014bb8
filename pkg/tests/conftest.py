import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from broom import SimConfig, load_fixture, run  # noqa: E402


@pytest.fixture(scope="session")
def heatcool():
    """(unit, tree) for the reference fixture."""
    return load_fixture("heatcool")


@pytest.fixture(scope="session")
def heatcool_dir():
    from broom import fixture_dir
    return Path(fixture_dir("heatcool"))


@pytest.fixture(scope="session")
def heatcool_trace(heatcool):
    _, tree = heatcool
    return run(tree, SimConfig(dt=0.010, duration=60.0))


needs_gcc = pytest.mark.skipif(shutil.which("gcc") is None,
                               reason="gcc not available")
