from pathlib import Path

import numpy as np
import pytest

DEMOS = Path(__file__).resolve().parents[1] / "src" / "cfsnoether" / "demos"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def demo():
    def path(name: str) -> Path:
        p = DEMOS / name
        assert p.exists(), p
        return p
    return path
