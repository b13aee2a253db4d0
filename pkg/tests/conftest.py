from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import config  # noqa: E402


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "slow: L = 12 reproductions and large oracle runs (LEAFKIT_SLOW=1)")


def pytest_collection_modifyitems(config, items) -> None:
    if os.getenv("LEAFKIT_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set LEAFKIT_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    cache = tmp_path / "spectral-cache"
    monkeypatch.setattr(config, "CACHE_DIR", str(cache))
    return cache
