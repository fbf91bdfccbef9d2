"""
Configuration pytest commune : chemin du dépôt, marqueur `slow`, jeux de test
"""
import os
import sys
from datetime import date

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.grades import GradeSystem, GradeValue  # noqa: E402
from src.logbook import AscentRecord, PreparedDataset  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: tests statistiques longs (RUN_SLOW_TESTS=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("RUN_SLOW_TESTS") == "1":
        return
    skip = pytest.mark.skip(reason="test long : définir RUN_SLOW_TESTS=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def record(climber="alice", route="r1", day=date(2016, 1, 10), grade=20.0,
           success=True, tick=None, style=None) -> AscentRecord:
    return AscentRecord(
        climber_id=climber,
        route_id=route,
        date=day,
        grade=GradeValue(system=GradeSystem.EWBANK, value=grade),
        tick=tick or ("redpoint" if success else "hangdog"),
        success=success,
        style=style,
    )


def random_dataset(rng: np.random.Generator, max_climbers=3, max_pages=4, max_ascents=20) -> PreparedDataset:
    """Petit jeu préparé aléatoire respectant les invariants de structure"""
    C = int(rng.integers(1, max_climbers + 1))
    P = int(rng.integers(1, max_pages + 1))
    N = int(rng.integers(1, max_ascents + 1))
    climber_index = np.concatenate([np.arange(C), rng.integers(0, C, size=max(N - C, 0))])[:max(N, C)]
    low = rng.integers(1, P + 1, size=C)
    high = np.array([rng.integers(l, P + 1) for l in low])
    page = np.array([rng.integers(low[c], high[c] + 1) for c in climber_index])
    # Les bornes doivent être atteintes par au moins une ascension
    page[:C] = low
    min_page = np.full(C, P)
    max_page = np.ones(C, dtype=int)
    np.minimum.at(min_page, climber_index, page)
    np.maximum.at(max_page, climber_index, page)
    n = climber_index.size
    return PreparedDataset(
        climbers=[f"c{i}" for i in range(C)],
        n_pages=P,
        min_page=min_page.astype(np.int64),
        max_page=max_page.astype(np.int64),
        y=rng.integers(0, 2, size=n).astype(np.int64),
        page=page.astype(np.int64),
        climber_index=climber_index.astype(np.int64),
        x=rng.uniform(10, 30, size=n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20160801)
