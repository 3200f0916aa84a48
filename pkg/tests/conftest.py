from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tapgaze.core import DEFAULT_GEOMETRY, Fixation, Scanpath, default_layout


@pytest.fixture(scope="session")
def geom():
    return DEFAULT_GEOMETRY


@pytest.fixture(scope="session")
def layout():
    lay, _ = default_layout()
    return lay


def make_scanpath(rng: np.random.Generator, n: int, trial_id: str = "t") -> Scanpath:
    """Random but invariant-respecting scanpath for metric tests."""
    xs = rng.uniform(0, DEFAULT_GEOMETRY.width, size=n)
    ys = rng.uniform(0, DEFAULT_GEOMETRY.height, size=n)
    durs = rng.uniform(40.0, 600.0, size=n)
    gaps = rng.uniform(0.0, 80.0, size=n)
    fixations = []
    t = float(rng.uniform(0, 300))
    for i in range(n):
        fixations.append(
            Fixation(x=float(xs[i]), y=float(ys[i]), duration_ms=float(durs[i]), onset_ms=t)
        )
        t += float(durs[i]) + float(gaps[i])
    return Scanpath(trial_id=trial_id, fixations=tuple(fixations))
