import numpy as np
import pytest

from evocaf import gp
from evocaf.acquisition import AfContext


def make_context(seed=0, t=6, d=2, budget_used=10.0, budget_total=30.0, budget_init=4.0):
    rng = np.random.default_rng(seed)
    X = rng.random((t, d))
    y = np.sin(3 * X).sum(axis=1) + 0.1 * rng.standard_normal(t)
    z = np.exp(-np.linalg.norm(X - 0.5, axis=1))
    cfg = gp.GpConfig(hyperopt_restarts=2, seed=seed)
    return AfContext.from_data(
        X, y, gp.fit(X, y, cfg), gp.fit(X, z, cfg), budget_used, budget_total, budget_init
    )


@pytest.fixture
def ctx():
    return make_context()
