import json
import math

import numpy as np
import pytest

from evocaf import bo, gp
from evocaf.acqopt import AcqOptConfig
from evocaf.afdsl import golden_source
from evocaf.bench import make_instance

FAST = bo.RunOptions(
    gp_config=gp.GpConfig(hyperopt_restarts=2),
    cost_gp_config=gp.GpConfig(hyperopt_restarts=2),
    acq_config=AcqOptConfig(n_raw=32, n_restarts=4, local_max_iters=20),
)


class Counter:
    def __init__(self, fn):
        self.fn, self.calls = fn, 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def sphere(d=2, cost=lambda x: 1.0):
    return bo.Problem(lambda x: -float(np.sum(np.square(x))), cost, [(-1.0, 1.0)] * d, f_star=0.0, name="sphere")


class TestInitDesign:
    def test_two_d(self):
        bounds = np.array([[-5.0, 10.0], [0.0, 15.0]])
        X = bo.init_design(bounds, 4, seed=3)
        assert X.shape == (4, 2)
        assert np.all((X >= bounds[:, 0]) & (X <= bounds[:, 1]))

    def test_deterministic(self):
        b = [(0, 1)] * 3
        assert np.array_equal(bo.init_design(b, 6, 11), bo.init_design(b, 6, 11))
        assert not np.array_equal(bo.init_design(b, 6, 11), bo.init_design(b, 6, 12))

    @pytest.mark.parametrize("seed", range(10))
    def test_stratified_in_one_dimension(self, seed):
        X = bo.init_design([(0.0, 1.0)], 8, seed)
        assert np.array_equal(np.sort(np.floor(X[:, 0] * 8)), np.arange(8))

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            bo.init_design([(0, 1)], 1, 0)


class TestRun:
    def test_unit_cost_iterations(self):
        rec = bo.run(sphere(), "ei", 10.0, seed=0, options=FAST)
        assert rec.T == 10
        assert rec.n_init == 4
        assert not rec.failed

    def test_budget_spent_by_initial_design(self):
        rec = bo.run(sphere(), "ei", 2.5, seed=0, options=FAST)
        assert rec.T == 4

    def test_accounting_and_invariants(self):
        inst = make_instance("ackley2", 1)
        cost = Counter(lambda x: float(inst.cost(x)))
        p = bo.Problem(lambda x: float(inst.objective(x)), cost, inst.bounds, f_star=inst.f_star, name="ackley2")
        rec = bo.run(p, "eicool", 8.0, seed=1, options=FAST)
        assert cost.calls == rec.T
        z = np.array([e.z for e in rec.history])
        cum = np.array([e.cum_budget for e in rec.history])
        np.testing.assert_allclose(cum, np.cumsum(z), rtol=0, atol=1e-12)
        assert np.all(np.diff(cum) > 0)
        assert rec.budget_used - 8.0 < z.max()
        assert cum[-2] < 8.0 <= cum[-1]
        best = np.maximum.accumulate([e.y for e in rec.history])
        assert np.all(np.diff(best) >= 0)
        assert rec.best_y == max(e.y for e in rec.history)
        assert rec.optimal_gap == pytest.approx(inst.f_star - rec.best_y)
        assert rec.optimal_gap == pytest.approx(min(inst.f_star - e.y for e in rec.history))

    def test_dsl_program_runs(self, tmp_path):
        path = tmp_path / "ei.dsl"
        path.write_text(golden_source("ei"))
        a = bo.run(sphere(), f"dsl:{path}", 7.0, seed=2, options=FAST)
        b = bo.run(sphere(), "ei", 7.0, seed=2, options=FAST)
        assert not a.failed and a.T == b.T == 7
        ya, yb = [e.y for e in a.history], [e.y for e in b.history]
        # last-digit differences can steer later L-BFGS runs apart
        np.testing.assert_allclose(ya[:5], yb[:5], atol=1e-6)
        np.testing.assert_allclose(ya, yb, atol=1e-2)

    def test_deterministic(self):
        a = bo.run(sphere(), "evolcaf", 7.0, seed=4, options=FAST)
        b = bo.run(sphere(), "evolcaf", 7.0, seed=4, options=FAST)
        assert [e.x for e in a.history] == [e.x for e in b.history]

    def test_timeout_flags_failure(self):
        opts = bo.RunOptions(acq_config=FAST.acq_config, time_limit=1e-9)
        rec = bo.run(sphere(), "ei", 20.0, seed=0, options=opts)
        assert rec.failed and "TimeLimitExceeded" in rec.error
        assert rec.T >= 4

    def test_bad_cost_flags_failure(self):
        rec = bo.run(sphere(cost=lambda x: 0.0), "ei", 5.0, options=FAST)
        assert rec.failed and "InvalidData" in rec.error

    def test_ablation_label(self):
        rec = bo.run(sphere(), "evolcaf:110", 5.0, options=FAST)
        assert rec.af == "evolcaf:110"


class TestRecords:
    def test_gap_examples(self):
        rec = bo.RunRecord(history=[bo.Evaluation([0.0], -0.4277, 1.0, 1.0, 0.0)], f_star=0.0)
        assert bo.optimal_gap(rec, 0.0) == pytest.approx(0.4277)
        assert bo.optimal_gap(rec, -0.4277) == 0.0
        with pytest.raises(ValueError):
            bo.optimal_gap(bo.RunRecord(), 0.0)

    def test_jsonl_round_trip(self, tmp_path):
        rec = bo.run(sphere(), "ei", 6.0, seed=0, options=FAST)
        path = tmp_path / "out" / "run.jsonl"
        rec.write(path)
        back = bo.read_jsonl(path)
        assert back == rec.history
        summary = json.loads(path.with_suffix(".summary.json").read_text())
        assert summary["T"] == rec.T and summary["seed"] == 0
        assert summary["gap"] == pytest.approx(rec.optimal_gap)
        first = json.loads(path.read_text().splitlines()[0])
        assert set(first) == {"x", "y", "z", "cum_budget", "wall_ms"}

    def test_ledger(self):
        led = bo.BudgetLedger(3.0)
        led.charge(1.0)
        led.charge(1.5)
        assert not led.exhausted
        led.charge(0.7)
        assert led.exhausted and math.isclose(led.B_used, 3.2)
