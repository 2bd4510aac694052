import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evocaf.bench import BENCHMARKS, eval_cost, eval_objective, make_instance
from evocaf.errors import DomainError, NotSupported

# published optimum values (minimization convention, except cosine8)
LITERATURE = {
    "ackley2": 0.0,
    "rastrigin2": 0.0,
    "griewank2": 0.0,
    "rosenbrock2": 0.0,
    "levy2": 0.0,
    "threehumpcamel2": 0.0,
    "styblinskitang2": -78.33233,
    "hartmann3": -3.86278,
    "powell4": 0.0,
    "shekel4": -10.5364,
    "hartmann6": -3.32237,
    "cosine8": -0.8,
}


def ackley(x):
    d = len(x)
    return (-20 * math.exp(-0.2 * math.sqrt(sum(v * v for v in x) / d))
            - math.exp(sum(math.cos(2 * math.pi * v) for v in x) / d) + 20 + math.e)


def rastrigin(x):
    return 10 * len(x) + sum(v * v - 10 * math.cos(2 * math.pi * v) for v in x)


def griewank(x):
    return 1 + sum(v * v for v in x) / 4000 - math.prod(math.cos(v / math.sqrt(i + 1)) for i, v in enumerate(x))


def rosenbrock(x):
    return sum(100 * (x[i + 1] - x[i] ** 2) ** 2 + (1 - x[i]) ** 2 for i in range(len(x) - 1))


def styblinski(x):
    return 0.5 * sum(v**4 - 16 * v**2 + 5 * v for v in x)


ORACLES = {"ackley2": ackley, "rastrigin2": rastrigin, "griewank2": griewank,
           "rosenbrock2": rosenbrock, "styblinskitang2": styblinski}


class TestInstances:
    @pytest.mark.parametrize("name", BENCHMARKS)
    def test_optimum_consistency(self, name):
        inst = make_instance(name)
        assert inst.objective(inst.x_star_raw) == pytest.approx(inst.f_star, abs=1e-6)
        assert inst.cost(inst.x_star_raw) == 1.0
        assert np.all((inst.x_star >= 0) & (inst.x_star <= 1))

    @pytest.mark.parametrize("name", BENCHMARKS)
    def test_literature_value(self, name):
        assert make_instance(name).f_star == pytest.approx(-LITERATURE[name], abs=1e-4)

    @pytest.mark.parametrize("name", list(ORACLES))
    def test_closed_form_oracle(self, name):
        inst = make_instance(name)
        rng = np.random.default_rng(0)
        lo, hi = inst.bounds[:, 0], inst.bounds[:, 1]
        for x in lo + rng.random((50, inst.dim)) * (hi - lo):
            assert inst.objective(x) == pytest.approx(-ORACLES[name](list(x)), rel=1e-12, abs=1e-12)

    def test_named_points(self):
        assert make_instance("ackley2").f_star == 0.0
        assert eval_objective(make_instance("ackley2"), [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
        assert eval_objective(make_instance("rastrigin2"), [0.0, 0.0]) == 0.0
        assert eval_objective(make_instance("griewank2"), [0.0, 0.0]) == 0.0
        assert eval_objective(make_instance("rosenbrock2"), [1.0, 1.0]) == 0.0
        st_val = eval_objective(make_instance("styblinskitang2"), [-2.903534, -2.903534])
        assert st_val == pytest.approx(78.332, abs=1e-2)

    def test_unknown_name(self):
        with pytest.raises(NotSupported):
            make_instance("branin99")

    @pytest.mark.parametrize("name", BENCHMARKS)
    def test_finite_on_random_sample(self, name):
        inst = make_instance(name)
        X = inst.from_unit(np.random.default_rng(1).random((1000, inst.dim)))
        assert np.all(np.isfinite(inst.objective(X)))

    def test_domain_errors(self):
        inst = make_instance("ackley2")
        with pytest.raises(DomainError):
            inst.objective([40.0, 0.0])
        with pytest.raises(DomainError):
            inst.cost([0.0, -33.0])
        with pytest.raises(DomainError):
            inst.objective([0.0, 0.0, 0.0])


class TestCost:
    def test_unit_distance(self):
        inst = make_instance("hartmann3")
        u = inst.x_star.copy()
        u[0] = u[0] + 1.0 if u[0] < 0.5 else u[0] - 1.0
        assert np.linalg.norm(u - inst.x_star) == pytest.approx(1.0)
        if np.all((u >= 0) & (u <= 1)):
            assert eval_cost(inst, inst.from_unit(u)) == pytest.approx(math.exp(-1), abs=1e-5)
        inst2 = make_instance("rosenbrock2")  # x* = (1, 1) -> unit (0.4, 0.4)
        target = inst2.from_unit([1.0, 0.4])
        assert eval_cost(inst2, target) == pytest.approx(math.exp(-0.6), abs=1e-12)
        assert math.exp(-1) == pytest.approx(0.36788, abs=1e-5)

    @pytest.mark.parametrize("name", [n for n in BENCHMARKS if make_instance(n).dim == 2])
    def test_grid_argmax_is_optimum(self, name):
        inst = make_instance(name)
        g = np.linspace(0, 1, 100)
        U = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
        U = np.vstack([U, inst.x_star])
        c = inst.cost(inst.from_unit(U))
        assert np.allclose(U[np.argmax(c)], inst.x_star)
        assert c.min() > math.exp(-math.sqrt(2)) and c.max() <= 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.05, 0.95))
    def test_radially_monotone(self, a, b, frac):
        inst = make_instance("levy2")
        far = np.array([a, b])
        if np.linalg.norm(far - inst.x_star) < 1e-6:
            return
        near = inst.x_star + frac * (far - inst.x_star)
        assert inst.cost(inst.from_unit(near)) > inst.cost(inst.from_unit(far))
