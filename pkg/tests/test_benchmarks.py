import math

import numpy as np
import pytest
from scipy.optimize import minimize

from mixbo.benchmarks import benchmark, benchmark_names, ea_search, random_search, simple_regret
from mixbo.domain import validate_point
from mixbo.exceptions import UnknownBenchmark

KNOWN_ARGMAX = {
    "branin": ((math.pi, 2.275), -0.397887),
    "hartmann3": ((0.114614, 0.555649, 0.852547), 3.86278),
    "hartmann6": ((0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573), 3.32237),
}


@pytest.mark.parametrize("name", sorted(KNOWN_ARGMAX))
def test_textbook_optima(name):
    x, val = KNOWN_ARGMAX[name]
    b = benchmark(name)
    assert b.f(x) == pytest.approx(val, abs=1e-4)
    assert b.optimum == pytest.approx(val, abs=1e-4)


def _bounds(b):
    return [v.bounds for v in b.domain.variables]


def _multistart(b, n=20000, starts=10, cons=None):
    rng = np.random.default_rng(0)
    bounds = np.array(_bounds(b))
    span = bounds[:, 1] - bounds[:, 0]
    pts = bounds[:, 0] + rng.uniform(size=(n, len(bounds))) * span
    if b.domain.constraint is not None:
        pts = pts[[validate_point(b.domain, tuple(p)) for p in pts]]
    vals = b.f_rows(pts)
    best = -np.inf
    # optimise in unit coordinates so wide ranges (borehole) are well scaled
    fun = lambda u: -b.f_rows((bounds[:, 0] + u * span)[None, :])[0]  # noqa: E731
    for p in pts[np.argsort(-vals)[:starts]]:
        res = minimize(fun, (p - bounds[:, 0]) / span, bounds=[(0, 1)] * len(span),
                       method="SLSQP" if cons else "L-BFGS-B",
                       constraints=cons(bounds, span) if cons else ())
        best = max(best, -res.fun)
    return best


@pytest.mark.parametrize("name", ["branin", "hartmann3", "hartmann6", "park1", "park2", "borehole"])
def test_optimum_matches_multistart(name):
    b = benchmark(name)
    assert _multistart(b) == pytest.approx(b.optimum, rel=1e-6, abs=1e-6)


def _disc(bounds, span):
    return [{"type": "ineq", "fun": lambda u: 0.5 - ((bounds[:2, 0] + u[:2] * span[:2]) ** 2).sum()}]


def _head(bounds, span):
    return [{"type": "ineq", "fun": lambda u: 300 - ((bounds[3, 0] + u[3] * span[3]) - (bounds[5, 0] + u[5] * span[5]))}]


@pytest.mark.parametrize("name,cons", [("hartmann3-constrained", _disc), ("park1-constrained", _disc),
                                       ("borehole-constrained", _head)])
def test_constrained_optimum(name, cons):
    b = benchmark(name)
    assert _multistart(b, cons=cons) == pytest.approx(b.optimum, rel=1e-5, abs=1e-6)


def test_constraint_membership():
    dom = benchmark("hartmann3-constrained").domain
    assert not validate_point(dom, (0.7, 0.7, 0.1))
    assert validate_point(dom, (0.1, 0.5, 0.9))


def test_stack_identity():
    b = benchmark("hartmann3x6")
    h = benchmark("hartmann3")
    assert b.domain.d == 18
    assert b.optimum == pytest.approx(6 * h.optimum)
    x = np.random.default_rng(0).uniform(size=18)
    assert b.f(x) == pytest.approx(sum(h.f(x[3 * g:3 * g + 3]) for g in range(6)))
    assert [v.name for v in b.domain.variables][:4] == ["x1_1", "x2_1", "x3_1", "x1_2"]


def test_noise_level():
    b = benchmark("branin-noisy")
    obj = b.objective(seed=0)
    x = (1.0, 2.0)
    r = np.array([obj(x) for _ in range(10000)]) - b.f(x)
    # sample variance over sigma^2 times (n - 1) is chi-square with n - 1 degrees of freedom
    ratio = r.var(ddof=1) / b.noise_sd ** 2
    assert abs(ratio - 1) < 4 * math.sqrt(2 / 9999)
    assert benchmark("branin").noise_sd == 0


def test_multi_fidelity_target_matches_f():
    b = benchmark("hartmann3-mf")
    rng = np.random.default_rng(1)
    for x in rng.uniform(size=(20, 3)):
        assert b.g((1.0,), x) == b.f(x)
        assert b.g((0.2,), x) <= b.f(x)
    assert b.fidelity.z_hf == (1.0,)
    with pytest.raises(ValueError):
        benchmark("hartmann3").g((1.0,), (0.1, 0.2, 0.3))


def test_names_and_errors():
    for name in benchmark_names():
        assert benchmark(name).domain.d >= 2
    for bad in ("nope", "branin-constrained", "hartmann3x2-constrained", "branin-noisy-noisy", "hartmann3x0"):
        with pytest.raises(UnknownBenchmark):
            benchmark(bad)


def test_simple_regret_examples():
    trace = [{"y": 0.5, "x": [0]}, {"y": 0.8, "x": [0]}, {"y": 0.1, "x": [0]}]
    assert simple_regret(trace, 1.0) == pytest.approx([0.5, 0.2, 0.2])
    assert simple_regret(trace, 0.8) == pytest.approx([0.3, 0.0, 0.0])
    # noisy values above the optimum are clipped at zero
    assert simple_regret([{"y": 1.5, "x": [0]}], 1.0) == [0.0]
    mf = [{"y": 9.0, "z": [0.1], "x": [0]}, {"y": 0.4, "z": [1.0], "x": [0]}]
    assert simple_regret(mf, 1.0, z_hf=(1.0,)) == [math.inf, pytest.approx(0.6)]
    assert simple_regret([{"y": None, "x": [0]}], 1.0) == [math.inf]
    assert simple_regret(trace, 1.0, true_f=lambda x: 0.9) == pytest.approx([0.1] * 3)


def test_random_search_is_uniform_and_seeded():
    dom = benchmark("hartmann3").domain
    trace = random_search(dom, 10000, np.random.default_rng(0))
    first = np.array([r["x"][0] for r in trace])
    counts = np.histogram(first, bins=10, range=(0, 1))[0]
    assert np.all(np.abs(counts - 1000) <= 120)
    again = random_search(dom, 10000, np.random.default_rng(0))
    assert [r["x"] for r in again] == [r["x"] for r in trace]


def test_random_search_constrained_and_traced():
    b = benchmark("hartmann3-constrained")
    trace = random_search(b.domain, 50, np.random.default_rng(1), b.objective(0))
    assert len(trace) == 50
    assert all(validate_point(b.domain, tuple(r["x"])) for r in trace)
    inc = [r["incumbent"] for r in trace]
    assert all(a <= c for a, c in zip(inc, inc[1:]))


def test_ea_search_budget():
    b = benchmark("branin")
    trace = ea_search(b.objective(), b.domain, 57, np.random.default_rng(0))
    assert len(trace) == 57
    assert trace[-1]["incumbent"] == max(r["y"] for r in trace)
