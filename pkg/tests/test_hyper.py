from collections import Counter

import numpy as np
import pytest
from scipy import stats

from mixbo.exceptions import EmptyData
from mixbo.hyper import (
    MML_FALLBACK,
    HyperOptions,
    HyperState,
    LogLikelihood,
    choose_hp,
    gibbs_sample,
    gibbs_sample_posterior,
    hyperparameter_bounds,
    maximize_mll,
    refresh,
    sample_decompositions,
    slice_sample_coordinate,
)
from mixbo.kernels import Decomposition, KernelSpec, ParamLayout


def _data(seed, n=15, d=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    return X, np.sin(5 * X[:, 0]) + 0.05 * rng.standard_normal(n)


def test_bounds_layout():
    spec = KernelSpec(continuous=(0, 1), discrete=(2,), fidelity=(3,))
    lo, hi = hyperparameter_bounds(spec, [0.0, 2.0])
    v = 1.0
    assert np.allclose(np.exp([lo[0], hi[0]]), [0.1 * v, 10 * v])
    assert np.allclose(np.exp([lo[1], hi[1]]), [1e-5 * v, v])
    assert np.allclose(np.exp(lo[2:4]), 1e-2) and np.allclose(np.exp(hi[2:4]), 10)
    assert len(lo) == ParamLayout(spec).size == 6


def test_log_likelihood_gradient():
    spec = KernelSpec(continuous=(0, 1), discrete=(2,))
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(12, 3))
    X[:, 2] = rng.integers(0, 3, 12)
    ll = LogLikelihood(spec, X, rng.standard_normal(12))
    theta = np.array([0.1, -3.0, -1.0, -0.5, 0.2])
    _, g = ll.value_and_grad(theta)
    eps = 1e-6
    num = [(ll(theta + eps * e) - ll(theta - eps * e)) / (2 * eps) for e in np.eye(len(theta))]
    assert np.allclose(g, num, rtol=1e-4, atol=1e-6)


def test_maximize_mll_beats_probes():
    spec = KernelSpec(continuous=(0,))
    X, y = _data(1)
    res = maximize_mll(spec, X, y, rng=np.random.default_rng(0))
    ll = LogLikelihood(spec, X, y)
    lo, hi = hyperparameter_bounds(spec, y)
    rng = np.random.default_rng(1)
    assert all(ll(rng.uniform(lo, hi)) <= res.mll + 1e-9 for _ in range(200))
    assert np.all(res.theta >= lo) and np.all(res.theta <= hi)


def test_maximize_mll_collapsed_bounds():
    spec = KernelSpec(continuous=(0,))
    X, y = _data(2)
    point = np.log([1.0, 0.01, 0.4])
    res = maximize_mll(spec, X, y, bounds=(point, point))
    assert np.allclose(res.theta, point)
    assert res.hp.lengthscales[0] == pytest.approx(0.4)


def test_maximize_mll_fixed_decomposition():
    spec = KernelSpec(continuous=(0, 1, 2), additive=True)
    X, y = _data(3, d=3)
    dec = Decomposition(((0, 2), (1,)))
    res = maximize_mll(spec, X, y, decompositions=[dec], rng=np.random.default_rng(0))
    assert res.hp.decomposition == dec


def test_maximize_mll_empty():
    with pytest.raises(EmptyData):
        maximize_mll(KernelSpec(continuous=(0,)), np.zeros((0, 1)), [])


def test_gibbs_count_and_bounds():
    spec = KernelSpec(continuous=(0, 1))
    X, y = _data(4, d=2)
    lo, hi = hyperparameter_bounds(spec, y)
    out = gibbs_sample_posterior(spec, X, y, 3, np.random.default_rng(0), burn_in=20, thin=2)
    assert len(out) == 3
    layout = ParamLayout(spec)
    for hp in out:
        th = layout.to_vector(hp)
        assert np.all(th >= lo - 1e-12) and np.all(th <= hi + 1e-12)


def test_gibbs_additive_samples_decompositions():
    spec = KernelSpec(continuous=tuple(range(4)), additive=True)
    X, y = _data(5, d=4)
    out = gibbs_sample_posterior(spec, X, y, 5, np.random.default_rng(1), burn_in=10, thin=3, p_max=2)
    for hp in out:
        assert hp.decomposition.covers(4) and hp.decomposition.max_group_size <= 2


def test_gibbs_metropolis_block_targets_weights():
    # discrete block only: target P(state) proportional to (1, 2, 3, 4)
    w = np.log([1.0, 2.0, 3.0, 4.0])
    draws = gibbs_sample(None, [0.0], [0.0], [0.0], 4000, np.random.default_rng(2), burn_in=100, thin=2,
                         discrete=(0, lambda r: int(r.integers(0, 4)), lambda x, s: w[s]))
    freq = np.bincount([s for _, s in draws], minlength=4) / 4000
    assert np.allclose(freq, [0.1, 0.2, 0.3, 0.4], atol=0.03)


def test_slice_step_stays_in_bounds():
    rng = np.random.default_rng(3)
    x = np.array([0.5])
    for _ in range(500):
        x, _ = slice_sample_coordinate(lambda z: -50 * (z[0] - 0.9) ** 2, x, 0, 0.0, 1.0, rng)
        assert 0.0 <= x[0] <= 1.0


def test_gibbs_sweep_preserves_target():
    """A single sweep applied to exact target draws keeps the target distribution."""
    logp = lambda z: -0.5 * ((z[0] - 0.3) / 0.1) ** 2  # noqa: E731
    grid = np.linspace(0, 1, 20001)
    dens = np.exp(-0.5 * ((grid - 0.3) / 0.1) ** 2)
    cdf = np.cumsum(dens) / dens.sum()
    rng = np.random.default_rng(4)
    start = np.interp(rng.uniform(size=2000), cdf, grid)
    after = np.array([gibbs_sample(logp, [s], [0.0], [1.0], 1, rng, burn_in=0, thin=1)[0][0][0] for s in start])
    ks0 = stats.kstest(start, lambda v: np.interp(v, grid, cdf)).statistic
    ks1 = stats.kstest(after, lambda v: np.interp(v, grid, cdf)).statistic
    assert abs(ks1 - ks0) < 0.05


def test_sample_decompositions_seven_dim_example():
    decs = sample_decompositions(7, 3, 200, np.random.default_rng(0))
    assert all(d.covers(7) and d.max_group_size <= 3 for d in decs)
    assert all(g.max_group_size == 1 for g in sample_decompositions(5, 1, 20, np.random.default_rng(1)))


def test_sample_decompositions_uniform_group_size():
    decs = sample_decompositions(6, 6, 10000, np.random.default_rng(2))
    # ordering chunks of size p: the first group always has exactly p elements
    freq = Counter(len(d.groups[0]) for d in decs)
    for p in range(1, 7):
        assert abs(freq[p] / 10000 - 1 / 6) < 0.02


def _state(weights=None, queue=()):
    st = HyperState(KernelSpec(continuous=(0,)))
    st.theta_mml = "mml-value"
    if weights:
        st.weights = dict(weights)
    st.queue.extend(queue)
    return st


def test_choose_hp_frequencies():
    rng = np.random.default_rng(0)
    st = _state({"mml": 3.0, "sfp": 1.0}, queue=["s"] * 20000)
    labels = [choose_hp(st, rng)[0] for _ in range(10000)]
    assert abs(labels.count("mml") / 10000 - 0.75) < 0.02
    st = _state(queue=["s"] * 20000)
    labels = [choose_hp(st, rng)[0] for _ in range(10000)]
    assert abs(labels.count("mml") / 10000 - 0.5) < 3 * np.sqrt(0.25 / 10000)


def test_choose_hp_pops_fifo_and_falls_back():
    rng = np.random.default_rng(1)
    st = _state({"mml": 1e-9, "sfp": 1.0}, queue=["a", "b"])
    assert choose_hp(st, rng) == ("sfp", "a")
    assert choose_hp(st, rng) == ("sfp", "b")
    assert choose_hp(st, rng) == (MML_FALLBACK, "mml-value")


def _fast_opts(**kw):
    return HyperOptions(burn_in=5, thin=1, **kw)


def test_refresh_fills_queue_and_keeps_weights():
    spec = KernelSpec(continuous=(0, 1))
    X, y = _data(6, d=2)
    st = HyperState(spec, _fast_opts())
    st.weights = {"mml": 4.0, "sfp": 2.0}
    new = refresh(st, X, y, np.random.default_rng(0))
    assert len(new.queue) == 17
    assert new.weights == {"mml": 4.0, "sfp": 2.0}
    assert new.theta_mml is not None


def test_refresh_is_deterministic():
    spec = KernelSpec(continuous=(0, 1))
    X, y = _data(7, d=2)
    a = refresh(HyperState(spec, _fast_opts()), X, y, np.random.default_rng(5))
    b = refresh(HyperState(spec, _fast_opts()), X, y, np.random.default_rng(5))
    assert a.theta_mml == b.theta_mml


def test_refresh_additive_picks_best_candidate():
    spec = KernelSpec(continuous=tuple(range(8)), additive=True)
    X, y = _data(8, n=25, d=8)
    st = refresh(HyperState(spec, _fast_opts(n_decompositions=25, p_max=6, screen_maxiter=3)), X, y,
                 np.random.default_rng(0))
    decs = [d for d, _ in st.candidates]
    assert len(decs) <= 25 * 6 and len(set(d.groups for d in decs)) == len(decs)
    best = max(st.candidates, key=lambda c: c[1])[0]
    assert st.theta_mml.decomposition == best
