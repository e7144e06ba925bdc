import math

import numpy as np
import pytest

import oracles
from mixbo.exceptions import BadGroupIndex, EmptyData, NotAdditive, SingularGram
from mixbo.gp import LazyJointSample, fit, hallucinate, joint_sample, log_marginal_likelihood, posterior, posterior_component
from mixbo.hyper import maximize_mll
from mixbo.kernels import Decomposition, KernelHyperparams, KernelSpec

SE1 = KernelSpec(continuous=(0,), base="se")


def se_hp(noise=0.0, ls=1.0):
    return KernelHyperparams(lengthscales=(ls,), noise=noise)


def test_empty_data_is_prior():
    gp = fit(SE1, se_hp(), [], [])
    assert posterior(gp, [0.4]) == (0.0, 1.0)
    with pytest.raises(EmptyData):
        log_marginal_likelihood(gp)


def test_single_observation_alpha_and_posterior():
    gp = fit(SE1, se_hp(), [[0.0]], [2.0])
    assert np.allclose(gp.alpha, [2.0])
    mu, sd = posterior(gp, [0.0])
    assert mu == pytest.approx(2.0) and sd == pytest.approx(0.0, abs=1e-7)
    mu, sd = posterior(gp, [1.0])
    assert mu == pytest.approx(2 * math.exp(-0.5), rel=1e-12)
    assert sd ** 2 == pytest.approx(1 - math.exp(-1), rel=1e-12)


def test_scalar_log_marginal_likelihood():
    spec = KernelSpec(continuous=(0,), base="se")
    hp = KernelHyperparams(scale=0.5, lengthscales=(1.0,), noise=0.5)
    assert log_marginal_likelihood(fit(spec, hp, [[0.0]], [0.0])) == pytest.approx(-0.5 * math.log(2 * math.pi))
    assert log_marginal_likelihood(fit(spec, hp, [[0.0]], [1.0])) == pytest.approx(-0.5 - 0.5 * math.log(2 * math.pi))


def test_duplicate_points_jitter_rescue():
    gp = fit(SE1, se_hp(), [[0.2], [0.2]], [1.0, 1.0])
    assert gp.jitter > 0
    mu, _ = posterior(gp, [0.2])
    assert mu == pytest.approx(1.0, abs=1e-5)


def test_non_finite_gram_raises():
    with pytest.raises(SingularGram):
        fit(SE1, se_hp(), [[np.nan], [0.2]], [1.0, 1.0])


@pytest.mark.parametrize("seed", range(25))
def test_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    spec, hp, X, y, Xs = oracles.random_instance(rng, additive=seed % 4 == 0, fidelity=seed % 2 == 1)
    gp = fit(spec, hp, X, y, mean="empirical")
    omu, ovar = oracles.dense_posterior(spec, hp, X, y, Xs, mean=y.mean())
    mu, _ = gp.predict(Xs)
    scale = math.sqrt(hp.scale)
    assert np.all(np.abs(mu - omu) <= 1e-8 * np.maximum(np.abs(omu), scale))
    assert np.allclose(gp.predict_var_raw(Xs), ovar, rtol=1e-8, atol=0)
    assert gp.log_marginal_likelihood() == pytest.approx(oracles.dense_mll(spec, hp, X, y, y.mean()), rel=1e-8)


def test_factor_invariants():
    rng = np.random.default_rng(3)
    spec, hp, X, y, _ = oracles.random_instance(rng, n_max=40)
    gp = fit(spec, hp, X, y)
    K = oracles.gram(spec, hp, X, X) + hp.noise * np.eye(len(X))
    assert np.linalg.norm(gp.L @ gp.L.T - K) <= 1e-8 * np.linalg.norm(K)
    assert np.linalg.norm(K @ gp.alpha - y) <= 1e-8 * np.linalg.norm(y)


def test_fit_is_deterministic():
    rng = np.random.default_rng(4)
    spec, hp, X, y, Xs = oracles.random_instance(rng)
    a, b = fit(spec, hp, X, y).predict(Xs), fit(spec, hp, X, y).predict(Xs)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def _additive_problem(seed, n=12):
    rng = np.random.default_rng(seed)
    spec = KernelSpec(continuous=(0, 1, 2), additive=True, base="se")
    hp = KernelHyperparams(scale=1.3, lengthscales=(0.3, 0.5, 0.2), noise=1e-3,
                           decomposition=Decomposition(((0, 2), (1,))))
    X = rng.uniform(size=(n, 3))
    y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2
    return spec, hp, X, y, rng.uniform(size=(20, 3))


def test_component_means_sum_to_joint_mean():
    spec, hp, X, y, Xs = _additive_problem(0)
    gp = fit(spec, hp, X, y, mean="empirical")
    parts = sum(gp.predict_component(j, Xs)[0] for j in range(2))
    assert np.allclose(parts, gp.predict(Xs)[0], rtol=0, atol=1e-10)


def test_component_matches_brute_force():
    spec, hp, X, y, Xs = _additive_problem(1, n=3)
    gp = fit(spec, hp, X, y)
    for j in range(2):
        mu, sd = gp.predict_component(j, Xs)
        omu, ovar = oracles.dense_posterior(spec, hp, X, y, Xs, group=j)
        assert np.allclose(mu, omu, rtol=1e-8, atol=0)
        assert np.allclose(sd ** 2, ovar, rtol=1e-8, atol=0)
    with pytest.raises(BadGroupIndex):
        posterior_component(gp, 2, Xs[0])
    with pytest.raises(NotAdditive):
        posterior_component(fit(SE1, se_hp(), [], []), 0, [0.1])


def test_empty_component_is_prior():
    spec, hp, _, _, Xs = _additive_problem(2)
    gp = fit(spec, hp, [], [])
    mu, sd = posterior_component(gp, 1, Xs[0])
    assert mu == 0.0 and sd == pytest.approx(math.sqrt(1.3 / 2))


def test_joint_sample_monte_carlo_mean():
    gp = fit(SE1, se_hp(noise=0.01), [[0.0], [1.0]], [1.0, -1.0])
    x = [[0.4]]
    mu, sd = gp.predict(x)
    rng = np.random.default_rng(0)
    draws = np.array([joint_sample(gp, x, rng)[0] for _ in range(10000)])
    assert abs(draws.mean() - mu[0]) < 4 * sd[0] / 100


def test_joint_sample_at_noiseless_observation():
    gp = fit(SE1, se_hp(), [[0.3]], [1.5])
    s = joint_sample(gp, [[0.3]], np.random.default_rng(1))
    assert s[0] == pytest.approx(1.5, abs=1e-6)


def test_joint_sample_perfect_correlation():
    gp = fit(SE1, se_hp(), [], [])
    s = joint_sample(gp, [[0.25], [0.25]], np.random.default_rng(2))
    assert s[0] == pytest.approx(s[1], abs=1e-6)


def test_lazy_sample_is_consistent():
    gp = fit(SE1, se_hp(noise=0.01), [[0.0], [1.0]], [1.0, -1.0])
    path = LazyJointSample(gp, np.random.default_rng(3))
    a = path(np.array([[0.2], [0.5]]))
    b = path(np.array([[0.5], [0.21], [0.2]]))
    assert b[0] == a[1] and b[2] == a[0]
    # a nearby point is strongly correlated with its already drawn neighbour
    assert abs(b[1] - a[0]) < 0.05


def test_hallucinate_noop_and_single_point():
    gp = fit(SE1, se_hp(ls=0.3), [[0.0], [1.0]], [1.0, -1.0])
    assert hallucinate(gp, []) is gp
    h = hallucinate(gp, [[0.5]])
    probes = np.linspace(0, 1, 21)[:, None]
    assert np.allclose(h.predict(probes)[0], gp.predict(probes)[0], atol=1e-6)
    assert h.predict([[0.5]])[1][0] < 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_hallucinate_random(seed):
    rng = np.random.default_rng(50 + seed)
    spec, hp, X, y, Xs = oracles.random_instance(rng, n_max=20)
    gp = fit(spec, hp, X, y, mean="empirical")
    pending = Xs[:2]
    h = hallucinate(gp, pending)
    probes = np.vstack([Xs, rng.uniform(size=(40, X.shape[1]))])
    probes[:, list(spec.discrete)] = rng.integers(0, 3, (len(probes), len(spec.discrete)))
    assert np.max(np.abs(h.predict(probes)[0] - gp.predict(probes)[0])) <= 1e-6
    assert np.all(h.predict(probes)[1] <= gp.predict(probes)[1] + 1e-8)


def test_adding_data_never_increases_variance():
    rng = np.random.default_rng(9)
    spec, hp, X, y, Xs = oracles.random_instance(rng, n_max=30)
    small = fit(spec, hp, X[:-1], y[:-1]) if len(X) > 1 else fit(spec, hp, [], [])
    big = fit(spec, hp, X, y)
    assert np.all(big.predict(Xs)[1] <= small.predict(Xs)[1] + 1e-8)


def test_extend_matches_refit():
    rng = np.random.default_rng(10)
    spec, hp, X, y, Xs = oracles.random_instance(rng, n_max=30)
    full = fit(spec, hp, np.vstack([X, Xs[:3]]), np.concatenate([y, [0.1, 0.2, 0.3]]))
    inc = fit(spec, hp, X, y).extend(Xs[:3], [0.1, 0.2, 0.3])
    assert np.allclose(inc.predict(Xs)[0], full.predict(Xs)[0], rtol=1e-8, atol=1e-10)


def test_mll_lengthscale_recovery():
    """Grid maximiser of the likelihood sits within one cell of the generating lengthscale."""
    grid = np.array([0.1, 0.15, 0.2, 0.3, 0.45, 0.7, 1.0])
    truth = 4
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(40, 1))
        K = oracles.gram(SE1, se_hp(ls=grid[truth]), X, X) + 1e-4 * np.eye(40)
        y = np.linalg.cholesky(K) @ rng.standard_normal(40)
        mll = [fit(SE1, se_hp(noise=1e-4, ls=ls), X, y).log_marginal_likelihood() for ls in grid]
        hits += abs(int(np.argmax(mll)) - truth) <= 1
    assert hits >= 8


def test_maximize_mll_recovers_lengthscale():
    spec = KernelSpec(continuous=(0,), base="se")
    lo = np.log([0.5, 1e-4, 0.05])
    hi = np.log([2.0, 1e-2, 5.0])
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(30, 1))
        K = oracles.gram(SE1, se_hp(ls=0.5), X, X) + 1e-3 * np.eye(30)
        y = np.linalg.cholesky(K) @ rng.standard_normal(30)
        ls = maximize_mll(spec, X, y, bounds=(lo, hi), rng=rng).hp.lengthscales[0]
        hits += 0.3 <= ls <= 0.9
    assert hits >= 8
