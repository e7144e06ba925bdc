"""GP hyperparameter selection: marginal-likelihood maximisation (MML) and
posterior sampling (SFP) with a randomised choice between the two."""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.optimize import minimize

from .exceptions import EmptyData
from .gp import _jittered_cholesky
from .kernels import Decomposition, GramCache, ParamLayout, decomposition_from_ordering

HP_LABELS = ("mml", "sfp")
MML_FALLBACK = "mml-fallback"

_LOG_2PI = math.log(2.0 * math.pi)


def hyperparameter_bounds(spec, y):
    """Log-space box ``(lo, hi)`` for the :class:`ParamLayout` of ``spec``.

    Lengthscales live in ``[1e-2, 10]`` of the encoded (unit) range, the scale
    in ``[0.1, 10] * v`` and the noise variance in ``[1e-5, 1] * v`` where ``v``
    is the empirical variance of ``y`` (floored at ``1e-4``).
    """
    y = np.asarray(y, dtype=float)
    v = max(float(np.var(y)) if len(y) > 1 else 1.0, 1e-4)
    layout = ParamLayout(spec)
    lo = np.empty(layout.size)
    hi = np.empty(layout.size)
    lo[0], hi[0] = math.log(0.1 * v), math.log(10.0 * v)
    lo[1], hi[1] = math.log(1e-5 * v), math.log(v)
    sc, sd, sf = layout.slices
    lo[sc], hi[sc] = math.log(1e-2), math.log(10.0)
    lo[sd], hi[sd] = math.log(0.1), math.log(10.0)
    if spec.fidelity_kind == "expdecay":
        lo[sf], hi[sf] = math.log(0.1), math.log(10.0)
    else:
        lo[sf], hi[sf] = math.log(1e-2), math.log(10.0)
    return lo, hi


class LogLikelihood:
    """Log marginal likelihood of fixed data as a function of log-parameters.

    Observations are centred on their mean, matching how the optimiser fits
    its GP.  With no data the likelihood is identically zero.
    """

    def __init__(self, spec, X, y):
        self.spec = spec
        self.layout = ParamLayout(spec)
        self.y = np.asarray(y, dtype=float).ravel()
        self.n = len(self.y)
        self.r = self.y - self.y.mean() if self.n else self.y
        self.cache = GramCache(spec, X) if self.n else None
        self.n_evals = 0

    def _factor(self, K, noise):
        K = K.copy()
        K[np.diag_indices_from(K)] += noise
        try:
            return cholesky(K, lower=True, check_finite=False)
        except LinAlgError:
            try:
                return _jittered_cholesky(K, np.trace(K) / len(K))[0]
            except Exception:
                return None

    def __call__(self, theta, decomposition=None):
        self.n_evals += 1
        if self.n == 0:
            return 0.0
        K = self.cache.gram(theta, decomposition)
        L = self._factor(K, math.exp(theta[1]))
        if L is None:
            return -np.inf
        a = cho_solve((L, True), self.r, check_finite=False)
        return float(-0.5 * self.r @ a - np.log(np.diag(L)).sum() - 0.5 * self.n * _LOG_2PI)

    def value_and_grad(self, theta, decomposition=None):
        self.n_evals += 1
        if self.n == 0:
            return 0.0, np.zeros(self.layout.size)
        K, traces = self.cache.gram(theta, decomposition, with_grad=True)
        noise = math.exp(theta[1])
        L = self._factor(K, noise)
        if L is None:
            return -np.inf, np.zeros(self.layout.size)
        a = cho_solve((L, True), self.r, check_finite=False)
        val = float(-0.5 * self.r @ a - np.log(np.diag(L)).sum() - 0.5 * self.n * _LOG_2PI)
        Kinv = cho_solve((L, True), np.eye(self.n), check_finite=False)
        W = np.outer(a, a) - Kinv
        g = 0.5 * traces(W)
        g[1] = 0.5 * noise * np.trace(W)
        return val, g


@dataclass
class MLLResult:
    hp: object
    mll: float
    theta: np.ndarray
    candidates: list = field(default_factory=list)  # (decomposition, best mll) pairs


def _maximize_continuous(ll, lo, hi, starts, decomposition, maxiter):
    """L-BFGS-B from each start; returns the best point probed."""
    best = [-np.inf, None]

    def negf(theta):
        val, g = ll.value_and_grad(theta, decomposition)
        if val > best[0]:
            best[0], best[1] = val, np.array(theta, copy=True)
        if not np.isfinite(val):
            return 1e300, np.zeros_like(theta)
        return -val, -g

    free = hi > lo
    bounds = list(zip(lo, hi))
    for x0 in starts:
        x0 = np.clip(x0, lo, hi)
        if not np.any(free):
            negf(x0)
            continue
        try:
            minimize(negf, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                     options={"maxiter": maxiter})
        except (ValueError, FloatingPointError):
            negf(x0)
    if best[1] is None:
        best[1] = np.clip(starts[0], lo, hi)
    return best[0], best[1]


def decomposition_candidates(d, p_max, k, rng):
    """``k`` random decompositions for every group size ``p`` in ``1..p_max`` (deduplicated)."""
    out = []
    seen = set()
    for p in range(1, p_max + 1):
        for _ in range(k):
            dec = decomposition_from_ordering(rng.permutation(d), p)
            if dec.groups not in seen:
                seen.add(dec.groups)
                out.append(dec)
    return out


def sample_decompositions(d, p_max, k, rng):
    """``k`` draws from the decomposition prior: uniform ``p`` then a uniform ordering."""
    if not 1 <= p_max <= d:
        raise ValueError(f"need 1 <= p_max <= d, got p_max={p_max}, d={d}")
    return [decomposition_from_ordering(rng.permutation(d), int(rng.integers(1, p_max + 1)))
            for _ in range(k)]


def maximize_mll(spec, X, y, bounds=None, decompositions=None, rng=None, init=None,
                 n_starts=2, maxiter=100, screen_maxiter=15):
    """Maximise the log marginal likelihood over hyperparameters.

    Parameters
    ----------
    spec : KernelSpec
    X, y : encoded rows and observations
    bounds : (lo, hi) log-space arrays, default :func:`hyperparameter_bounds`
    decompositions : list of Decomposition, optional
        Candidate decompositions for additive specs.  Each candidate gets a
        short warm-started optimisation; the best one is then refined.
    init : log-parameter vector used as the first start
    n_starts : number of additional uniformly random starts

    Returns
    -------
    MLLResult
    """
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise EmptyData("maximize_mll needs data")
    rng = np.random.default_rng() if rng is None else rng
    layout = ParamLayout(spec)
    lo, hi = hyperparameter_bounds(spec, y) if bounds is None else (np.asarray(bounds[0], float),
                                                                      np.asarray(bounds[1], float))
    ll = LogLikelihood(spec, X, y)
    if init is None:
        init = 0.5 * (lo + hi)
        init[1] = lo[1] + 0.25 * (hi[1] - lo[1])
    init = np.clip(np.asarray(init, dtype=float), lo, hi)
    starts = [init] + [rng.uniform(lo, hi) for _ in range(n_starts)]

    if not spec.additive:
        val, theta = _maximize_continuous(ll, lo, hi, starts, None, maxiter)
        return MLLResult(layout.from_vector(theta), val, theta)

    if not decompositions:
        decompositions = [Decomposition.single(len(spec.continuous))]
    candidates = []
    best = (-np.inf, None, None)
    for dec in decompositions:
        if len(decompositions) == 1:
            val, theta = _maximize_continuous(ll, lo, hi, starts, dec, maxiter)
        else:
            val, theta = _maximize_continuous(ll, lo, hi, [init], dec, screen_maxiter)
        candidates.append((dec, val))
        if val > best[0]:
            best = (val, theta, dec)
    val, theta, dec = best
    if len(decompositions) > 1:
        val2, theta2 = _maximize_continuous(ll, lo, hi, [theta] + starts[1:], dec, maxiter)
        if val2 > val:
            val, theta = val2, theta2
            candidates = [(c, max(v, val2) if c == dec else v) for c, v in candidates]
    return MLLResult(layout.from_vector(theta, dec), val, theta, candidates)


def slice_sample_coordinate(logp, x, i, lo, hi, rng, width=None, max_steps=20, cur_logp=None):
    """One univariate slice-sampling update of coordinate ``i`` (stepping out + shrinkage).

    Returns the new point and its log density.
    """
    x = np.array(x, dtype=float)
    if width is None:
        width = 0.25 * (hi - lo)
    f0 = logp(x) if cur_logp is None else cur_logp
    log_y = f0 - rng.exponential()
    x0 = x[i]
    left = x0 - width * rng.uniform()
    right = left + width
    j = int(math.floor(max_steps * rng.uniform()))
    k = max_steps - 1 - j

    def at(v):
        z = x.copy()
        z[i] = v
        return logp(z)

    while j > 0 and left > lo and at(left) > log_y:
        left -= width
        j -= 1
    while k > 0 and right < hi and at(right) > log_y:
        right += width
        k -= 1
    left, right = max(left, lo), min(right, hi)
    for _ in range(200):
        v = rng.uniform(left, right)
        fv = at(v)
        if fv > log_y:
            x[i] = v
            return x, fv
        if v < x0:
            left = v
        else:
            right = v
    return x, f0


def gibbs_sample(logp, x0, lo, hi, count, rng, burn_in=1000, thin=100, discrete=None, width=None):
    """Random-scan Gibbs sampler on a box with a uniform prior.

    Continuous coordinates are updated by slice sampling; coordinates with
    ``lo == hi`` stay fixed.  ``discrete`` optionally supplies one extra
    categorical block as ``(state0, propose, logp_with_state)``, updated by
    Metropolis-Hastings with a proposal drawn from its (uniform) prior, where
    ``logp_with_state(x, state)`` replaces ``logp``.

    The first ``burn_in`` sweeps are discarded, then every ``thin``-th state
    is kept until ``count`` samples are collected.  Returns a list of
    ``(x, state)`` pairs (``state`` is None without a discrete block).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    free = [i for i in range(len(x)) if hi[i] > lo[i]]
    if width is None:
        width = 0.25 * (hi - lo)
    state = None
    if discrete is not None:
        state, propose, logp_state = discrete

        def target(z):
            return logp_state(z, state)
    else:
        target = logp
    cur = target(x)
    out = []
    total = burn_in + count * thin
    n_coords = len(free) + (1 if discrete is not None else 0)
    for sweep in range(1, total + 1):
        for c in rng.permutation(n_coords):
            if c < len(free):
                i = free[c]
                x, cur = slice_sample_coordinate(target, x, i, lo[i], hi[i], rng, width=width[i],
                                                 cur_logp=cur)
            else:
                prop = propose(rng)
                fp = logp_state(x, prop)
                if np.log(rng.uniform()) < fp - cur:
                    state, cur = prop, fp
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            out.append((x.copy(), state))
    return out


def gibbs_sample_posterior(spec, X, y, count, rng, bounds=None, burn_in=1000, thin=100, init=None,
                           p_max=None, init_decomposition=None):
    """Sample hyperparameters from the posterior under a uniform prior on the log-space box.

    For additive specs the decomposition is an extra discrete coordinate with
    the prior "uniform group size in ``1..p_max``, then a uniform ordering".
    Returns ``count`` :class:`KernelHyperparams`.
    """
    if count < 1:
        raise ValueError("count must be positive")
    layout = ParamLayout(spec)
    y = np.asarray(y, dtype=float)
    lo, hi = hyperparameter_bounds(spec, y) if bounds is None else (np.asarray(bounds[0], float),
                                                                      np.asarray(bounds[1], float))
    ll = LogLikelihood(spec, X, y)
    x0 = 0.5 * (lo + hi) if init is None else np.asarray(init, dtype=float)
    discrete = None
    if spec.additive:
        d = len(spec.continuous)
        p_max = min(p_max or d, d)
        state0 = init_decomposition or sample_decompositions(d, p_max, 1, rng)[0]

        def propose(r):
            return sample_decompositions(d, p_max, 1, r)[0]

        discrete = (state0, propose, lambda z, dec: ll(z, dec))
        draws = gibbs_sample(None, x0, lo, hi, count, rng, burn_in, thin, discrete=discrete)
    else:
        draws = gibbs_sample(ll, x0, lo, hi, count, rng, burn_in, thin)
    return [layout.from_vector(x, dec) for x, dec in draws]


@dataclass
class HyperOptions:
    """Tunables of the hyperparameter strategy."""

    n_cyc: int = 17
    burn_in: int = 1000
    thin: int = 100
    p_max: int = 6
    n_decompositions: int = 25
    n_starts: int = 2
    screen_maxiter: int = 15
    strategies: tuple = HP_LABELS
    init_weight: float = 1.0


@dataclass
class HyperState:
    """MML optimum, FIFO of posterior samples and the MML/SFP weights."""

    spec: object
    options: HyperOptions = field(default_factory=HyperOptions)
    theta_mml: object = None
    theta_mml_vector: np.ndarray = None
    queue: deque = field(default_factory=deque)
    weights: dict = None
    candidates: list = field(default_factory=list)
    n_refresh: int = 0

    def __post_init__(self):
        if self.weights is None:
            self.weights = {h: float(self.options.init_weight) for h in self.options.strategies}


def choose_hp(state, rng):
    """Pick a strategy with probability proportional to its weight, then its hyperparameters.

    SFP pops the front of the sample queue; with an empty queue it falls back
    to the MML value and reports ``"mml-fallback"``.
    """
    labels = list(state.weights)
    w = np.array([state.weights[h] for h in labels], dtype=float)
    label = labels[int(rng.choice(len(labels), p=w / w.sum()))]
    if label == "sfp":
        if state.queue:
            return "sfp", state.queue.popleft()
        return MML_FALLBACK, state.theta_mml
    return "mml", state.theta_mml


def refresh(state, X, y, rng):
    """Re-fit the MML hyperparameters and refill the posterior-sample queue.

    Weights are preserved.  For additive specs the MML decomposition is
    chosen by partial maximisation over ``n_decompositions`` random candidates
    per group size.
    """
    spec = state.spec
    opts = state.options
    y = np.asarray(y, dtype=float)
    lo, hi = hyperparameter_bounds(spec, y)
    init = None
    if state.theta_mml_vector is not None:
        init = np.clip(state.theta_mml_vector, lo, hi)
    decompositions = None
    if spec.additive:
        d = len(spec.continuous)
        decompositions = decomposition_candidates(d, min(opts.p_max, d), opts.n_decompositions, rng)
        if state.theta_mml is not None and state.theta_mml.decomposition not in decompositions:
            decompositions.append(state.theta_mml.decomposition)
    res = maximize_mll(spec, X, y, bounds=(lo, hi), decompositions=decompositions, rng=rng,
                       init=init, n_starts=opts.n_starts, screen_maxiter=opts.screen_maxiter)
    queue = deque()
    if "sfp" in state.weights:
        samples = gibbs_sample_posterior(
            spec, X, y, opts.n_cyc, rng, bounds=(lo, hi), burn_in=opts.burn_in, thin=opts.thin,
            init=res.theta, p_max=opts.p_max, init_decomposition=res.hp.decomposition,
        )
        queue.extend(samples)
    return HyperState(
        spec=spec,
        options=opts,
        theta_mml=res.hp,
        theta_mml_vector=res.theta,
        queue=queue,
        weights=dict(state.weights),
        candidates=res.candidates,
        n_refresh=state.n_refresh + 1,
    )
