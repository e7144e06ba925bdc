"""Acquisition functions and the adaptive acquisition weights.

Acquisitions are built as batched callables over encoded domain rows so that
the acquisition optimisers can score whole candidate pools at once.  Values
are always to be maximised.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .exceptions import NotAdditive, UnknownAcquisition, UnknownLabel
from .gp import LazyJointSample

ALL_ACQUISITIONS = ("ucb", "ei", "pi", "ts", "ttei", "add_ucb")
DEFAULT_ACQUISITIONS = ("ucb", "ei", "ts", "ttei")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def default_acquisitions(domain):
    """Default acquisition list; Add-GP-UCB joins for unconstrained all-Euclidean domains."""
    if domain.is_euclidean and not domain.has_constraint:
        return DEFAULT_ACQUISITIONS + ("add_ucb",)
    return DEFAULT_ACQUISITIONS


def ucb_beta(t, d):
    """Exploration coefficient ``beta_t = 0.5 d log(2t + 1)``."""
    if t < 1 or d < 1:
        raise ValueError("need t >= 1 and d >= 1")
    return 0.5 * d * math.log(2 * t + 1)


def ucb(mu, sigma, beta):
    return mu + math.sqrt(beta) * sigma


def expected_improvement(mu, sigma, y_star):
    """EI for maximisation; reduces to ``max(mu - y*, 0)`` where ``sigma == 0``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = mu - y_star
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    with np.errstate(over="ignore"):
        # tiny sigma overflows g to +-inf, which the limits below handle
        g = diff / safe
        val = diff * ndtr(g) + safe * np.exp(-0.5 * g * g) * _INV_SQRT_2PI
    return np.where(pos, np.maximum(val, 0.0), np.maximum(diff, 0.0))


def probability_of_improvement(mu, sigma, y_star):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = mu - y_star
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    with np.errstate(over="ignore"):
        return np.where(pos, ndtr(diff / safe), (diff > 0).astype(float))


@dataclass
class AcqState:
    """Enabled acquisitions, their weights, the step counter and the incumbent."""

    labels: tuple = DEFAULT_ACQUISITIONS
    weights: dict = None
    t: int = 1
    incumbent: float = -np.inf
    d: int = 1
    init_weight: float = 1.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if not self.labels:
            raise ValueError("at least one acquisition is required")
        for lab in self.labels:
            if lab not in ALL_ACQUISITIONS:
                raise UnknownAcquisition(f"unknown acquisition {lab!r}")
        if self.weights is None:
            self.weights = {lab: float(self.init_weight) for lab in self.labels}

    @property
    def beta(self):
        return ucb_beta(max(self.t, 1), self.d)


def choose_acquisition(state, rng):
    """Draw a label with probability proportional to its weight."""
    labels = state.labels
    w = np.array([state.weights[lab] for lab in labels], dtype=float)
    return labels[int(rng.choice(len(labels), p=w / w.sum()))]


def update_weights(state, used_label, improved):
    """Return a new state with ``w[used_label] += 1`` if ``improved``."""
    if used_label not in state.weights:
        raise UnknownLabel(used_label)
    if not improved:
        return state
    weights = dict(state.weights)
    weights[used_label] += 1.0
    return replace(state, weights=weights, history=state.history + [used_label])


def _y_star(gp, state):
    if np.isfinite(state.incumbent):
        return state.incumbent
    return float(np.max(gp.y)) if gp.n else 0.0


def _identity(rows):
    return rows


class Acquisition:
    """A batched acquisition over encoded domain rows.

    ``embed`` maps domain rows to model query rows (for multi-fidelity models
    it appends the target-fidelity columns).  ``reference`` is the first-pass
    EI maximiser used by the second TTEI pass.
    """

    def __init__(self, kind, gp, state, rng=None, embed=None, reference=None):
        if kind not in ALL_ACQUISITIONS:
            raise UnknownAcquisition(f"unknown acquisition {kind!r}")
        self.kind = kind
        self.gp = gp
        self.state = state
        self.embed = embed or _identity
        self.y_star = _y_star(gp, state)
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self._sample = LazyJointSample(gp, rng) if kind == "ts" else None
        if kind == "ttei" and self.reference is not None:
            r = self.embed(self.reference[None, :])
            self._ref_mu, ref_sd = gp.predict(r)
            self._ref_var = ref_sd[0] ** 2
            self._ref_row = r

    def __call__(self, rows):
        rows = np.array(rows, dtype=float, ndmin=2)
        Q = self.embed(rows)
        if self.kind == "ts":
            return self._sample(Q)
        mu, sd = self.gp.predict(Q)
        if self.kind in ("ucb", "add_ucb"):
            return mu + math.sqrt(self.state.beta) * sd
        if self.kind == "pi":
            return probability_of_improvement(mu, sd, self.y_star)
        if self.kind == "ei" or self.reference is None:
            return expected_improvement(mu, sd, self.y_star)
        # second TTEI pass: EI of f(x) - f(x1) above zero under the joint posterior
        cov = self.gp.posterior_cov(Q, self._ref_row)[:, 0]
        var = np.maximum(sd ** 2 + self._ref_var - 2.0 * cov, 0.0)
        return expected_improvement(mu - self._ref_mu[0], np.sqrt(var), 0.0)


def acq_value(kind, gp, x, state, rng=None, reference=None):
    """Acquisition value at a single encoded row ``x``."""
    return float(Acquisition(kind, gp, state, rng=rng, reference=reference)(np.asarray(x)[None, :])[0])


def maximize_acquisition(kind, gp, state, maximizer, rng, embed=None):
    """Maximise a (non-additive) acquisition with ``maximizer(f) -> (row, value)``.

    TTEI first maximises EI; with probability one half that maximiser is
    returned, otherwise the second pass maximises the improvement over it.
    """
    if kind == "ttei":
        first, val = maximizer(Acquisition("ei", gp, state, rng, embed))
        if rng.uniform() < 0.5:
            return first, val
        return maximizer(Acquisition("ttei", gp, state, rng, embed, reference=first))
    if kind == "add_ucb":
        kind = "ucb"
    return maximizer(Acquisition(kind, gp, state, rng, embed))


def addgpucb_next(gp, state, group_maximizer, n_columns=None, embed=None):
    """Add-GP-UCB: maximise ``mu_j + sqrt(beta) sigma_j`` separately for every group.

    ``group_maximizer(f, cols)`` must return the best values for the encoded
    columns ``cols`` given a batched ``f`` over ``(m, len(cols))`` arrays.
    Returns the assembled encoded domain row.
    """
    spec = gp.spec
    if not spec.additive:
        raise NotAdditive("Add-GP-UCB needs an additive model")
    embed = embed or _identity
    n_columns = len(spec.continuous) + len(spec.discrete) if n_columns is None else n_columns
    root_beta = math.sqrt(state.beta)
    out = np.zeros(n_columns)
    for j, group in enumerate(gp.hp.decomposition.groups):
        cols = [spec.continuous[i] for i in group]

        def f(sub, j=j, cols=cols):
            sub = np.array(sub, dtype=float, ndmin=2)
            rows = np.zeros((len(sub), n_columns))
            rows[:, cols] = sub
            mu, sd = gp.predict_component(j, embed(rows))
            return mu + root_beta * sd

        out[cols] = group_maximizer(f, cols)
    return out
