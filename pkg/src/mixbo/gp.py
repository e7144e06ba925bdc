"""Exact Gaussian-process regression on encoded rows."""

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .exceptions import ArityMismatch, BadGroupIndex, EmptyData, NotAdditive, SingularCovariance, SingularGram
from .kernels import (
    component_diag,
    component_gram,
    gram_matrix,
    kernel_diag,
)

_LOG_2PI = np.log(2.0 * np.pi)


def _jittered_cholesky(A, base_scale):
    """Cholesky factor of ``A``, escalating diagonal jitter on failure.

    Returns ``(L, jitter)``.  Jitter starts at ``1e-9 * base_scale`` and grows
    tenfold up to ``1e-3 * base_scale``.
    """
    if not np.all(np.isfinite(A)):
        raise SingularGram("non-finite Gram matrix")
    try:
        return cholesky(A, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    base_scale = max(float(base_scale), 1e-300)
    jitter = 1e-9 * base_scale
    eye = np.eye(len(A))
    while jitter <= 1e-3 * base_scale * (1 + 1e-12):
        try:
            return cholesky(A + jitter * eye, lower=True, check_finite=False), jitter
        except LinAlgError:
            jitter *= 10.0
    raise SingularGram("Gram matrix is not positive definite even after jitter")


class GPModel:
    """A GP conditioned on data; immutable once constructed.

    Use :func:`fit` to build one.  ``y_mean`` is the constant prior mean
    (observations are centred on it); ``L`` factors ``K + noise*I (+ jitter)``
    and ``alpha`` solves that system against the centred observations.
    """

    def __init__(self, spec, hp, X, y, y_mean, L, alpha, jitter=0.0):
        self.spec = spec
        self.hp = hp
        self.X = X
        self.y = y
        self.y_mean = y_mean
        self.L = L
        self.alpha = alpha
        self.jitter = jitter

    @property
    def n(self):
        return len(self.y)

    def _rows(self, Xs):
        Xs = np.array(Xs, dtype=float, ndmin=2)
        if self.n and Xs.shape[1] != self.X.shape[1]:
            raise ArityMismatch(f"expected {self.X.shape[1]} columns, got {Xs.shape[1]}")
        return Xs

    def predict(self, Xs, return_cov=False):
        """Posterior mean and standard deviation (or covariance) at rows ``Xs``."""
        Xs = self._rows(Xs)
        if self.n == 0:
            mu = np.full(len(Xs), self.y_mean)
            if return_cov:
                return mu, gram_matrix(self.spec, self.hp, Xs)
            return mu, np.sqrt(kernel_diag(self.spec, self.hp, Xs))
        Ks = gram_matrix(self.spec, self.hp, self.X, Xs)
        mu = self.y_mean + Ks.T @ self.alpha
        V = solve_triangular(self.L, Ks, lower=True, check_finite=False)
        if return_cov:
            cov = gram_matrix(self.spec, self.hp, Xs) - V.T @ V
            return mu, 0.5 * (cov + cov.T)
        var = kernel_diag(self.spec, self.hp, Xs) - np.einsum("ij,ij->j", V, V)
        return mu, np.sqrt(np.maximum(var, 0.0))

    def predict_var_raw(self, Xs):
        """Unclamped posterior variances (for numerical diagnostics)."""
        Xs = self._rows(Xs)
        prior = kernel_diag(self.spec, self.hp, Xs)
        if self.n == 0:
            return prior
        V = solve_triangular(self.L, gram_matrix(self.spec, self.hp, self.X, Xs), lower=True,
                             check_finite=False)
        return prior - np.einsum("ij,ij->j", V, V)

    def posterior_cov(self, A, B):
        """Posterior cross-covariance between row sets ``A`` and ``B``."""
        A, B = self._rows(A), self._rows(B)
        prior = gram_matrix(self.spec, self.hp, A, B)
        if self.n == 0:
            return prior
        Va = solve_triangular(self.L, gram_matrix(self.spec, self.hp, self.X, A), lower=True,
                              check_finite=False)
        Vb = solve_triangular(self.L, gram_matrix(self.spec, self.hp, self.X, B), lower=True,
                              check_finite=False)
        return prior - Va.T @ Vb

    def predict_component(self, j, Xs):
        """Posterior of additive component ``j`` at rows ``Xs``.

        Only the columns of group ``j`` (and fidelity columns) of ``Xs`` are
        read.  The constant prior mean is split evenly across components so
        that component means sum to the joint mean.
        """
        if not self.spec.additive:
            raise NotAdditive("model kernel is not additive")
        Xs = self._rows(Xs)
        M = self.hp.decomposition.n_groups
        prior = component_diag(self.spec, self.hp, j, Xs)
        if self.n == 0:
            return np.full(len(Xs), self.y_mean / M), np.sqrt(prior)
        Kj = component_gram(self.spec, self.hp, j, self.X, Xs)
        mu = self.y_mean / M + Kj.T @ self.alpha
        V = solve_triangular(self.L, Kj, lower=True, check_finite=False)
        var = prior - np.einsum("ij,ij->j", V, V)
        return mu, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self):
        if self.n == 0:
            raise EmptyData("log marginal likelihood needs at least one observation")
        r = self.y - self.y_mean
        return float(-0.5 * r @ self.alpha - np.log(np.diag(self.L)).sum() - 0.5 * self.n * _LOG_2PI)

    def extend(self, Xnew, ynew, noise=None):
        """Condition on extra observations via a block Cholesky update.

        Hyperparameters and ``y_mean`` are kept.  ``noise`` defaults to the
        model's noise variance.
        """
        Xnew = self._rows(Xnew)
        ynew = np.asarray(ynew, dtype=float).ravel()
        if len(Xnew) == 0:
            return self
        noise = self.hp.noise if noise is None else noise
        K22 = gram_matrix(self.spec, self.hp, Xnew)
        K22[np.diag_indices_from(K22)] += noise + self.jitter
        scale = max(np.trace(K22) / len(K22), 1e-300)
        if self.n == 0:
            L, _ = _jittered_cholesky(K22, scale)
            X, y, Lnew = Xnew, ynew, L
        else:
            K12 = gram_matrix(self.spec, self.hp, self.X, Xnew)
            B = solve_triangular(self.L, K12, lower=True, check_finite=False)
            S = K22 - B.T @ B
            L22, _ = _jittered_cholesky(0.5 * (S + S.T), scale)
            n, m = self.n, len(Xnew)
            Lnew = np.zeros((n + m, n + m))
            Lnew[:n, :n] = self.L
            Lnew[n:, :n] = B.T
            Lnew[n:, n:] = L22
            X = np.vstack([self.X, Xnew])
            y = np.concatenate([self.y, ynew])
        alpha = cho_solve((Lnew, True), y - self.y_mean, check_finite=False)
        return GPModel(self.spec, self.hp, X, y, self.y_mean, Lnew, alpha, self.jitter)


def fit(spec, hp, X, y, mean=0.0):
    """Condition a GP with kernel ``(spec, hp)`` on encoded rows ``X`` and values ``y``.

    ``mean`` is the constant prior mean.  Pass ``"empirical"`` to centre the
    observations on their average (zero for empty data).
    """
    X = np.array(X, dtype=float, ndmin=2) if len(X) else np.zeros((0, spec.n_columns))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ArityMismatch("X and y lengths differ")
    if isinstance(mean, str):
        if mean != "empirical":
            raise ValueError(f"unknown mean {mean!r}")
        mean = float(y.mean()) if len(y) else 0.0
    if len(y) == 0:
        return GPModel(spec, hp, X, y, float(mean), np.zeros((0, 0)), np.zeros(0))
    K = gram_matrix(spec, hp, X)
    K[np.diag_indices_from(K)] += hp.noise
    L, jitter = _jittered_cholesky(K, np.trace(K) / len(K))
    alpha = cho_solve((L, True), y - mean, check_finite=False)
    return GPModel(spec, hp, X, y, float(mean), L, alpha, jitter)


def posterior(gp, x):
    """Posterior ``(mu, sigma)`` at a single encoded row."""
    mu, sd = gp.predict(np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(sd[0])


def posterior_component(gp, j, x):
    """Posterior ``(mu_j, sigma_j)`` of additive component ``j`` at one encoded row."""
    if not gp.spec.additive:
        raise NotAdditive("model kernel is not additive")
    if not 0 <= j < gp.hp.decomposition.n_groups:
        raise BadGroupIndex(f"group {j} out of range")
    mu, sd = gp.predict_component(j, np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(sd[0])


def log_marginal_likelihood(gp):
    return gp.log_marginal_likelihood()


def sample_mvn(mean, cov, rng, size=None):
    """Draw from ``N(mean, cov)``; falls back to a clipped eigendecomposition."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if not np.all(np.isfinite(cov)):
        raise SingularCovariance("non-finite covariance")
    shape = (len(mean),) if size is None else (size, len(mean))
    z = rng.standard_normal(shape)
    try:
        L = cholesky(cov, lower=True, check_finite=False)
        root = L
    except LinAlgError:
        w, V = np.linalg.eigh(0.5 * (cov + cov.T))
        root = V * np.sqrt(np.maximum(w, 0.0))
    return mean + z @ root.T


def joint_sample(gp, X, rng):
    """One joint posterior draw of the latent function at rows ``X``."""
    X = np.array(X, dtype=float, ndmin=2)
    if len(X) == 0:
        raise ValueError("need at least one point")
    mu, cov = gp.predict(X, return_cov=True)
    return sample_mvn(mu, cov, rng)


def hallucinate(gp, pending):
    """Condition ``gp`` on its own posterior mean at the ``pending`` rows."""
    pending = np.array(pending, dtype=float, ndmin=2) if len(pending) else np.zeros((0, 0))
    if len(pending) == 0:
        return gp
    mu, _ = gp.predict(pending)
    return gp.extend(pending, mu)


class LazyJointSample:
    """A posterior sample path revealed lazily, consistent across calls.

    Each call conditions on the values already drawn, so evaluating the path
    on successive candidate batches yields one coherent joint sample.
    """

    def __init__(self, gp, rng, latent_noise=1e-10):
        self.rng = rng
        self._model = gp
        self._noise = latent_noise * gp.hp.scale
        self._cache = {}

    def __call__(self, X):
        X = np.array(X, dtype=float, ndmin=2)
        out = np.empty(len(X))
        keys = [r.tobytes() for r in X]
        new_rows, new_keys = [], []
        seen = set()
        for i, k in enumerate(keys):
            if k not in self._cache and k not in seen:
                seen.add(k)
                new_rows.append(X[i])
                new_keys.append(k)
        if new_rows:
            R = np.array(new_rows)
            mu, cov = self._model.predict(R, return_cov=True)
            vals = sample_mvn(mu, cov, self.rng)
            self._model = self._model.extend(R, vals, noise=self._noise)
            for k, v in zip(new_keys, vals):
                self._cache[k] = float(v)
        for i, k in enumerate(keys):
            out[i] = self._cache[k]
        return out
