"""Covariance functions over encoded domain / fidelity rows.

A kernel is described by a :class:`KernelSpec` (which columns play which role
and which base kernels are used) together with :class:`KernelHyperparams`.
The full kernel is a product of unit-normalised factors scaled by ``scale``::

    k(q, q') = scale * k_fid(z, z') * k_cont(x_c, x_c') * k_ham(x_d, x_d')

where ``k_cont`` is either one ARD kernel over all continuous columns or, for
additive specs, the average ``(1/M) sum_j k_j`` over the groups of a
:class:`Decomposition`.  Factors whose column set is empty are omitted.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    ArityMismatch,
    BadGroupIndex,
    KindMismatch,
    NotAdditive,
    NotAPermutation,
)

BASE_KINDS = ("se", "matern25")
FIDELITY_KINDS = ("se", "matern25", "expdecay")

_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class Decomposition:
    """Disjoint coordinate groups (0-based indices into the continuous columns)."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        flat = [i for g in groups for i in g]
        if any(len(g) == 0 for g in groups) or len(set(flat)) != len(flat):
            raise ValueError(f"groups must be non-empty and disjoint: {groups}")
        object.__setattr__(self, "groups", groups)

    @property
    def max_group_size(self):
        return max(len(g) for g in self.groups)

    @property
    def n_groups(self):
        return len(self.groups)

    def covers(self, d):
        return sorted(i for g in self.groups for i in g) == list(range(d))

    @classmethod
    def single(cls, d):
        return cls((tuple(range(d)),))


def decomposition_from_ordering(ordering, p):
    """Chunk a permutation of ``range(d)`` into consecutive groups of size ``p``."""
    ordering = [int(i) for i in ordering]
    d = len(ordering)
    if sorted(ordering) != list(range(d)):
        raise NotAPermutation(f"{ordering} is not a permutation of range({d})")
    if not 1 <= p <= d:
        raise ValueError(f"group size must be in [1, {d}], got {p}")
    return Decomposition(tuple(tuple(ordering[i:i + p]) for i in range(0, d, p)))


@dataclass(frozen=True)
class KernelSpec:
    """Structure of a kernel over encoded query rows.

    Parameters
    ----------
    continuous, discrete, fidelity : tuple of int
        Column indices (of the encoded query row) handled by the SE/Matern
        factor, the Hamming factor and the fidelity factor respectively.
    base : {"se", "matern25"}
        Kernel used on continuous columns.
    fidelity_kind : {"se", "matern25", "expdecay"}
        Kernel used on fidelity columns.
    additive : bool
        If True the continuous factor is additive over ``hp.decomposition``.
    fidelity_anchor : tuple of float
        Encoded ``z_hf``; the exponential-decay kernel is evaluated on the
        distances ``|z - z_hf|`` so that it peaks (at 1) at the target fidelity.
    """

    continuous: tuple = ()
    discrete: tuple = ()
    fidelity: tuple = ()
    base: str = "matern25"
    fidelity_kind: str = "se"
    additive: bool = False
    fidelity_anchor: tuple = ()

    def __post_init__(self):
        if self.base not in BASE_KINDS:
            raise KindMismatch(f"unknown base kernel {self.base!r}")
        if self.fidelity_kind not in FIDELITY_KINDS:
            raise KindMismatch(f"unknown fidelity kernel {self.fidelity_kind!r}")
        cols = list(self.continuous) + list(self.discrete) + list(self.fidelity)
        if len(set(cols)) != len(cols):
            raise ValueError("column roles overlap")
        if self.additive and self.discrete:
            raise KindMismatch("additive kernels support continuous columns only")
        if self.fidelity and self.fidelity_kind == "expdecay":
            if len(self.fidelity_anchor) != len(self.fidelity):
                raise ValueError("expdecay needs one anchor per fidelity column")

    @property
    def n_columns(self):
        return len(self.continuous) + len(self.discrete) + len(self.fidelity)

    @property
    def is_product(self):
        return len(self.fidelity) > 0

    def domain_spec(self):
        """The same spec with the fidelity factor removed."""
        return replace(self, fidelity=(), fidelity_anchor=())


@dataclass(frozen=True)
class KernelHyperparams:
    """Hyperparameters of a :class:`KernelSpec`.

    ``hamming_weights`` must lie on the simplex.  ``fidelity_lengthscales`` is
    used by SE/Matern fidelity kernels, ``decay_exponents`` by expdecay.
    """

    scale: float = 1.0
    lengthscales: tuple = ()
    hamming_weights: tuple = ()
    fidelity_lengthscales: tuple = ()
    decay_exponents: tuple = ()
    noise: float = 0.0
    decomposition: Decomposition = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if any(not ls > 0 for ls in self.lengthscales + self.fidelity_lengthscales):
            raise ValueError("lengthscales must be positive")
        if any(not a > 0 for a in self.decay_exponents):
            raise ValueError("decay exponents must be positive")
        if self.noise < 0:
            raise ValueError("noise variance must be nonnegative")
        w = self.hamming_weights
        if w and (min(w) < 0 or abs(sum(w) - 1.0) > 1e-8):
            raise ValueError("hamming weights must lie on the simplex")


def default_hyperparams(spec, noise=1e-6, decomposition=None):
    nd = len(spec.discrete)
    return KernelHyperparams(
        scale=1.0,
        lengthscales=(0.3,) * len(spec.continuous),
        hamming_weights=(1.0 / nd,) * nd if nd else (),
        fidelity_lengthscales=(0.5,) * len(spec.fidelity) if spec.fidelity_kind != "expdecay" else (),
        decay_exponents=(1.0,) * len(spec.fidelity) if spec.fidelity_kind == "expdecay" else (),
        noise=noise,
        decomposition=decomposition if spec.additive else None,
    )


def _groups(spec, hp):
    if not spec.additive:
        return (tuple(range(len(spec.continuous))),)
    if hp.decomposition is None:
        raise NotAdditive("additive spec needs a decomposition")
    if not hp.decomposition.covers(len(spec.continuous)):
        raise ValueError("decomposition must partition the continuous columns")
    return hp.decomposition.groups


def _check_hp(spec, hp):
    if len(hp.lengthscales) != len(spec.continuous):
        raise ArityMismatch("one lengthscale per continuous column required")
    if len(hp.hamming_weights) != len(spec.discrete):
        raise ArityMismatch("one hamming weight per discrete column required")
    if spec.fidelity:
        n = len(spec.fidelity)
        if spec.fidelity_kind == "expdecay":
            if len(hp.decay_exponents) != n:
                raise ArityMismatch("one decay exponent per fidelity column required")
        elif len(hp.fidelity_lengthscales) != n:
            raise ArityMismatch("one fidelity lengthscale per fidelity column required")


def _sqdist(A, B, ls):
    A = A / ls
    B = B / ls
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def _radial(kind, d2):
    if kind == "se":
        return np.exp(-0.5 * d2)
    r = np.sqrt(d2)
    return (1.0 + _SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-_SQRT5 * r)


def _as_rows(X, spec):
    X = np.array(X, dtype=float, ndmin=2)
    need = max((max(c) + 1 for c in (spec.continuous, spec.discrete, spec.fidelity) if c), default=0)
    if X.shape[1] < need:
        raise ArityMismatch(f"rows have {X.shape[1]} columns, kernel needs {need}")
    return X


def _fidelity_factor(spec, hp, A, B):
    fa, fb = A[:, list(spec.fidelity)], B[:, list(spec.fidelity)]
    if spec.fidelity_kind == "expdecay":
        anchor = np.asarray(spec.fidelity_anchor)
        ua, ub = np.abs(fa - anchor), np.abs(fb - anchor)
        out = np.ones((len(A), len(B)))
        for i, a in enumerate(hp.decay_exponents):
            out *= (ua[:, i][:, None] + ub[:, i][None, :] + 1.0) ** (-a)
        return out
    return _radial(spec.fidelity_kind, _sqdist(fa, fb, np.asarray(hp.fidelity_lengthscales)))


def _hamming_factor(spec, hp, A, B):
    out = np.zeros((len(A), len(B)))
    for c, w in zip(spec.discrete, hp.hamming_weights):
        out += w * (A[:, c][:, None] == B[:, c][None, :])
    return out


def _group_factor(spec, hp, group, A, B):
    cols = [spec.continuous[i] for i in group]
    ls = np.asarray([hp.lengthscales[i] for i in group])
    return _radial(spec.base, _sqdist(A[:, cols], B[:, cols], ls))


def _outer_factor(spec, hp, A, B):
    """Everything except the continuous factor (scale, fidelity, hamming)."""
    out = np.full((len(A), len(B)), float(hp.scale))
    if spec.fidelity:
        out *= _fidelity_factor(spec, hp, A, B)
    if spec.discrete:
        out *= _hamming_factor(spec, hp, A, B)
    return out


def gram_matrix(spec, hp, X, X2=None):
    """Kernel matrix between the rows of ``X`` and ``X2`` (default ``X``)."""
    _check_hp(spec, hp)
    A = _as_rows(X, spec)
    B = A if X2 is None else _as_rows(X2, spec)
    K = _outer_factor(spec, hp, A, B)
    if spec.continuous:
        groups = _groups(spec, hp)
        cont = sum(_group_factor(spec, hp, g, A, B) for g in groups) / len(groups)
        K = K * cont
    if X2 is None:
        K = 0.5 * (K + K.T)
    return K


def kernel_diag(spec, hp, X):
    """Prior variances ``k(x, x)`` for each row."""
    A = _as_rows(X, spec)
    if not spec.fidelity or spec.fidelity_kind != "expdecay":
        return np.full(len(A), float(hp.scale))
    anchor = np.asarray(spec.fidelity_anchor)
    u = np.abs(A[:, list(spec.fidelity)] - anchor)
    out = np.full(len(A), float(hp.scale))
    for i, a in enumerate(hp.decay_exponents):
        out *= (2.0 * u[:, i] + 1.0) ** (-a)
    return out


def component_gram(spec, hp, j, X, X2=None):
    """Kernel matrix of additive component ``j`` (including scale and ``1/M``)."""
    if not spec.additive:
        raise NotAdditive("component kernels need an additive spec")
    _check_hp(spec, hp)
    groups = _groups(spec, hp)
    if not 0 <= j < len(groups):
        raise BadGroupIndex(f"group {j} out of range(0, {len(groups)})")
    A = _as_rows(X, spec)
    B = A if X2 is None else _as_rows(X2, spec)
    return _outer_factor(spec, hp, A, B) * _group_factor(spec, hp, groups[j], A, B) / len(groups)


def component_diag(spec, hp, j, X):
    groups = _groups(spec, hp)
    return kernel_diag(spec, hp, X) / len(groups)


def kernel_eval(spec, hp, p, q):
    """Scalar kernel value between two encoded rows."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if len(p) != len(q):
        raise ArityMismatch("rows must have equal length")
    return float(gram_matrix(spec, hp, p[None, :], q[None, :])[0, 0])


# --------------------------------------------------------------------------
# Log-space parameter vectors and cached Gram computations for likelihoods


@dataclass(frozen=True)
class ParamLayout:
    """Maps :class:`KernelHyperparams` to a flat log-space vector.

    Order: log scale, log noise, log lengthscales, log hamming raw weights,
    log fidelity lengthscales or log decay exponents.
    """

    spec: KernelSpec
    names: tuple = field(init=False)

    def __post_init__(self):
        names = ["log_scale", "log_noise"]
        names += [f"log_ls[{c}]" for c in self.spec.continuous]
        names += [f"log_w[{c}]" for c in self.spec.discrete]
        tag = "log_decay" if self.spec.fidelity_kind == "expdecay" else "log_fls"
        names += [f"{tag}[{c}]" for c in self.spec.fidelity]
        object.__setattr__(self, "names", tuple(names))

    @property
    def size(self):
        return len(self.names)

    @property
    def slices(self):
        s = self.spec
        a = 2
        b = a + len(s.continuous)
        c = b + len(s.discrete)
        e = c + len(s.fidelity)
        return slice(a, b), slice(b, c), slice(c, e)

    def to_vector(self, hp):
        fid = hp.decay_exponents if self.spec.fidelity_kind == "expdecay" else hp.fidelity_lengthscales
        w = np.asarray(hp.hamming_weights, dtype=float)
        return np.concatenate([
            [np.log(hp.scale), np.log(max(hp.noise, 1e-300))],
            np.log(np.asarray(hp.lengthscales, dtype=float)),
            np.log(np.maximum(w, 1e-300)),
            np.log(np.asarray(fid, dtype=float)),
        ])

    def from_vector(self, theta, decomposition=None):
        theta = np.asarray(theta, dtype=float)
        sc, sd, sf = self.slices
        w = np.exp(theta[sd])
        fid = tuple(np.exp(theta[sf]))
        expdecay = self.spec.fidelity_kind == "expdecay"
        return KernelHyperparams(
            scale=float(np.exp(theta[0])),
            noise=float(np.exp(theta[1])),
            lengthscales=tuple(np.exp(theta[sc])),
            hamming_weights=tuple(w / w.sum()) if len(w) else (),
            fidelity_lengthscales=() if expdecay else fid,
            decay_exponents=fid if expdecay else (),
            decomposition=decomposition if self.spec.additive else None,
        )


class GramCache:
    """Precomputed pairwise quantities of a fixed training set.

    Makes repeated Gram evaluations (and log-likelihood gradients) cheap while
    hyperparameters change, which is what marginal-likelihood optimisation and
    slice sampling need.
    """

    def __init__(self, spec, X):
        self.spec = spec
        self.layout = ParamLayout(spec)
        X = _as_rows(X, spec)
        self.n = len(X)
        # per-column squared differences, shape (k, n, n)
        self.cont_d2 = np.stack([(X[:, c][:, None] - X[:, c][None, :]) ** 2 for c in spec.continuous]) \
            if spec.continuous else np.zeros((0, self.n, self.n))
        self.disc_eq = np.stack([(X[:, c][:, None] == X[:, c][None, :]).astype(float) for c in spec.discrete]) \
            if spec.discrete else np.zeros((0, self.n, self.n))
        if spec.fidelity and spec.fidelity_kind == "expdecay":
            anchor = np.asarray(spec.fidelity_anchor)
            u = np.abs(X[:, list(spec.fidelity)] - anchor)
            self.fid_logsum = np.stack([np.log(u[:, i][:, None] + u[:, i][None, :] + 1.0)
                                        for i in range(len(spec.fidelity))])
        elif spec.fidelity:
            self.fid_d2 = np.stack([(X[:, c][:, None] - X[:, c][None, :]) ** 2 for c in spec.fidelity])

    @staticmethod
    def _radial_parts(kind, d2_stack, ls):
        """Kernel matrix ``k`` and ``c`` with ``dk/dlog ls_i = c * d2_i / ls_i**2``."""
        inv = 1.0 / np.asarray(ls, dtype=float) ** 2
        d2 = np.tensordot(inv, d2_stack, axes=1)
        if kind == "se":
            k = np.exp(-0.5 * d2)
            return k, k, inv
        r = np.sqrt(d2)
        e = np.exp(-_SQRT5 * r)
        c = (5.0 / 3.0) * (1.0 + _SQRT5 * r) * e
        k = (1.0 + _SQRT5 * r + (5.0 / 3.0) * d2) * e
        return k, c, inv

    def gram(self, theta, decomposition=None, with_grad=False):
        """Noiseless Gram matrix for log-parameters ``theta``.

        With ``with_grad`` also returns a callable mapping a symmetric weight
        matrix ``W`` to the vector ``[sum(W * dK/dtheta_k)]_k`` (noise term
        excluded; it is handled by the caller).
        """
        spec = self.spec
        hp = self.layout.from_vector(theta, decomposition)
        n = self.n
        scale = hp.scale
        sc, sd, sf = self.layout.slices

        # fidelity factor
        F = np.ones((n, n))
        fid_parts = None
        if spec.fidelity:
            if spec.fidelity_kind == "expdecay":
                a = np.asarray(hp.decay_exponents)
                F = np.exp(-np.tensordot(a, self.fid_logsum, axes=1))
                fid_parts = ("expdecay", a)
            else:
                F, c, inv = self._radial_parts(spec.fidelity_kind, self.fid_d2, hp.fidelity_lengthscales)
                fid_parts = ("radial", c, inv)
        # hamming factor
        H = np.ones((n, n))
        w = np.asarray(hp.hamming_weights)
        if spec.discrete:
            H = np.tensordot(w, self.disc_eq, axes=1)
        # continuous factor
        C = np.ones((n, n))
        cont_parts = []
        if spec.continuous:
            groups = _groups(spec, hp)
            M = len(groups)
            ls = np.asarray(hp.lengthscales)
            C = np.zeros((n, n))
            for g in groups:
                idx = list(g)
                stack = self.cont_d2 if M == 1 else self.cont_d2[idx]
                k, c, inv = self._radial_parts(spec.base, stack, ls[idx])
                C += k / M
                cont_parts.append((idx, stack, c / M, inv))
        K = scale * F * H * C
        if not with_grad:
            return K

        def grad_traces(W):
            out = np.zeros(self.layout.size)
            out[0] = np.sum(W * K)
            if spec.continuous:
                base = W * (scale * F * H)
                lsg = np.zeros(len(spec.continuous))
                for idx, stack, c, inv in cont_parts:
                    lsg[idx] = inv * np.tensordot(stack, base * c, axes=([1, 2], [0, 1]))
                out[sc] = lsg
            if spec.discrete:
                base = W * (scale * F * C)
                # d/dlog w_m of sum_i alpha_i I_i = alpha_m (I_m - H)
                per = np.tensordot(self.disc_eq, base, axes=([1, 2], [0, 1]))
                out[sd] = w * (per - np.sum(base * H))
            if spec.fidelity:
                base = W * (scale * H * C)
                if fid_parts[0] == "expdecay":
                    a = fid_parts[1]
                    out[sf] = -a * np.tensordot(self.fid_logsum, base * F, axes=([1, 2], [0, 1]))
                else:
                    _, c, inv = fid_parts
                    out[sf] = inv * np.tensordot(self.fid_d2, base * c, axes=([1, 2], [0, 1]))
            return out

        return K, grad_traces
