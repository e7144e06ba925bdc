"""Independent reference implementations used by the tests.

Everything here is written from the formulas with plain loops and dense
``numpy.linalg.solve`` / ``slogdet`` so that it shares no code with the package.
"""

import math

import numpy as np

from mixbo.kernels import Decomposition, KernelHyperparams, KernelSpec


def _radial(kind, r2):
    if kind == "se":
        return math.exp(-0.5 * r2)
    r = math.sqrt(r2)
    return (1.0 + math.sqrt(5.0) * r + 5.0 * r2 / 3.0) * math.exp(-math.sqrt(5.0) * r)


def kernel(spec, hp, p, q, group=None):
    """Scalar kernel value; ``group`` restricts the continuous part to one additive component."""
    val = hp.scale
    if spec.fidelity:
        if spec.fidelity_kind == "expdecay":
            for i, c in enumerate(spec.fidelity):
                u = abs(p[c] - spec.fidelity_anchor[i])
                v = abs(q[c] - spec.fidelity_anchor[i])
                val *= (u + v + 1.0) ** (-hp.decay_exponents[i])
        else:
            r2 = sum(((p[c] - q[c]) / hp.fidelity_lengthscales[i]) ** 2 for i, c in enumerate(spec.fidelity))
            val *= _radial(spec.fidelity_kind, r2)
    if spec.discrete:
        val *= sum(w for c, w in zip(spec.discrete, hp.hamming_weights) if p[c] == q[c])
    if spec.continuous:
        groups = hp.decomposition.groups if spec.additive else (tuple(range(len(spec.continuous))),)
        terms = []
        for g in groups:
            r2 = sum(((p[spec.continuous[i]] - q[spec.continuous[i]]) / hp.lengthscales[i]) ** 2 for i in g)
            terms.append(_radial(spec.base, r2))
        if group is None:
            val *= sum(terms) / len(groups)
        else:
            val *= terms[group] / len(groups)
    return val


def gram(spec, hp, A, B, group=None):
    return np.array([[kernel(spec, hp, a, b, group) for b in B] for a in A])


def dense_posterior(spec, hp, X, y, Xs, mean=0.0, group=None):
    """Mean and variance at ``Xs`` (component ``group`` if given) by dense solves."""
    K = gram(spec, hp, X, X) + hp.noise * np.eye(len(X))
    k = gram(spec, hp, X, Xs, group)
    kss = np.array([kernel(spec, hp, x, x, group) for x in Xs])
    m = mean if group is None else mean / len(hp.decomposition.groups)
    mu = m + k.T @ np.linalg.solve(K, y - mean)
    var = kss - np.einsum("ij,ij->j", k, np.linalg.solve(K, k))
    return mu, var


def dense_mll(spec, hp, X, y, mean=0.0):
    K = gram(spec, hp, X, X) + hp.noise * np.eye(len(X))
    r = y - mean
    _, logdet = np.linalg.slogdet(K)
    return -0.5 * r @ np.linalg.solve(K, r) - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi)


def random_instance(rng, additive=False, n_max=50, fidelity=False):
    """A random (spec, hp, X, y, Xs) problem over mixed columns."""
    nc = int(rng.integers(1, 5))
    nd = 0 if additive else int(rng.integers(0, 3))
    nf = int(rng.integers(1, 3)) if fidelity else 0
    cont = tuple(range(nc))
    disc = tuple(range(nc, nc + nd))
    fid = tuple(range(nc + nd, nc + nd + nf))
    fk = str(rng.choice(["se", "matern25", "expdecay"])) if fidelity else "se"
    anchor = tuple(rng.uniform(0, 1, nf)) if fk == "expdecay" else ()
    spec = KernelSpec(cont, disc, fid, base=str(rng.choice(["se", "matern25"])), fidelity_kind=fk,
                      additive=additive, fidelity_anchor=anchor)
    decomp = None
    if additive:
        perm = rng.permutation(nc)
        cuts = sorted(rng.choice(np.arange(1, nc), size=int(rng.integers(0, nc)), replace=False)) if nc > 1 else []
        decomp = Decomposition(tuple(tuple(g) for g in np.split(perm, cuts)))
    w = rng.dirichlet(np.ones(nd)) if nd else ()
    scale = float(np.exp(rng.uniform(-1, 1)))
    hp = KernelHyperparams(
        scale=scale,
        lengthscales=tuple(np.exp(rng.uniform(np.log(0.1), np.log(2.0), nc))),
        hamming_weights=tuple(w),
        fidelity_lengthscales=tuple(np.exp(rng.uniform(-1, 0.5, nf))) if fk != "expdecay" else (),
        decay_exponents=tuple(rng.uniform(0.5, 3.0, nf)) if fk == "expdecay" else (),
        noise=scale * float(np.exp(rng.uniform(np.log(1e-3), np.log(1e-1)))),
        decomposition=decomp,
    )
    n = int(rng.integers(1, n_max + 1))
    d = nc + nd + nf

    def rows(m):
        R = rng.uniform(0, 1, (m, d))
        R[:, list(disc)] = rng.integers(0, 3, (m, nd))
        return R

    X = rows(n)
    y = rng.normal(size=n) + np.sin(3 * X[:, 0])
    return spec, hp, X, y, rows(10)
