"""Maximisers for acquisition functions.

:func:`maximize_direct` is a deterministic dividing-rectangles search on a
box; :func:`maximize_acq_ea` is an evolutionary search over mixed,
constrained domains.  Both call ``f`` on batches of rows.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleSampling

DIRECT_MAX_DIM = 60


@dataclass(frozen=True)
class EAConfig:
    """Evolutionary-search settings.

    ``budget`` is the total number of evaluations; when None it defaults to
    ``max(500, 50 d)``.  The number of generations is then
    ``(budget - n0) // n_mut``.
    """

    n0: int = 20
    n_mut: int = 10
    budget: int = None
    temperature: float = None

    def __post_init__(self):
        if self.n0 < 1 or self.n_mut < 1:
            raise ValueError("n0 and n_mut must be positive")
        if self.budget is not None and self.budget < self.n0:
            raise ValueError("budget must cover the initial pool")

    def total_budget(self, d):
        return self.budget if self.budget is not None else max(500, 50 * d)

    def generations(self, d):
        return max(0, (self.total_budget(d) - self.n0) // self.n_mut)


def default_budget(d):
    return max(500, 50 * d)


# ----------------------------------------------------------------------------
# DIRECT


def _potentially_optimal(sizes, values, eps):
    """Indices selected by the lower-convex-hull rule over ``(size, value)`` (minimisation)."""
    fmin = values.min()
    keys = np.round(sizes, 12)
    # best rectangle of every size class, classes in ascending size
    order = np.lexsort((values, keys))
    first = np.ones(len(order), dtype=bool)
    first[1:] = keys[order[1:]] != keys[order[:-1]]
    idx = order[first]
    xs, ys = keys[idx], values[idx]
    # start at the largest size attaining the smallest value
    start = int(np.flatnonzero(ys == ys.min())[-1])
    hull = []
    for j in range(start, len(idx)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (ys[b] - ys[a]) * (xs[j] - xs[a]) >= (ys[j] - ys[a]) * (xs[b] - xs[a]):
                hull.pop()
            else:
                break
        hull.append(j)
    chosen = []
    for k, j in enumerate(hull):
        if k + 1 < len(hull):
            j2 = hull[k + 1]
            slope = (ys[j2] - ys[j]) / (xs[j2] - xs[j])
            if ys[j] - slope * xs[j] > fmin - eps * abs(fmin):
                continue
        chosen.append(int(idx[j]))
    return chosen


def maximize_direct(f, lo, hi, budget, batched=True, eps=1e-4):
    """Dividing-rectangles maximisation of ``f`` over the box ``[lo, hi]``.

    Parameters
    ----------
    f : callable
        With ``batched=True`` maps an ``(m, d)`` array to ``m`` values,
        otherwise maps one vector to a float.
    budget : int
        Maximum number of evaluations (at least 1).

    Returns
    -------
    (x_best, f_best, n_evals)
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = len(lo)
    if budget < 1:
        raise ValueError("budget must be positive")
    width = hi - lo

    def evaluate(U):
        X = lo + U * width
        if batched:
            return -np.asarray(f(X), dtype=float).ravel()
        return -np.array([float(f(x)) for x in X])

    centers = [np.full(d, 0.5)]
    levels = [np.zeros(d, dtype=int)]
    vals = list(evaluate(centers[0][None, :]))
    n_evals = 1
    while n_evals < budget:
        lv = np.array(levels)
        sizes = 0.5 * np.sqrt(((3.0 ** -lv) ** 2).sum(1))
        values = np.nan_to_num(np.array(vals), nan=np.inf, posinf=1e300)
        chosen = _potentially_optimal(sizes, values, eps)
        plans = []
        new_pts = []
        for idx in chosen:
            lev = levels[idx]
            dims = np.flatnonzero(lev == lev.min())
            if n_evals + len(new_pts) + 2 * len(dims) > budget:
                break
            delta = 3.0 ** -(lev.min() + 1)
            start = len(new_pts)
            for i in dims:
                for sgn in (1.0, -1.0):
                    c = centers[idx].copy()
                    c[i] += sgn * delta
                    new_pts.append(c)
            plans.append((idx, dims, delta, start))
        if not plans:
            break
        new_vals = evaluate(np.array(new_pts))
        n_evals += len(new_pts)
        for idx, dims, delta, start in plans:
            block = new_vals[start:start + 2 * len(dims)].reshape(len(dims), 2)
            order = np.argsort(np.nan_to_num(block.min(1), nan=np.inf), kind="stable")
            lev = levels[idx].copy()
            for o in order:
                i = dims[o]
                lev[i] += 1
                for s, sgn in enumerate((1.0, -1.0)):
                    c = centers[idx].copy()
                    c[i] += sgn * delta
                    centers.append(c)
                    levels.append(lev.copy())
                    vals.append(block[o, s])
            levels[idx] = lev
    values = np.nan_to_num(np.array(vals), nan=np.inf)
    best = int(np.argmin(values))
    return lo + centers[best] * width, -float(vals[best]), n_evals


# ----------------------------------------------------------------------------
# evolutionary search


def mutate(domain, rows, rng):
    """Kind-aware mutation of encoded rows (returns new rows)."""
    rows = np.array(rows, dtype=float, ndmin=2)
    out = rows.copy()
    d = domain.d
    # geometric count on {0, 1, ...} (mean one) raised to at least one: mean about 1.5
    counts = np.clip(rng.geometric(0.5, size=len(rows)) - 1, 1, d)
    for r in range(len(rows)):
        coords = rng.choice(d, size=counts[r], replace=False)
        for i in coords:
            v = domain.variables[i]
            if v.kind == "euclidean":
                out[r, i] = np.clip(out[r, i] + 0.1 * rng.standard_normal(), 0.0, 1.0)
            elif v.kind == "integer":
                lo, hi = v.bounds
                step = int(rng.integers(1, 4)) * (1 if rng.uniform() < 0.5 else -1)
                cur = round(lo + out[r, i] * (hi - lo))
                out[r, i] = (min(max(cur + step, lo), hi) - lo) / (hi - lo)
            elif rng.uniform() < 0.5:
                if v.kind == "discrete":
                    out[r, i] = rng.integers(0, len(v.items))
                else:
                    enc = domain._numeric_items[i][1]
                    out[r, i] = enc[rng.integers(0, len(enc))]
    return out


def _feasible_mutants(domain, parents, rng, cap):
    """Mutate each parent, redrawing mutations that violate the constraint."""
    out = mutate(domain, parents, rng)
    bad = ~domain.feasible(out)
    tries = 0
    while np.any(bad):
        tries += 1
        if tries > cap:
            raise InfeasibleSampling("mutations keep violating the constraint")
        idx = np.flatnonzero(bad)
        out[idx] = mutate(domain, parents[idx], rng)
        bad[idx] = ~domain.feasible(out[idx])
    return out


def maximize_acq_ea(f, domain, config=None, rng=None, init_rows=None):
    """Evolutionary maximisation of a batched ``f`` over encoded rows of ``domain``.

    The initial pool holds ``config.n0`` random feasible rows (plus any
    ``init_rows``).  Each generation picks ``n_mut`` parents by a softmax over
    the pool values (temperature: the standard deviation of the best ``n0``
    pool values), mutates
    them, evaluates the mutants and merges them into the pool.

    Returns
    -------
    (best_row, best_value, n_evals)
    """
    config = config or EAConfig()
    rng = np.random.default_rng() if rng is None else rng
    pool = domain.sample_feasible(config.n0, rng)
    if init_rows is not None and len(init_rows):
        extra = np.array(init_rows, dtype=float, ndmin=2)
        extra = extra[domain.feasible(extra)]
        pool = np.vstack([pool, extra])
    vals = np.asarray(f(pool), dtype=float).ravel()
    n_evals = len(pool)
    cap = 100 * config.n_mut
    for _ in range(config.generations(domain.d)):
        finite = np.where(np.isfinite(vals), vals, -np.inf)
        ok = np.isfinite(finite)
        if not np.any(ok):
            probs = np.full(len(pool), 1.0 / len(pool))
        else:
            temp = config.temperature or float(np.std(np.sort(finite[ok])[-config.n0:]))
            if not temp > 0:
                probs = ok / ok.sum()
            else:
                z = (finite - finite[ok].max()) / temp
                probs = np.exp(z)
                probs /= probs.sum()
        parents = pool[rng.choice(len(pool), size=config.n_mut, p=probs)]
        kids = _feasible_mutants(domain, parents, rng, cap)
        kv = np.asarray(f(kids), dtype=float).ravel()
        n_evals += len(kids)
        pool = np.vstack([pool, kids])
        vals = np.concatenate([vals, kv])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    best = int(np.argmax(vals))
    return pool[best].copy(), float(vals[best]), n_evals


def uses_direct(domain):
    """DIRECT for unconstrained all-Euclidean domains up to 60 dimensions."""
    return domain.is_euclidean and not domain.has_constraint and domain.d <= DIRECT_MAX_DIM
