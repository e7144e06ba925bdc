"""Synthetic benchmarks, baseline optimisers and regret curves.

All benchmarks are posed as maximisation problems.  Names follow the
pattern ``<base>[x<k>][-constrained][-noisy][-mf]``:

* ``<base>`` is one of :data:`BASES`;
* ``x<k>`` stacks ``k`` copies of the base function on consecutive
  coordinate groups and sums them;
* ``-constrained`` adds the base's constraint (see :data:`CONSTRAINTS`);
* ``-noisy`` adds Gaussian noise with standard deviation equal to
  ``noise_fraction`` times the function's empirical range;
* ``-mf`` adds a fidelity variable ``z`` in ``[0, 1]`` with target 1 and cost
  ``z + 0.1``; at ``z < 1`` a smooth bias is subtracted.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .acq_opt import EAConfig, maximize_acq_ea
from .domain import Domain, FidelitySpace, VariableSpec
from .exceptions import UnknownBenchmark

NOISE_FRACTION = 0.05
MF_BIAS_FRACTION = 0.1
RANGE_SAMPLES = 100_000


# ----------------------------------------------------------------------------
# base functions on raw (unnormalised) coordinates, vectorised over rows

def _branin(X):
    # Branin-Hoo, negated so that the maximum is -0.397887
    x1, x2 = X[:, 0], X[:, 1]
    b = 5.1 / (4.0 * math.pi ** 2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return -((x2 - b * x1 ** 2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * np.cos(x1) + 10.0)


_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547],
                         [381, 5743, 8828]])
_H6_A = np.array([[10, 3, 17, 3.5, 1.7, 8], [0.05, 10, 17, 0.1, 8, 14],
                  [3, 3.5, 1.7, 10, 17, 8], [17, 8, 0.05, 10, 0.1, 14]])
_H6_P = 1e-4 * np.array([[1312, 1696, 5569, 124, 8283, 5886], [2329, 4135, 8307, 3736, 1004, 9991],
                         [2348, 1451, 3522, 2883, 3047, 6650], [4047, 8828, 8732, 5743, 1091, 381]])
_H_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])


def _hartmann(A, P):
    def f(X):
        diff = X[:, None, :] - P[None, :, :]
        return np.exp(-(A[None] * diff ** 2).sum(2)) @ _H_ALPHA
    return f


def _park1(X):
    x1, x2, x3, x4 = X.T
    # x1/2 (sqrt(1 + (x2 + x3^2) x4 / x1^2) - 1) rewritten to stay finite at x1 = 0
    c = (x2 + x3 ** 2) * x4
    return 0.5 * (np.sqrt(x1 ** 2 + c) - x1) + (x1 + 3.0 * x4) * np.exp(1.0 + np.sin(x3))


def _park2(X):
    x1, x2, x3, x4 = X.T
    return (2.0 / 3.0) * np.exp(x1 + x2) - x4 * np.sin(x3) + x3


def _borehole(X):
    rw, r, tu, hu, tl, hl, length, kw = X.T
    lg = np.log(r / rw)
    return 2.0 * math.pi * tu * (hu - hl) / (lg * (1.0 + 2.0 * length * tu / (lg * rw ** 2 * kw) + tu / tl))


_UNIT = (0.0, 1.0)

# name -> (function, variable names, bounds, optimum of the maximisation problem);
# optima were located by multistart local optimisation from the best of 2e5
# uniform samples and are checked again in the test suite
BASES = {
    "branin": (_branin, ("x1", "x2"), ((-5.0, 10.0), (0.0, 15.0)), -0.39788735772973816),
    "hartmann3": (_hartmann(_H3_A, _H3_P), ("x1", "x2", "x3"), (_UNIT,) * 3, 3.8627797873326624),
    "hartmann6": (_hartmann(_H6_A, _H6_P), tuple(f"x{i}" for i in range(1, 7)), (_UNIT,) * 6,
                  3.322368011415513),
    "park1": (_park1, ("x1", "x2", "x3", "x4"), (_UNIT,) * 4, 25.589254158606547),
    "park2": (_park2, ("x1", "x2", "x3", "x4"), (_UNIT,) * 4, 5.9260373992871),
    "borehole": (_borehole, ("rw", "r", "Tu", "Hu", "Tl", "Hl", "L", "Kw"),
                 ((0.05, 0.15), (100.0, 50000.0), (63070.0, 115600.0), (990.0, 1110.0),
                  (63.1, 116.0), (700.0, 820.0), (1120.0, 1680.0), (9855.0, 12045.0)),
                 309.5755876604079),
}

# base -> (constraint expression over the variable names, optimum under the constraint)
CONSTRAINTS = {
    "hartmann3": ("x1**2 + x2**2 <= 0.5", 3.8627797873326624),
    "park1": ("x1**2 + x2**2 <= 0.5", 23.637518253085783),
    "borehole": ("Hu - Hl <= 300", 226.51872267834725),
}


@dataclass
class Benchmark:
    """A maximisation problem with a known optimum.

    ``f`` is the noise-free objective on point tuples and ``f_rows`` its
    vectorised form on raw coordinate rows.  Multi-fidelity benchmarks also
    provide ``g(z, x)`` with ``g(z_hf, x) == f(x)``.
    """

    name: str
    domain: Domain
    f_rows: object = field(repr=False)
    optimum: float
    noise_sd: float = 0.0
    fidelity: FidelitySpace = None
    g_rows: object = field(default=None, repr=False)

    def f(self, x):
        return float(self.f_rows(np.asarray(x, dtype=float)[None, :])[0])

    def g(self, z, x):
        if self.g_rows is None:
            raise ValueError(f"{self.name} has no fidelity variable")
        return float(self.g_rows(np.asarray(z, dtype=float)[None, :], np.asarray(x, dtype=float)[None, :])[0])

    @property
    def multi_fidelity(self):
        return self.fidelity is not None

    def objective(self, seed=None):
        """Callable used by the optimisers: ``f(x)`` (or ``g(z, x)``) plus noise."""
        rng = np.random.default_rng(seed)
        sd = self.noise_sd

        def noisy(value):
            return value + sd * rng.standard_normal() if sd > 0 else value

        if self.multi_fidelity:
            return lambda z, x: noisy(self.g(z, x))
        return lambda x: noisy(self.f(x))


def _stack(fn, names, bounds, k):
    m = len(names)

    def f(X):
        return sum(fn(X[:, g * m:(g + 1) * m]) for g in range(k))

    return f, tuple(f"{n}_{g + 1}" for g in range(k) for n in names), tuple(bounds) * k


def _empirical_range(f_rows, bounds, n=RANGE_SAMPLES, seed=0):
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    vals = f_rows(lo + rng.uniform(size=(n, len(bounds))) * (hi - lo))
    return float(vals.max() - vals.min())


_NAME = re.compile(r"^(?P<base>[a-z0-9]+?)(?:x(?P<k>\d+))?(?P<flags>(?:-(?:constrained|noisy|mf))*)$")


def benchmark_names():
    """The catalogue of named benchmarks (other stacks ``<base>x<k>`` are accepted too)."""
    names = list(BASES) + ["hartmann3x6", "hartmann6x3"]
    names += [f"{b}-constrained" for b in CONSTRAINTS]
    names += [f"{b}-noisy" for b in BASES]
    names += [f"{b}-mf" for b in BASES]
    return names


def benchmark(name, noise_fraction=NOISE_FRACTION):
    """Build the benchmark called ``name`` (see the module docstring)."""
    m = _NAME.match(name)
    if not m or m.group("base") not in BASES:
        raise UnknownBenchmark(f"unknown benchmark {name!r}")
    base = m.group("base")
    flags = [f for f in m.group("flags").split("-") if f]
    if len(set(flags)) != len(flags):
        raise UnknownBenchmark(f"repeated modifier in {name!r}")
    fn, names, bounds, optimum = BASES[base]
    k = int(m.group("k")) if m.group("k") else 1
    if m.group("k") and k < 1:
        raise UnknownBenchmark(f"stack size must be positive in {name!r}")
    f_rows = fn
    if k > 1:
        f_rows, names, bounds = _stack(fn, names, bounds, k)
        optimum = k * optimum
    constraint = None
    if "constrained" in flags:
        if base not in CONSTRAINTS or k > 1:
            raise UnknownBenchmark(f"no constrained variant for {name!r}")
        constraint, optimum = CONSTRAINTS[base]
    domain = Domain([VariableSpec(n, "euclidean", b) for n, b in zip(names, bounds)], constraint)
    needs_range = "noisy" in flags or "mf" in flags
    span = _empirical_range(f_rows, bounds) if needs_range else None
    noise_sd = noise_fraction * span if "noisy" in flags else 0.0
    fidelity = g_rows = None
    if "mf" in flags:
        fidelity = FidelitySpace([VariableSpec("z", "euclidean", (0.0, 1.0))], (1.0,), "z + 0.1")
        g_rows = _mf_variant(f_rows, bounds, MF_BIAS_FRACTION * span)
    return Benchmark(name, domain, f_rows, optimum, noise_sd, fidelity, g_rows)


def _mf_variant(f_rows, bounds, amplitude):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def g(Z, X):
        Z = np.asarray(Z, dtype=float).reshape(len(X), -1)
        u = (X - lo) / (hi - lo)
        bias = 0.5 * (1.0 + np.sin(2.0 * math.pi * u.mean(1)))
        return f_rows(X) - amplitude * (1.0 - Z[:, 0]) * bias

    return g


# ----------------------------------------------------------------------------
# regret and baselines


def simple_regret(trace, f_opt, true_f=None, z_hf=None):
    """Simple-regret curve ``f_opt - max_{t <= n} f(x_t)`` over a trace.

    ``true_f`` (noise-free objective on point tuples) replaces the recorded
    ``y`` values when given.  With ``z_hf`` only records at that fidelity
    count; before the first one the regret is infinite.  Values are clipped
    at zero.
    """
    best = -math.inf
    out = []
    for rec in trace:
        y = rec.get("y")
        ok = y is not None
        if ok and z_hf is not None:
            ok = rec.get("z") is not None and tuple(rec["z"]) == tuple(z_hf)
        if ok:
            val = true_f(tuple(rec["x"])) if true_f is not None else float(y)
            best = max(best, val)
        out.append(max(f_opt - best, 0.0) if best > -math.inf else math.inf)
    return out


def _baseline_record(step, x, y, best, label):
    return {
        "step": step,
        "wall_time_s": float(step),
        "z": None,
        "x": list(x),
        "y": float(y),
        "acq_label": label,
        "hp_label": label,
        "incumbent": float(best),
        "capital_spent": float(step),
    }


def random_search(domain, budget, rng, objective=None):
    """Uniform random search with constraint rejection.

    Returns a trace in the optimiser's format (``y`` is None without an objective).
    """
    rows = domain.sample_feasible(int(budget), rng)
    points = domain.decode(rows)
    trace = []
    best = -math.inf
    for i, x in enumerate(points, start=1):
        if objective is None:
            trace.append({**_baseline_record(i, x, 0.0, 0.0, "random"), "y": None, "incumbent": None})
            continue
        y = float(objective(x))
        best = max(best, y)
        trace.append(_baseline_record(i, x, y, best, "random"))
    return trace


def ea_search(objective, domain, budget, rng, config=None):
    """The evolutionary optimiser applied directly to the objective; returns a trace."""
    config = config or EAConfig()
    budget = int(budget)
    n0 = min(config.n0, budget)
    gens = math.ceil(max(budget - n0, 0) / config.n_mut)
    cfg = EAConfig(n0=n0, n_mut=config.n_mut, budget=n0 + gens * config.n_mut,
                   temperature=config.temperature)
    trace = []
    best = [-math.inf]

    def f(rows):
        out = np.full(len(rows), -np.inf)
        for i, x in enumerate(domain.decode(rows)):
            if len(trace) >= budget:
                break
            y = float(objective(x))
            out[i] = y
            best[0] = max(best[0], y)
            trace.append(_baseline_record(len(trace) + 1, x, y, best[0], "ea"))
        return out

    maximize_acq_ea(f, domain, cfg, rng)
    return trace
