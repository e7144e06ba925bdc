"""Asynchronous Bayesian optimisation loop.

One :class:`RunState` owns the history, the in-flight queries, the
acquisition and hyperparameter weights and the capital ledger.  A worker
harness evaluates :class:`Query` messages and hands back
:class:`EvalResult` messages in completion order; :func:`run` alternates
between the two until the budget is exhausted.
"""

import heapq
import json
import math
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace

import numpy as np

from .acq_opt import EAConfig, default_budget, maximize_acq_ea, maximize_direct, uses_direct
from .acquisitions import (
    AcqState,
    addgpucb_next,
    choose_acquisition,
    default_acquisitions,
    maximize_acquisition,
    update_weights,
)
from .domain import default_n_init, sample_init_encoded
from .exceptions import ConfigError, UnknownQuery, WorkerFailure
from .gp import fit, hallucinate
from .hyper import MML_FALLBACK, HyperOptions, HyperState, choose_hp, refresh
from .kernels import KernelSpec
from .multifidelity import mf_point_and_fidelity

INIT_LABEL = "init"
TRACE_FIELDS = ("step", "wall_time_s", "z", "x", "y", "acq_label", "hp_label", "incumbent",
                "capital_spent")


@dataclass(frozen=True)
class Query:
    """One dispatched evaluation request."""

    qid: int
    x: tuple
    z: tuple = None
    acq_label: str = INIT_LABEL
    hp_label: str = INIT_LABEL
    step: int = 0
    row: tuple = field(default=(), repr=False, compare=False)


@dataclass(frozen=True)
class EvalResult:
    query: Query
    y: float = None
    wall_time: float = 0.0
    error: str = None

    @property
    def failed(self):
        return self.error is not None


def _in_loop_hyper_options():
    return HyperOptions(burn_in=5, thin=1, n_decompositions=25, n_starts=1, screen_maxiter=5)


@dataclass
class RunOptions:
    """Settings of one optimisation run.

    ``budget`` counts evaluations for single-fidelity runs and cost units for
    multi-fidelity runs.  ``additive="auto"`` uses an additive kernel on
    all-Euclidean domains with at least ``additive_min_dim`` variables.
    """

    budget: float = 100
    workers: int = 1
    acquisitions: tuple = None
    base_kernel: str = "matern25"
    fidelity_kernel: str = "se"
    additive: object = "auto"
    additive_min_dim: int = 10
    n_init: int = None
    hyper: HyperOptions = field(default_factory=_in_loop_hyper_options)
    acq_budget: int = None
    ea: EAConfig = field(default_factory=EAConfig)
    fidelity_grid_points: int = 10
    gamma: float = 1.0
    hallucinate: bool = True
    max_wall_time_s: float = None
    init_weight: float = 1.0

    def __post_init__(self):
        if not self.budget > 0:
            raise ConfigError("budget must be positive")
        if int(self.workers) < 1:
            raise ConfigError("need at least one worker")


@dataclass
class Record:
    query: Query
    y: float
    wall_time: float
    error: str = None


class RunState:
    """Everything the optimisation loop knows; owned by a single caller."""

    def __init__(self, domain, fidelity, options, seed):
        self.domain = domain
        self.fidelity = fidelity
        self.options = options
        self.rng = np.random.default_rng(seed)
        self.spec = build_kernel_spec(domain, fidelity, options)
        labels = options.acquisitions or default_acquisitions(domain)
        self.acq = AcqState(labels=labels, d=domain.d, init_weight=options.init_weight)
        hopts = replace(options.hyper, init_weight=options.init_weight)
        self.hyper = HyperState(self.spec, hopts)
        self.history = []
        self.pending = {}
        self.trace = []
        self.incumbent = -math.inf
        self.best_x = None
        self.capital_spent = 0.0
        self.n_improvements = 0
        self.max_pending = 0
        self._X = []
        self._y = []
        self._init = []
        self._next_qid = 0

    @property
    def multi_fidelity(self):
        return self.fidelity is not None

    @property
    def n_observations(self):
        return len(self._y)

    @property
    def n_completed(self):
        return len(self.history)

    @property
    def X(self):
        return np.array(self._X).reshape(len(self._X), self.spec.n_columns)

    @property
    def y(self):
        return np.array(self._y, dtype=float)

    def query_cost(self, query):
        if not self.multi_fidelity:
            return 1.0
        return float(self.fidelity.cost_encoded(np.asarray(query.row)[None, self.domain.d:])[0])

    def pending_cost(self):
        return sum(self.query_cost(q) for q in self.pending.values())

    def can_dispatch(self):
        if self.multi_fidelity:
            return self.capital_spent + self.pending_cost() < self.options.budget
        return self.n_completed + len(self.pending) < self.options.budget


def build_kernel_spec(domain, fidelity, options):
    continuous = domain.columns_of_kind("euclidean", "integer", "discrete_numeric")
    discrete = domain.columns_of_kind("discrete")
    additive = options.additive
    if additive == "auto":
        additive = domain.is_euclidean and domain.d >= options.additive_min_dim
    fid = ()
    anchor = ()
    if fidelity is not None:
        fid = tuple(range(domain.d, domain.d + fidelity.d))
        anchor = tuple(fidelity.z_hf_encoded)
    return KernelSpec(
        continuous=continuous,
        discrete=discrete,
        fidelity=fid,
        base=options.base_kernel,
        fidelity_kind=options.fidelity_kernel,
        additive=bool(additive),
        fidelity_anchor=anchor if options.fidelity_kernel == "expdecay" else (),
    )


def _fidelity_ladder(space, points_per_dim):
    """Cheapest grid fidelity, a midpoint towards ``z_hf``, and ``z_hf``."""
    grid = space.grid(points_per_dim)
    cheapest = grid[int(np.argmin(space.cost_encoded(grid)))]
    zhf = space.z_hf_encoded
    middle = space.snap(0.5 * (cheapest + zhf))[0]
    return [zhf, cheapest, middle]


def init_run(domain, fidelity=None, options=None, seed=None, **kwargs):
    """Prepare a run: kernel structure, weights and the initial design.

    ``kwargs`` override fields of :class:`RunOptions`.
    """
    options = replace(options or RunOptions(), **kwargs) if kwargs else (options or RunOptions())
    state = RunState(domain, fidelity, options, seed)
    evals = options.budget
    if fidelity is not None:
        evals = options.budget / fidelity.cost_encoded(fidelity.z_hf_encoded[None, :])[0]
    n_init = options.n_init or default_n_init(domain.d, int(evals))
    rows = sample_init_encoded(domain, n_init, state.rng)
    if fidelity is not None:
        ladder = _fidelity_ladder(fidelity, options.fidelity_grid_points)
        rows = [np.concatenate([r, ladder[i % len(ladder)]]) for i, r in enumerate(rows)]
    state._init = [np.asarray(r, dtype=float) for r in rows]
    return state


def _decode_row(state, row):
    row = np.asarray(row, dtype=float)
    x = state.domain.decode(row[None, :state.domain.d])[0]
    z = state.fidelity.decode(row[None, state.domain.d:])[0] if state.multi_fidelity else None
    return x, z


def _make_query(state, row, acq_label, hp_label):
    row = np.asarray(row, dtype=float)
    x, z = _decode_row(state, row)
    # store the row of the decoded point so the model sees exactly what is evaluated
    enc = state.domain.encode([x])[0]
    if state.multi_fidelity:
        enc = np.concatenate([enc, state.fidelity.encode([z])[0]])
    q = Query(qid=state._next_qid, x=x, z=z, acq_label=acq_label, hp_label=hp_label,
              step=state.n_completed + len(state.pending), row=tuple(float(v) for v in enc))
    state._next_qid += 1
    return q


def _random_row(state):
    row = state.domain.sample_feasible(1, state.rng)[0]
    if state.multi_fidelity:
        row = np.concatenate([row, state.fidelity.z_hf_encoded])
    return row


def _refresh(state):
    state.hyper = refresh(state.hyper, state.X, state.y, state.rng)


def _maximizer(state):
    domain = state.domain
    opts = state.options
    budget = opts.acq_budget or default_budget(domain.d)
    if uses_direct(domain):
        lo, hi = np.zeros(domain.d), np.ones(domain.d)

        def maximize(f):
            x, v, _ = maximize_direct(f, lo, hi, budget)
            return x, v
    else:
        ea = replace(opts.ea, budget=max(budget, opts.ea.n0)) if opts.ea.budget is None else opts.ea
        seeds = _top_rows(state, 5)

        def maximize(f):
            x, v, _ = maximize_acq_ea(f, domain, ea, state.rng, init_rows=seeds)
            return x, v
    return maximize


def _group_maximizer(state):
    opts = state.options

    def maximize(f, cols):
        k = len(cols)
        x, _, _ = maximize_direct(f, np.zeros(k), np.ones(k), opts.acq_budget or default_budget(k))
        return x

    return maximize


def _top_rows(state, k):
    """Domain parts of the best observed rows (target fidelity only in MF runs)."""
    if not state._y:
        return None
    X, y = state.X, state.y
    if state.multi_fidelity:
        mask = np.all(np.isclose(X[:, state.domain.d:], state.fidelity.z_hf_encoded), axis=1)
        X, y = X[mask], y[mask]
    if len(y) == 0:
        return None
    return X[np.argsort(-y)[:k], :state.domain.d]


def next_query(state):
    """Decide the next query (initial design first, then model-based) and mark it pending."""
    if state._init:
        q = _make_query(state, state._init.pop(0), INIT_LABEL, INIT_LABEL)
    elif state.n_observations < 2:
        q = _make_query(state, _random_row(state), INIT_LABEL, INIT_LABEL)
    else:
        q = _model_query(state)
    state.pending[q.qid] = q
    state.max_pending = max(state.max_pending, len(state.pending))
    return q


def _model_query(state):
    if state.hyper.theta_mml is None:
        _refresh(state)
    hp_label, hp = choose_hp(state.hyper, state.rng)
    label = choose_acquisition(state.acq, state.rng)
    state.acq.t = state.n_completed + len(state.pending) + 1
    state.acq.incumbent = state.incumbent
    gp = fit(state.spec, hp, state.X, state.y, mean="empirical")
    model = gp
    if label != "ts" and state.options.hallucinate and state.pending:
        model = hallucinate(gp, np.array([q.row for q in state.pending.values()]))
    maximize = _maximizer(state)
    if state.multi_fidelity:
        z, x = mf_point_and_fidelity(
            model, state.domain, state.fidelity, label, state.acq, maximize, state.rng,
            group_maximizer=_group_maximizer(state),
            grid=state.fidelity.grid(state.options.fidelity_grid_points), gamma=state.options.gamma,
        )
        row = np.concatenate([state.domain.snap(x)[0], z])
    else:
        if label == "add_ucb" and state.spec.additive:
            x = addgpucb_next(model, state.acq, _group_maximizer(state), n_columns=state.domain.d)
        else:
            x, _ = maximize_acquisition(label, model, state.acq, maximize, state.rng)
        row = state.domain.snap(x)[0]
    if not state.domain.feasible(row[None, :state.domain.d])[0]:
        row = _random_row(state)
    return _make_query(state, row, label, hp_label)


def _at_target(state, query):
    if not state.multi_fidelity:
        return True
    return tuple(query.z) == tuple(state.fidelity.z_hf)


def receive_result(state, result):
    """Book a finished evaluation: history, capital, incumbent, weights, refresh."""
    q = result.query
    if q.qid not in state.pending:
        raise UnknownQuery(q.qid)
    del state.pending[q.qid]
    state.capital_spent += state.query_cost(q)
    state.history.append(Record(q, result.y, result.wall_time, result.error))
    if not result.failed:
        y = float(result.y)
        state._X.append(np.asarray(q.row, dtype=float))
        state._y.append(y)
        if _at_target(state, q) and y > state.incumbent:
            state.incumbent = y
            state.best_x = q.x
            if q.acq_label != INIT_LABEL:
                state.n_improvements += 1
                state.acq = update_weights(state.acq, q.acq_label, True)
                hp = "mml" if q.hp_label == MML_FALLBACK else q.hp_label
                if hp in state.hyper.weights:
                    state.hyper.weights[hp] += 1.0
        if state.n_observations >= 2 and state.n_observations % state.hyper.options.n_cyc == 0:
            _refresh(state)
    state.trace.append(_trace_record(state, result))
    return state


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, (tuple, list)):
        return [_jsonable(u) for u in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _trace_record(state, result):
    q = result.query
    rec = {
        "step": len(state.history),
        "wall_time_s": float(result.wall_time),
        "z": _jsonable(q.z),
        "x": _jsonable(q.x),
        "y": None if result.failed else float(result.y),
        "acq_label": q.acq_label,
        "hp_label": q.hp_label,
        "incumbent": _jsonable(state.incumbent),
        "capital_spent": float(state.capital_spent),
    }
    return rec


def dump_trace(records, path_or_file):
    """Write trace records as JSON lines with the documented field order."""
    lines = "".join(json.dumps({k: r.get(k) for k in TRACE_FIELDS}) + "\n" for r in records)
    if hasattr(path_or_file, "write"):
        path_or_file.write(lines)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(lines)


def load_trace(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ----------------------------------------------------------------------------
# worker harnesses


def _call_objective(objective, query):
    if query.z is None:
        return float(objective(query.x))
    return float(objective(query.z, query.x))


class SimulatedWorkers:
    """Deterministic asynchronous workers on a simulated clock.

    ``objective`` is called at dispatch time; the result becomes visible
    after ``delay(query)`` simulated seconds (default 1).  Completion ties
    are broken by dispatch order.
    """

    def __init__(self, objective, workers=1, delay=None):
        self.objective = objective
        self.workers = int(workers)
        self.delay = delay or (lambda q: 1.0)
        self.now = 0.0
        self._heap = []
        self._seq = 0

    def clock(self):
        return self.now

    def submit(self, query):
        if len(self._heap) >= self.workers:
            raise WorkerFailure("all workers are busy")
        try:
            y, err = _call_objective(self.objective, query), None
        except Exception as exc:  # a failing evaluation is recorded, not retried
            y, err = None, f"{type(exc).__name__}: {exc}"
        heapq.heappush(self._heap, (self.now + float(self.delay(query)), self._seq, query, y, err))
        self._seq += 1

    def next_result(self):
        t, _, query, y, err = heapq.heappop(self._heap)
        self.now = t
        return EvalResult(query, y, t, err)

    def close(self):
        pass


class ThreadWorkers:
    """Real concurrent workers backed by a thread pool."""

    def __init__(self, objective, workers=1):
        self.objective = objective
        self.workers = int(workers)
        self._pool = ThreadPoolExecutor(max_workers=self.workers)
        self._futures = {}
        self._t0 = time.perf_counter()

    def clock(self):
        return time.perf_counter() - self._t0

    def submit(self, query):
        self._futures[self._pool.submit(_call_objective, self.objective, query)] = query

    def next_result(self):
        done, _ = wait(list(self._futures), return_when=FIRST_COMPLETED)
        fut = min(done, key=lambda f: self._futures[f].qid)
        query = self._futures.pop(fut)
        exc = fut.exception()
        if exc is not None:
            return EvalResult(query, None, self.clock(), f"{type(exc).__name__}: {exc}")
        return EvalResult(query, fut.result(), self.clock())

    def close(self):
        self._pool.shutdown(wait=True)


@dataclass
class Report:
    trace: list
    best_x: tuple
    best_y: float
    n_evaluations: int
    capital_spent: float
    max_pending: int
    state: object = field(repr=False, default=None)

    @property
    def incumbents(self):
        return [r["incumbent"] for r in self.trace]


def run(state, harness, max_wall_time_s=None):
    """Drive the asynchronous loop until the budget (or wall-clock limit) is used up."""
    limit = max_wall_time_s if max_wall_time_s is not None else state.options.max_wall_time_s
    workers = min(state.options.workers, getattr(harness, "workers", state.options.workers))
    try:
        while True:
            while (len(state.pending) < workers and state.can_dispatch()
                   and (limit is None or harness.clock() < limit)):
                harness.submit(next_query(state))
            if not state.pending:
                break
            receive_result(state, harness.next_result())
    finally:
        harness.close()
    best = state.incumbent if math.isfinite(state.incumbent) else None
    return Report(state.trace, state.best_x, best, state.n_completed, state.capital_spent,
                  state.max_pending, state)


def optimize(objective, domain, budget, fidelity=None, workers=1, seed=None, harness=None, **kwargs):
    """Convenience wrapper: maximise ``objective`` over ``domain`` and return a :class:`Report`."""
    state = init_run(domain, fidelity, RunOptions(budget=budget, workers=workers, **kwargs), seed)
    harness = harness or SimulatedWorkers(objective, workers)
    return run(state, harness)
