"""Optimisation domains, fidelity spaces, point validation and initial designs.

Points are plain tuples of coordinate values (floats, ints or item labels) in
variable order.  Internally everything works on an *encoded* float array with
one column per variable:

* euclidean / integer: affinely mapped to ``[0, 1]``
* discrete: the item index
* discrete_numeric: the item value affinely mapped to ``[0, 1]``
"""

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ArityMismatch,
    InfeasibleSampling,
    InvalidBounds,
    MalformedConfig,
    OutOfSpace,
    UnknownKind,
    ZHfOutOfSpace,
)
from .expressions import Expression

KINDS = ("euclidean", "integer", "discrete", "discrete_numeric")
FIDELITY_KINDS = ("euclidean", "integer", "discrete_numeric")

# consecutive rejections allowed per requested point
REJECTION_CAP_FACTOR = 100


@dataclass(frozen=True)
class VariableSpec:
    """One scalar variable of a domain or fidelity space."""

    name: str
    kind: str
    bounds: tuple = None
    items: tuple = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.isidentifier():
            raise MalformedConfig(f"variable name {self.name!r} is not an identifier")
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown variable kind {self.kind!r} for {self.name!r}")
        if self.kind in ("euclidean", "integer"):
            if self.bounds is None or len(self.bounds) != 2:
                raise MalformedConfig(f"variable {self.name!r} needs bounds [lo, hi]")
            lo, hi = (float(b) for b in self.bounds)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise InvalidBounds(f"variable {self.name!r}: need lo < hi, got {self.bounds}")
            if self.kind == "integer":
                if lo != int(lo) or hi != int(hi):
                    raise InvalidBounds(f"integer variable {self.name!r} needs integral bounds")
                object.__setattr__(self, "bounds", (int(lo), int(hi)))
            else:
                object.__setattr__(self, "bounds", (lo, hi))
        else:
            if self.items is None or len(self.items) == 0:
                raise InvalidBounds(f"variable {self.name!r} needs a non-empty item list")
            items = tuple(self.items)
            if self.kind == "discrete_numeric":
                try:
                    items = tuple(float(v) for v in items)
                except (TypeError, ValueError):
                    raise MalformedConfig(f"discrete_numeric {self.name!r} needs numeric items") from None
            if len(set(items)) != len(items):
                raise InvalidBounds(f"variable {self.name!r} has duplicate items")
            object.__setattr__(self, "items", items)

    @property
    def is_continuous(self):
        """True for kinds embedded as reals in SE/Matern kernels."""
        return self.kind != "discrete"

    def contains(self, value):
        if self.kind == "euclidean":
            try:
                v = float(value)
            except (TypeError, ValueError):
                return False
            return self.bounds[0] <= v <= self.bounds[1]
        if self.kind == "integer":
            try:
                v = float(value)
            except (TypeError, ValueError):
                return False
            return v == int(v) and self.bounds[0] <= v <= self.bounds[1]
        if self.kind == "discrete_numeric":
            try:
                return float(value) in self.items
            except (TypeError, ValueError):
                return False
        return value in self.items

    def to_dict(self):
        out = {"name": self.name, "kind": self.kind}
        if self.kind in ("euclidean", "integer"):
            out["bounds"] = list(self.bounds)
        else:
            out["items"] = list(self.items)
        return out


class _VariableSet:
    """Shared encoding machinery for domains and fidelity spaces."""

    def __init__(self, variables):
        variables = tuple(variables)
        if not variables:
            raise MalformedConfig("at least one variable is required")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise MalformedConfig(f"duplicate variable names in {names}")
        self.variables = variables
        self._numeric_items = {}
        for i, v in enumerate(variables):
            if v.kind == "discrete_numeric":
                vals = np.asarray(v.items, dtype=float)
                lo, hi = vals.min(), vals.max()
                enc = (vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals)
                self._numeric_items[i] = (vals, enc)

    @property
    def d(self):
        return len(self.variables)

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    @property
    def kinds(self):
        return tuple(v.kind for v in self.variables)

    def columns_of_kind(self, *kinds):
        return tuple(i for i, v in enumerate(self.variables) if v.kind in kinds)

    def _check_arity(self, point):
        if len(point) != self.d:
            raise ArityMismatch(f"expected {self.d} coordinates, got {len(point)}")

    def encode(self, points):
        """Encode a sequence of points into an ``(n, d)`` float array."""
        points = list(points)
        out = np.empty((len(points), self.d))
        for r, p in enumerate(points):
            self._check_arity(p)
            for i, (v, val) in enumerate(zip(self.variables, p)):
                if v.kind in ("euclidean", "integer"):
                    lo, hi = v.bounds
                    out[r, i] = (float(val) - lo) / (hi - lo)
                elif v.kind == "discrete":
                    out[r, i] = v.items.index(val)
                else:
                    vals, enc = self._numeric_items[i]
                    out[r, i] = enc[int(np.argmin(np.abs(vals - float(val))))]
        return out

    def snap(self, rows):
        """Project encoded rows onto representable points (integer lattice, item sets)."""
        rows = np.array(rows, dtype=float, ndmin=2)
        for i, v in enumerate(self.variables):
            col = np.clip(rows[:, i], 0.0, 1.0) if v.kind != "discrete" else rows[:, i]
            if v.kind == "euclidean":
                rows[:, i] = col
            elif v.kind == "integer":
                lo, hi = v.bounds
                ints = np.clip(np.ceil(lo + col * (hi - lo) - 0.5), lo, hi)
                rows[:, i] = (ints - lo) / (hi - lo)
            elif v.kind == "discrete":
                rows[:, i] = np.clip(np.rint(col), 0, len(v.items) - 1)
            else:
                _, enc = self._numeric_items[i]
                rows[:, i] = enc[np.argmin(np.abs(col[:, None] - enc[None, :]), axis=1)]
        return rows

    def decode_columns(self, rows):
        """Decode encoded rows into a name -> array mapping (object arrays for labels)."""
        rows = np.array(rows, dtype=float, ndmin=2)
        cols = {}
        for i, v in enumerate(self.variables):
            col = rows[:, i]
            if v.kind == "euclidean":
                lo, hi = v.bounds
                cols[v.name] = np.clip(lo + np.clip(col, 0.0, 1.0) * (hi - lo), lo, hi)
            elif v.kind == "integer":
                lo, hi = v.bounds
                cols[v.name] = np.clip(np.ceil(lo + np.clip(col, 0, 1) * (hi - lo) - 0.5), lo, hi).astype(int)
            elif v.kind == "discrete":
                idx = np.clip(np.rint(col), 0, len(v.items) - 1).astype(int)
                cols[v.name] = np.asarray(v.items, dtype=object)[idx]
            else:
                vals, enc = self._numeric_items[i]
                cols[v.name] = vals[np.argmin(np.abs(col[:, None] - enc[None, :]), axis=1)]
        return cols

    def decode(self, rows):
        """Decode encoded rows into a list of point tuples."""
        cols = self.decode_columns(rows)
        n = len(next(iter(cols.values())))
        out = []
        for r in range(n):
            pt = []
            for v in self.variables:
                val = cols[v.name][r]
                if v.kind == "integer":
                    val = int(val)
                elif v.kind in ("euclidean", "discrete_numeric"):
                    val = float(val)
                pt.append(val)
            out.append(tuple(pt))
        return out

    def in_bounds(self, point):
        self._check_arity(point)
        return all(v.contains(x) for v, x in zip(self.variables, point))

    def sample_unconstrained(self, n, rng):
        """``n`` encoded rows drawn uniformly per coordinate (no constraint)."""
        out = np.empty((n, self.d))
        for i, v in enumerate(self.variables):
            if v.kind == "euclidean":
                out[:, i] = rng.uniform(0.0, 1.0, size=n)
            elif v.kind == "integer":
                lo, hi = v.bounds
                out[:, i] = (rng.integers(lo, hi + 1, size=n) - lo) / (hi - lo)
            elif v.kind == "discrete":
                out[:, i] = rng.integers(0, len(v.items), size=n)
            else:
                _, enc = self._numeric_items[i]
                out[:, i] = enc[rng.integers(0, len(enc), size=n)]
        return out


class Domain(_VariableSet):
    """An ordered list of variables plus an optional constraint.

    ``constraint`` may be an expression string over the variable names or a
    callable taking a point tuple and returning a bool.
    """

    def __init__(self, variables, constraint=None):
        super().__init__(variables)
        if isinstance(constraint, str):
            constraint = Expression(constraint, self.names)
        self.constraint = constraint

    def __repr__(self):
        return f"Domain({[v.to_dict() for v in self.variables]}, constraint={self.constraint!r})"

    def __eq__(self, other):
        return (
            isinstance(other, Domain)
            and self.variables == other.variables
            and self.constraint == other.constraint
        )

    __hash__ = None

    @property
    def is_euclidean(self):
        return all(k == "euclidean" for k in self.kinds)

    @property
    def has_constraint(self):
        return self.constraint is not None

    def feasible(self, rows):
        """Boolean mask of encoded rows that satisfy the constraint."""
        rows = np.array(rows, dtype=float, ndmin=2)
        if self.constraint is None:
            return np.ones(len(rows), dtype=bool)
        if isinstance(self.constraint, Expression):
            res = self.constraint(self.decode_columns(rows))
            return np.broadcast_to(np.asarray(res, dtype=bool), (len(rows),)).copy()
        return np.array([bool(self.constraint(p)) for p in self.decode(rows)], dtype=bool)

    def sample_feasible(self, n, rng):
        """``n`` encoded rows drawn uniformly with constraint rejection."""
        if self.constraint is None:
            return self.sample_unconstrained(n, rng)
        kept = []
        total = 0
        rejected = 0
        cap = REJECTION_CAP_FACTOR * max(n, 1)
        while total < n:
            batch = self.sample_unconstrained(max(n - total, 8), rng)
            for row, ok in zip(batch, self.feasible(batch)):
                if ok:
                    kept.append(row)
                    total += 1
                    rejected = 0
                    if total == n:
                        break
                else:
                    rejected += 1
                    if rejected > cap:
                        raise InfeasibleSampling(
                            f"constraint rejected {rejected} consecutive candidates"
                        )
        return np.array(kept).reshape(n, self.d)


class FidelitySpace(_VariableSet):
    """Fidelity variables, the target fidelity ``z_hf`` and a known cost function.

    ``cost`` is either an expression string over the fidelity variable names
    or a callable taking a fidelity tuple.
    """

    def __init__(self, variables, z_hf, cost):
        super().__init__(variables)
        for v in self.variables:
            if v.kind not in FIDELITY_KINDS:
                raise UnknownKind(f"fidelity variable {v.name!r} cannot be of kind {v.kind!r}")
        z_hf = tuple(z_hf)
        if len(z_hf) != self.d or not all(v.contains(x) for v, x in zip(self.variables, z_hf)):
            raise ZHfOutOfSpace(f"z_hf={z_hf} is not inside the fidelity space")
        self.z_hf = self.decode(self.encode([z_hf]))[0]
        if isinstance(cost, str):
            cost = Expression(cost, self.names)
        self.cost_fn = cost
        if float(self.cost(self.z_hf)) <= 0:
            raise MalformedConfig("cost(z_hf) must be positive")

    def __repr__(self):
        return f"FidelitySpace({[v.to_dict() for v in self.variables]}, z_hf={self.z_hf})"

    @property
    def z_hf_encoded(self):
        return self.encode([self.z_hf])[0]

    def contains(self, z):
        return len(z) == self.d and all(v.contains(x) for v, x in zip(self.variables, z))

    def cost(self, z):
        if not self.contains(z):
            raise OutOfSpace(f"fidelity {z} is not in the fidelity space")
        return float(self.cost_encoded(self.encode([z]))[0])

    def cost_encoded(self, rows):
        rows = np.array(rows, dtype=float, ndmin=2)
        if isinstance(self.cost_fn, Expression):
            val = np.asarray(self.cost_fn(self.decode_columns(rows)), dtype=float)
            out = np.broadcast_to(val, (len(rows),)).astype(float)
        else:
            out = np.array([float(self.cost_fn(z)) for z in self.decode(rows)])
        if np.any(out <= 0):
            raise MalformedConfig("cost must be positive over the fidelity space")
        return out

    def grid(self, points_per_dim=10):
        """Candidate fidelities: a per-dimension grid plus ``z_hf`` (encoded rows)."""
        axes = []
        for i, v in enumerate(self.variables):
            if v.kind == "euclidean":
                axes.append(np.linspace(0.0, 1.0, points_per_dim))
            elif v.kind == "integer":
                lo, hi = v.bounds
                ints = np.unique(np.rint(np.linspace(lo, hi, points_per_dim)))
                axes.append((ints - lo) / (hi - lo))
            else:
                _, enc = self._numeric_items[i]
                enc = np.sort(enc)
                if len(enc) > points_per_dim:
                    enc = enc[np.unique(np.rint(np.linspace(0, len(enc) - 1, points_per_dim)).astype(int))]
                axes.append(enc)
        rows = np.array(list(itertools.product(*axes)), dtype=float)
        zhf = self.z_hf_encoded
        if not np.any(np.all(np.isclose(rows, zhf), axis=1)):
            rows = np.vstack([rows, zhf])
        return rows


def validate_point(domain, point):
    """True iff ``point`` lies within every variable's range and satisfies the constraint."""
    domain._check_arity(point)
    if not domain.in_bounds(point):
        return False
    if domain.constraint is None:
        return True
    if isinstance(domain.constraint, Expression):
        env = {v.name: x for v, x in zip(domain.variables, point)}
        return bool(np.all(domain.constraint(env)))
    return bool(domain.constraint(tuple(point)))


def _lhs_unit(n, k, rng):
    """Latin hypercube on ``[0, 1)^k``: one sample per bin and dimension."""
    u = rng.uniform(size=(n, k))
    perms = np.argsort(rng.uniform(size=(k, n)), axis=1).T
    return (perms + u) / n


def _lhs_rows(domain, n, rng):
    rows = domain.sample_unconstrained(n, rng)
    cols = domain.columns_of_kind("euclidean", "integer")
    if cols:
        lhs = _lhs_unit(n, len(cols), rng)
        for j, i in enumerate(cols):
            v = domain.variables[i]
            if v.kind == "euclidean":
                rows[:, i] = lhs[:, j]
            else:
                lo, hi = v.bounds
                ints = np.clip(np.ceil(lo + lhs[:, j] * (hi - lo) - 0.5), lo, hi)
                rows[:, i] = (ints - lo) / (hi - lo)
    return rows


def sample_init_encoded(domain, n, rng):
    """Initial design as encoded rows (see :func:`sample_init`)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rows = _lhs_rows(domain, n, rng)
    if domain.constraint is None:
        return rows
    keep = list(rows[domain.feasible(rows)])
    rejected = n - len(keep)
    cap = REJECTION_CAP_FACTOR * n
    while len(keep) < n:
        batch = _lhs_rows(domain, n, rng)
        for row, ok in zip(batch, domain.feasible(batch)):
            if ok:
                keep.append(row)
                rejected = 0
                if len(keep) == n:
                    break
            else:
                rejected += 1
        if rejected > cap:
            raise InfeasibleSampling(f"could not find {n} feasible initial points")
    return np.array(keep[:n])


def sample_init(domain, n, rng):
    """Latin-hypercube initial design over ``domain`` with constraint rejection.

    Euclidean and integer coordinates jointly form a latin hypercube; discrete
    coordinates are uniform.  Returns ``n`` point tuples.
    """
    return domain.decode(sample_init_encoded(domain, n, rng))


def default_n_init(d, budget):
    """``min(5 d, floor(0.075 budget))`` with a floor of 2."""
    return max(2, min(5 * d, int(math.floor(0.075 * budget))))


_TOP_KEYS = {"variables", "constraint", "fidelity", "objective"}
_VAR_KEYS = {"name", "kind", "bounds", "items"}
_FID_KEYS = {"variables", "z_hf", "cost_expression"}


def _parse_variables(raw, where):
    if not isinstance(raw, list):
        raise MalformedConfig(f"{where}.variables must be a list")
    out = []
    for item in raw:
        if not isinstance(item, dict):
            raise MalformedConfig(f"{where}.variables entries must be objects")
        unknown = set(item) - _VAR_KEYS
        if unknown:
            raise MalformedConfig(f"unknown variable keys {sorted(unknown)}")
        if "name" not in item or "kind" not in item:
            raise MalformedConfig("each variable needs 'name' and 'kind'")
        out.append(VariableSpec(item["name"], item["kind"], item.get("bounds"), item.get("items")))
    return out


@dataclass
class DomainConfig:
    domain: Domain
    fidelity: FidelitySpace = None
    objective: str = None


def load_config(config_text):
    """Parse a JSON domain document into a :class:`DomainConfig`."""
    try:
        raw = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise MalformedConfig("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise MalformedConfig(f"unknown config keys {sorted(unknown)}")
    if "variables" not in raw:
        raise MalformedConfig("config needs 'variables'")
    constraint = raw.get("constraint")
    if constraint is not None and not isinstance(constraint, str):
        raise MalformedConfig("'constraint' must be an expression string")
    domain = Domain(_parse_variables(raw["variables"], "config"), constraint)
    fidelity = None
    if raw.get("fidelity") is not None:
        fraw = raw["fidelity"]
        if not isinstance(fraw, dict):
            raise MalformedConfig("'fidelity' must be an object")
        unknown = set(fraw) - _FID_KEYS
        if unknown:
            raise MalformedConfig(f"unknown fidelity keys {sorted(unknown)}")
        missing = _FID_KEYS - set(fraw)
        if missing:
            raise MalformedConfig(f"fidelity block missing {sorted(missing)}")
        fvars = _parse_variables(fraw["variables"], "fidelity")
        if not isinstance(fraw["cost_expression"], str):
            raise MalformedConfig("'cost_expression' must be a string")
        if not isinstance(fraw["z_hf"], list):
            raise MalformedConfig("'z_hf' must be a list")
        fidelity = FidelitySpace(fvars, fraw["z_hf"], fraw["cost_expression"])
        clash = set(fidelity.names) & set(domain.names)
        if clash:
            raise MalformedConfig(f"names used by both domain and fidelity: {sorted(clash)}")
    objective = raw.get("objective")
    if objective is not None:
        if not isinstance(objective, str):
            raise MalformedConfig("'objective' must be an expression string")
        names = domain.names + (fidelity.names if fidelity else ())
        Expression(objective, names)
    return DomainConfig(domain, fidelity, objective)


def parse_domain(config_text):
    """Parse a JSON domain document into ``(Domain, FidelitySpace or None)``."""
    cfg = load_config(config_text)
    return cfg.domain, cfg.fidelity


def serialize_domain(domain, fidelity=None, objective=None):
    """Inverse of :func:`load_config` for expression-based constraints and costs."""
    out = {"variables": [v.to_dict() for v in domain.variables]}
    if domain.constraint is not None:
        if not isinstance(domain.constraint, Expression):
            raise ValueError("callable constraints cannot be serialized")
        out["constraint"] = domain.constraint.text
    if fidelity is not None:
        if not isinstance(fidelity.cost_fn, Expression):
            raise ValueError("callable costs cannot be serialized")
        out["fidelity"] = {
            "variables": [v.to_dict() for v in fidelity.variables],
            "z_hf": list(fidelity.z_hf),
            "cost_expression": fidelity.cost_fn.text,
        }
    if objective is not None:
        out["objective"] = objective
    return json.dumps(out, indent=2)
