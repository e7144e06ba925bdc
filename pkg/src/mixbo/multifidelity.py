"""Two-step multi-fidelity query rule.

The point ``x_t`` maximises the acquisition on the target-fidelity slice of
a joint GP over (domain, fidelity).  The fidelity is then the cheapest
candidate whose posterior standard deviation at ``(z, x_t)`` exceeds an
information-gap and cost dependent threshold.

Joint model rows are laid out as ``[x columns, z columns]`` (encoded).
"""

import math

import numpy as np

from .acquisitions import addgpucb_next, maximize_acquisition
from .exceptions import EmptySet, GridMissingZhf, NotProductKernel, OutOfSpace


def information_gap_encoded(space, rows, gamma=1.0):
    """``(||z - z_hf|| / sqrt(p)) ** gamma`` on encoded (unit-normalised) fidelity rows."""
    rows = np.array(rows, dtype=float, ndmin=2)
    diff = rows - space.z_hf_encoded
    return (np.sqrt((diff ** 2).sum(1)) / math.sqrt(space.d)) ** gamma


def information_gap(space, z, gamma=1.0):
    """Information gap of fidelity point ``z``; zero at ``z_hf`` and at most one."""
    if not space.contains(z):
        raise OutOfSpace(f"fidelity {z} is not in the fidelity space")
    return float(information_gap_encoded(space, space.encode([z]), gamma)[0])


def slice_embedding(space):
    """Map encoded domain rows to joint rows at the target fidelity."""
    zhf = space.z_hf_encoded

    def embed(rows):
        rows = np.array(rows, dtype=float, ndmin=2)
        return np.hstack([rows, np.tile(zhf, (len(rows), 1))])

    return embed


def _contains_row(rows, row):
    return bool(np.any(np.all(np.isclose(rows, row, rtol=0, atol=1e-12), axis=1)))


def candidate_fidelities(gp, x_t, space, grid, gamma=1.0, gap=None):
    """Encoded fidelity rows eligible for querying at ``x_t``.

    Always contains ``z_hf`` (first row).  Any other grid row ``z`` is kept iff
    ``cost(z) < cost(z_hf)`` and
    ``tau(z, x_t) > sqrt(scale) * xi(z) * sqrt(cost(z) / cost(z_hf))``.
    ``gap`` optionally replaces the information gap (a callable on encoded rows).
    """
    grid = np.array(grid, dtype=float, ndmin=2)
    zhf = space.z_hf_encoded
    if not _contains_row(grid, zhf):
        raise GridMissingZhf("fidelity grid must contain z_hf")
    others = grid[~np.all(np.isclose(grid, zhf, rtol=0, atol=1e-12), axis=1)]
    if len(others) == 0:
        return zhf[None, :].copy()
    x_t = np.asarray(x_t, dtype=float).ravel()
    cost = space.cost_encoded(others)
    cost_hf = space.cost_encoded(zhf[None, :])[0]
    xi = information_gap_encoded(space, others, gamma) if gap is None else np.asarray(gap(others), dtype=float)
    rows = np.hstack([np.tile(x_t, (len(others), 1)), others])
    _, tau = gp.predict(rows)
    with np.errstate(invalid="ignore"):
        threshold = math.sqrt(gp.hp.scale) * xi * np.sqrt(cost / cost_hf)
    keep = (cost < cost_hf) & (tau > threshold)
    return np.vstack([zhf[None, :], others[keep]])


def select_fidelity(candidates, space, gamma=1.0):
    """Cheapest candidate; ties go to the larger information gap, then lexicographic order."""
    candidates = np.array(candidates, dtype=float, ndmin=2)
    if candidates.size == 0:
        raise EmptySet("no candidate fidelities")
    cost = space.cost_encoded(candidates)
    xi = information_gap_encoded(space, candidates, gamma)
    order = sorted(range(len(candidates)), key=lambda i: (cost[i], -xi[i], tuple(candidates[i])))
    return candidates[order[0]].copy()


def mf_point_and_fidelity(gp, domain, space, label, state, maximizer, rng, group_maximizer=None,
                          grid=None, gamma=1.0, variance_gp=None):
    """Choose ``(z_t, x_t)`` (encoded) for the multi-fidelity model ``gp``.

    ``maximizer(f) -> (row, value)`` optimises batched functions over encoded
    domain rows; ``group_maximizer`` is used for Add-GP-UCB.  ``variance_gp``
    (default ``gp``) supplies ``tau`` for the fidelity filter.
    """
    if not gp.spec.is_product:
        raise NotProductKernel("multi-fidelity selection needs a product kernel over fidelities")
    embed = slice_embedding(space)
    if label == "add_ucb" and gp.spec.additive:
        x_t = addgpucb_next(gp, state, group_maximizer, n_columns=domain.d, embed=embed)
    else:
        x_t, _ = maximize_acquisition(label, gp, state, maximizer, rng, embed=embed)
    grid = space.grid() if grid is None else grid
    cands = candidate_fidelities(variance_gp or gp, x_t, space, grid, gamma)
    return select_fidelity(cands, space, gamma), np.asarray(x_t, dtype=float)
