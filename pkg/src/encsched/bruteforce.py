"""Exhaustive policy enumeration, used as an independent optimality oracle.

Only cells that can actually be visited matter for a policy's cost, so the
enumeration ranges over all 0/1 assignments to the reachable
``(k, n, n_e)`` cells; unreachable cells are left at 0.
"""

from __future__ import annotations

import itertools

import numpy as np

from encsched.errors import ConfigError
from encsched.evaluation import evaluate_tables_exact
from encsched.linear_model import CovarianceLadder
from encsched.mdp_full_info import ProblemParams

MAX_DECISIONS = 20
CHUNK = 4096


def reachable_indices(N: int, start: int = 0):
    """Per time step ``k = 1..N``, the sorted ladder indices ``P_{k-1}`` can take."""
    out = [[start]]
    for _ in range(N - 1):
        out.append(sorted({0} | {i + 1 for i in out[-1]}))
    return out


def reachable_cells(N: int, start=(0, 0)):
    cells = []
    for k, (ns, nes) in enumerate(zip(reachable_indices(N, start[0]), reachable_indices(N, start[1])), start=1):
        cells.extend((k, n, ne) for n, ne in itertools.product(ns, nes))
    return cells


def policy_tables(bits, cells, N: int, depth: int) -> np.ndarray:
    """Expand rows of ``bits`` (one column per reachable cell) to full ``(B, N, D+1, D+1)`` tables."""
    bits = np.asarray(bits, dtype=np.int8)
    tables = np.zeros((bits.shape[0], N, depth + 1, depth + 1), dtype=np.int8)
    k, n, ne = (np.array(c) for c in zip(*cells))
    tables[:, k - 1, n, ne] = bits
    return tables


def brute_force_minimum(p: ProblemParams, ladder: CovarianceLadder, start=(0, 0)):
    """Minimum exact cost over every deterministic Markov policy.

    Returns:
        ``(best_cost, best_table, count)`` where ``count`` is the number of
        policies enumerated (``2 ** len(reachable_cells)``).
    """
    N = p.horizon
    cells = reachable_cells(N, start)
    if len(cells) > MAX_DECISIONS:
        raise ConfigError(f"{len(cells)} reachable decisions exceed the enumeration cap of {MAX_DECISIONS}")
    depth = max(ladder.depth, N + max(start))
    traces = ladder.extended(depth + 1).traces
    R = len(cells)
    total = 2**R
    shifts = np.arange(R - 1, -1, -1)
    best, best_bits = np.inf, None
    for lo in range(0, total, CHUNK):
        codes = np.arange(lo, min(total, lo + CHUNK))
        bits = (codes[:, None] >> shifts) & 1
        cost = evaluate_tables_exact(policy_tables(bits, cells, N, depth), p, traces, start)["cost"].sum(axis=1)
        i = int(np.argmin(cost))
        if cost[i] < best:
            best, best_bits = float(cost[i]), bits[i]
    return best, policy_tables(best_bits[None], cells, N, depth)[0], total
