"""Scheduling when the eavesdropper's covariance is hidden from the scheduler.

The scheduler tracks a belief over the eavesdropper's ladder index.  The
belief is a deterministic function of the action history, so every belief
reachable within the horizon sits on a complete binary tree keyed by that
history.  Nodes use heap numbering: the root is node 0 and the child of
node ``i`` under action ``a`` is ``2*i + 1 + a``.  A node at depth ``d``
therefore has local index ``i - (2**d - 1)`` among its depth, and the bits
of that local index spell the action path (first action most significant).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from encsched.channel import ChannelParams, arrival_prob, eavesdrop_prob
from encsched.errors import ConfigError
from encsched.linear_model import CovarianceLadder
from encsched.mdp_full_info import ProblemParams, choose, prefix_threshold

MAX_TREE_HORIZON = 20
BELIEF_NEG_TOL = 1e-12
BELIEF_SUM_TOL = 1e-9


def validate_belief(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size == 0:
        raise ConfigError(f"belief must be a non-empty vector, got shape {pi.shape}")
    if np.any(pi < -BELIEF_NEG_TOL) or not np.all(np.isfinite(pi)):
        raise ConfigError("belief has negative or non-finite entries")
    if abs(pi.sum() - 1.0) > BELIEF_SUM_TOL:
        raise ConfigError(f"belief mass {pi.sum()!r} is not 1")
    return np.clip(pi, 0.0, None)


def _shift(beliefs, r):
    """Belief recursion applied row-wise with reset probability ``r``."""
    out = np.empty_like(beliefs)
    out[..., 0] = r
    out[..., 1:] = (1.0 - r) * beliefs[..., :-1]
    # overflow past the deepest rung is kept there
    out[..., -1] += (1.0 - r) * beliefs[..., -1]
    return out


def belief_update(pi, a: int, ch: ChannelParams) -> np.ndarray:
    """One step of the belief recursion under action ``a``."""
    pi = validate_belief(pi)
    out = _shift(pi, eavesdrop_prob(a, ch))
    total = out.sum()
    if abs(total - 1.0) > 1e-12:
        out /= total
    return out


def expected_eve_trace(pi, ladder: CovarianceLadder) -> float:
    pi = np.asarray(pi, dtype=float)
    if pi.size != ladder.depth + 1:
        raise ValueError(f"belief length {pi.size} does not match ladder depth {ladder.depth}")
    return float(pi @ ladder.traces)


@dataclass(frozen=True)
class BeliefTree:
    """All beliefs reachable by action sequences shorter than the horizon.

    Attributes:
        beliefs: ``(2**N - 1, D + 1)`` array, row ``i`` is the belief at node ``i``.
        depths: depth of each node (= number of actions taken).
        children: ``(2**N - 1, 2)`` child node ids, -1 at the last level.
    """

    beliefs: np.ndarray
    depths: np.ndarray
    children: np.ndarray
    ch: ChannelParams = field(repr=False)

    @property
    def horizon(self) -> int:
        return int(self.depths[-1]) + 1

    @property
    def size(self) -> int:
        return len(self.depths)

    @property
    def belief_length(self) -> int:
        return self.beliefs.shape[1]

    def nodes_at(self, depth: int) -> range:
        return range(2**depth - 1, 2 ** (depth + 1) - 1)

    def level(self, depth: int) -> np.ndarray:
        return self.beliefs[2**depth - 1 : 2 ** (depth + 1) - 1]

    def path(self, node: int) -> tuple:
        d = int(self.depths[node])
        local = node - (2**d - 1)
        return tuple((local >> (d - 1 - j)) & 1 for j in range(d))

    def child_beliefs(self, depth: int, a: int) -> np.ndarray:
        """Beliefs one step below ``depth`` under action ``a`` (also past the last stored level)."""
        return _shift(self.level(depth), eavesdrop_prob(a, self.ch))


def enumerate_belief_tree(ch: ChannelParams, N: int, D: int, root=None) -> BeliefTree:
    """Build the reachable-belief tree for horizon ``N`` over ladder indices ``0..D``.

    The root defaults to the point mass on ``P*``.
    """
    if N < 1:
        raise ConfigError("horizon must be >= 1")
    if N > MAX_TREE_HORIZON:
        raise ConfigError(f"horizon {N} exceeds the belief-tree cap of {MAX_TREE_HORIZON} (2**N nodes)")
    if D < 0:
        raise ConfigError("ladder depth must be >= 0")
    if root is None:
        root = np.zeros(D + 1)
        root[0] = 1.0
    root = validate_belief(root)
    if root.size != D + 1:
        raise ConfigError(f"root belief must have length {D + 1}")
    total = 2**N - 1
    beliefs = np.empty((total, D + 1))
    depths = np.empty(total, dtype=np.int64)
    children = np.full((total, 2), -1, dtype=np.int64)
    beliefs[0] = root
    depths[0] = 0
    for d in range(N - 1):
        lo, hi = 2**d - 1, 2 ** (d + 1) - 1
        parents = np.arange(lo, hi)
        for a in (0, 1):
            kids = 2 * parents + 1 + a
            beliefs[kids] = _shift(beliefs[lo:hi], eavesdrop_prob(a, ch))
            depths[kids] = d + 1
            children[parents, a] = kids
    for arr in (beliefs, depths, children):
        arr.setflags(write=False)
    return BeliefTree(beliefs=beliefs, depths=depths, children=children, ch=ch)


@dataclass(frozen=True)
class BeliefPolicy:
    """``actions[k-1][i, n]``: action at time ``k`` for the ``i``-th node of depth ``k-1``."""

    actions: tuple
    tree: BeliefTree = field(repr=False)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def depth(self) -> int:
        return self.actions[0].shape[1] - 1

    def at(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.horizon:
            raise IndexError(f"time step {k} outside 1..{self.horizon}")
        return self.actions[k - 1]

    def action(self, k: int, node: int, n: int) -> int:
        return int(self.at(k)[node - (2 ** (k - 1) - 1), n])


def _eve_terms(tree, depth, a, traces):
    return tree.child_beliefs(depth, a) @ traces


def pomdp_backward_induction(p: ProblemParams, ladder: CovarianceLadder, tree: BeliefTree):
    """Backward induction over (remote index, belief node).

    Returns:
        ``(values, policy)``; ``values[k-1]`` has shape ``(2**(k-1), D+1)``
        (row = node of depth ``k-1`` in heap order), plus a trailing all-zero
        entry for ``k = N+1``.
    """
    N = p.horizon
    D = ladder.depth
    if tree.horizon != N:
        raise ConfigError(f"belief tree horizon {tree.horizon} does not match problem horizon {N}")
    if tree.belief_length != D + 1:
        raise ConfigError(f"belief length {tree.belief_length} does not match ladder depth {D}")
    if tree.ch != p.ch:
        raise ConfigError("belief tree was built for different channel parameters")
    traces = ladder.extended(D + N + 1).traces
    eve_traces = ladder.traces
    V_next = None  # V_{N+1} = 0
    values, actions = [np.broadcast_to(0.0, (2**N, D + 1))], []
    for k in range(N, 0, -1):
        size = D + k + 1
        Qs = []
        for a in (0, 1):
            q = arrival_prob(a, p.ch)
            remote = q * traces[0] + (1.0 - q) * traces[1 : size + 1]
            eve = _eve_terms(tree, k - 1, a, eve_traces)
            Q = a * p.enc_cost + p.beta * remote[None, :] - (1.0 - p.beta) * eve[:, None]
            if V_next is not None:
                Vc = V_next[a::2]
                Q = Q + q * Vc[:, :1] + (1.0 - q) * Vc[:, 1 : size + 1]
            Qs.append(Q)
        act, V = choose(*Qs)
        values.append(V[:, : D + 1])
        actions.append(act[:, : D + 1])
        V_next = V
    values.reverse()
    actions.reverse()
    return values, BeliefPolicy(tuple(actions), tree)


def certify_belief_thresholds(pol: BeliefPolicy) -> dict:
    """``{(k, node_id): m or None}`` for every time step and belief node.

    Raises:
        StructureViolation: if some slice over the remote index is not a prefix.
    """
    out = {}
    for k in range(1, pol.horizon + 1):
        offset = 2 ** (k - 1) - 1
        for i, row in enumerate(pol.at(k)):
            node = offset + i
            out[(k, node)] = prefix_threshold(row, {"k": k, "node": node, "axis": "n"})
    return out


def threshold_of(pol: BeliefPolicy, k: int, node: int) -> Optional[int]:
    return prefix_threshold(pol.at(k)[node - (2 ** (k - 1) - 1)], {"k": k, "node": node})
