"""Finite-horizon scheduling MDP when the eavesdropper's covariance is observed.

State at time ``k`` is the pair of ladder indices ``(n, n_e)`` with
``P_{k-1} = h^n(P*)`` and ``P_{e,k-1} = h^{n_e}(P*)``.  Under action ``a``
the four channel outcomes move the state to

    00 -> (n+1, n_e+1)    01 -> (n+1, 0)
    10 -> (0,   n_e+1)    11 -> (0,   0)

Value and policy tables are reported on the grid ``{0..D}^2`` for the
ladder depth ``D``.  Internally each backward step works on a grid that is
one index larger than the previous one, so every reported cell is the exact
value of the untruncated problem (no clamping at the top rung).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from encsched.channel import ChannelParams, arrival_prob, eavesdrop_prob, joint_transition
from encsched.errors import ConfigError, StructureViolation
from encsched.linear_model import CovarianceLadder, SystemModel

# argmin ties (|Q1 - Q0| within this, relative to the magnitude of Q) go to a = 0
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ProblemParams:
    model: SystemModel
    ch: ChannelParams
    beta: float
    enc_cost: float
    horizon: int

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must lie in the open interval (0, 1), got {self.beta}")
        if not self.enc_cost >= 0.0 or not np.isfinite(self.enc_cost):
            raise ConfigError(f"enc_cost must be a finite value >= 0, got {self.enc_cost}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be an integer >= 1, got {self.horizon}")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "enc_cost", float(self.enc_cost))
        object.__setattr__(self, "horizon", int(self.horizon))

    def with_(self, **changes) -> "ProblemParams":
        fields = dict(model=self.model, ch=self.ch, beta=self.beta, enc_cost=self.enc_cost, horizon=self.horizon)
        fields.update(changes)
        return ProblemParams(**fields)


class LadderState(NamedTuple):
    n: int
    n_e: int


@dataclass(frozen=True)
class ValueTable:
    """``values[k-1, n, n_e] = V_k(h^n(P*), h^{n_e}(P*))`` for ``k = 1..N+1``."""

    values: np.ndarray
    _ext: tuple = field(repr=False, compare=False, default=())

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    @property
    def depth(self) -> int:
        return self.values.shape[1] - 1

    def at(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.horizon + 1:
            raise IndexError(f"time step {k} outside 1..{self.horizon + 1}")
        return self.values[k - 1]

    def extended_at(self, k: int) -> np.ndarray:
        """Value grid of ``V_k`` on the larger internal grid (at least ``D+2`` wide for ``k >= 2``)."""
        return self._ext[k - 1]


@dataclass(frozen=True)
class PolicyTable:
    """``actions[k-1, n, n_e]`` in {0, 1} for ``k = 1..N``."""

    actions: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ConfigError(f"policy table must have shape (N, D+1, D+1), got {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ConfigError("policy table entries must be 0 or 1")
        a = a.astype(np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def depth(self) -> int:
        return self.actions.shape[1] - 1

    def at(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.horizon:
            raise IndexError(f"time step {k} outside 1..{self.horizon}")
        return self.actions[k - 1]

    @classmethod
    def constant(cls, a: int, horizon: int, depth: int) -> "PolicyTable":
        return cls(np.full((horizon, depth + 1, depth + 1), a, dtype=np.int8))

    @classmethod
    def from_sequence(cls, seq, depth: int) -> "PolicyTable":
        """Open-loop schedule: action ``seq[k-1]`` at time ``k`` regardless of state."""
        seq = np.asarray(seq, dtype=np.int8)
        return cls(np.broadcast_to(seq[:, None, None], (len(seq), depth + 1, depth + 1)).copy())


def _check_depth(ladder, needed, what):
    if needed > ladder.depth:
        raise IndexError(f"{what}: ladder index {needed} beyond ladder depth {ladder.depth}")


def stage_cost(state, a: int, p: ProblemParams, ladder: CovarianceLadder) -> float:
    """Expected one-step cost ``a*C + E[beta tr P_k - (1-beta) tr P_{e,k}]``."""
    n, n_e = state
    _check_depth(ladder, max(n, n_e) + 1, "stage_cost")
    q = arrival_prob(a, p.ch)
    qe = eavesdrop_prob(a, p.ch)
    tr = ladder.traces
    remote = q * tr[0] + (1.0 - q) * tr[n + 1]
    eve = qe * tr[0] + (1.0 - qe) * tr[n_e + 1]
    return a * p.enc_cost + p.beta * remote - (1.0 - p.beta) * eve


def _stage_cost_grid(a, p, traces, size):
    q = arrival_prob(a, p.ch)
    qe = eavesdrop_prob(a, p.ch)
    nxt = traces[1 : size + 1]
    remote = q * traces[0] + (1.0 - q) * nxt
    eve = qe * traces[0] + (1.0 - qe) * nxt
    return a * p.enc_cost + p.beta * remote[:, None] - (1.0 - p.beta) * eve[None, :]


def _continuation(a, p, V_next, size):
    """Expected ``V_{k+1}`` at the successors of every cell of a ``size x size`` grid."""
    t = joint_transition(a, p.ch)
    s = slice(1, size + 1)
    return (
        t.p00 * V_next[s, s]
        + t.p01 * V_next[s, 0][:, None]
        + t.p10 * V_next[0, s][None, :]
        + t.p11 * V_next[0, 0]
    )


def choose(Q0, Q1):
    """Argmin over {0, 1} with near-ties resolved to 0; returns (actions, values)."""
    tol = TIE_RTOL * np.maximum(1.0, np.maximum(np.abs(Q0), np.abs(Q1)))
    act = (Q1 < Q0 - tol).astype(np.int8)
    return act, np.where(act == 1, Q1, Q0)


def backward_induction(p: ProblemParams, ladder: CovarianceLadder):
    """Solve the Bellman recursion from ``V_{N+1} = 0`` down to ``k = 1``.

    Returns:
        (ValueTable, PolicyTable) on the grid ``{0..D}^2``.
    """
    N = p.horizon
    D = ladder.depth
    if D < N + 1:
        raise ConfigError(f"ladder depth {D} must be >= horizon + 1 = {N + 1}")
    traces = ladder.extended(D + N + 1).traces
    # at time k the internal grid is {0..D+k}; successors then live in {0..D+k+1}
    V_next = np.zeros((D + N + 2, D + N + 2))
    ext = [V_next]
    values = np.zeros((N + 1, D + 1, D + 1))
    actions = np.zeros((N, D + 1, D + 1), dtype=np.int8)
    for k in range(N, 0, -1):
        size = D + k + 1
        Q0 = _stage_cost_grid(0, p, traces, size) + _continuation(0, p, V_next, size)
        Q1 = _stage_cost_grid(1, p, traces, size) + _continuation(1, p, V_next, size)
        act, V = choose(Q0, Q1)
        values[k - 1] = V[: D + 1, : D + 1]
        actions[k - 1] = act[: D + 1, : D + 1]
        ext.append(V)
        V_next = V
    values.setflags(write=False)
    return ValueTable(values, tuple(reversed(ext))), PolicyTable(actions)


def action_values(k: int, state, vt: ValueTable, p: ProblemParams, ladder: CovarianceLadder):
    """``(Q_0, Q_1)``: stage cost plus expected continuation for each action."""
    n, n_e = state
    if not 1 <= k <= vt.horizon:
        raise IndexError(f"time step {k} outside 1..{vt.horizon}")
    V_next = vt.extended_at(k + 1)
    if max(n, n_e) + 1 >= V_next.shape[0]:
        raise IndexError(f"state {tuple(state)} outside the solved grid at time {k}")
    lad = ladder.extended(max(n, n_e) + 1)
    out = []
    for a in (0, 1):
        t = joint_transition(a, p.ch)
        cont = (
            t.p00 * V_next[n + 1, n_e + 1]
            + t.p01 * V_next[n + 1, 0]
            + t.p10 * V_next[0, n_e + 1]
            + t.p11 * V_next[0, 0]
        )
        out.append(stage_cost((n, n_e), a, p, lad) + cont)
    return tuple(out)


def phi(k: int, state, vt: ValueTable, p: ProblemParams, ladder: CovarianceLadder) -> float:
    """``Q_1 - Q_0`` at ``(k, state)``; non-negative means sending in plain is optimal."""
    Q0, Q1 = action_values(k, state, vt, p, ladder)
    return Q1 - Q0


def prefix_threshold(row, context=None) -> Optional[int]:
    """Largest ``m`` with ``row[:m+1]`` all ones and the rest zero, or None if no ones."""
    row = np.asarray(row)
    ones = np.flatnonzero(row)
    if ones.size == 0:
        return None
    m = int(ones[-1])
    if ones.size != m + 1:
        raise StructureViolation(
            "encrypt set is not a prefix of the remote index",
            dict(context or {}, slice=row.tolist()),
        )
    return m


def suffix_threshold(col, context=None) -> Optional[int]:
    """Smallest ``m_e`` with ``col[m_e:]`` all ones and the rest zero, or None if no ones."""
    col = np.asarray(col)
    ones = np.flatnonzero(col)
    if ones.size == 0:
        return None
    m_e = int(ones[0])
    if ones.size != col.size - m_e:
        raise StructureViolation(
            "encrypt set is not a suffix of the eavesdropper index",
            dict(context or {}, slice=col.tolist()),
        )
    return m_e


def extract_threshold_m(k: int, n_e: int, pol: PolicyTable) -> Optional[int]:
    return prefix_threshold(pol.at(k)[:, n_e], {"k": k, "n_e": n_e, "axis": "n"})


def extract_threshold_me(k: int, n: int, pol: PolicyTable) -> Optional[int]:
    return suffix_threshold(pol.at(k)[n, :], {"k": k, "n": n, "axis": "n_e"})


def certify_thresholds(pol: PolicyTable):
    """Threshold maps ``m[(k, n_e)]`` and ``m_e[(k, n)]`` for every slice.

    Raises:
        StructureViolation: on the first slice that is not of threshold form.
    """
    m, m_e = {}, {}
    for k in range(1, pol.horizon + 1):
        for j in range(pol.depth + 1):
            m[(k, j)] = extract_threshold_m(k, j, pol)
            m_e[(k, j)] = extract_threshold_me(k, j, pol)
    return m, m_e
