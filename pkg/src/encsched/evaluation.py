"""Exact and Monte Carlo evaluation of encryption schedules.

Cost accounting sums ``k = 1..N``; the initial covariances at ``k = 0`` are
not counted.

Random numbers
--------------
Monte Carlo uses numpy's PCG64 bit generator.  Trials are grouped in fixed
blocks of ``MC_BLOCK`` consecutive trial indices; block ``b`` draws from
``SeedSequence(seed, spawn_key=(b,))``.  Inside a block the uniforms form a
``(trials_in_block, N, 2)`` array filled in C order: for trial ``t`` and time
``k`` the first uniform decides remote reception (``u < q``) and the second
decides eavesdropping (``u < q_e``).  Results depend only on ``(seed,
trials)``; blocks may be evaluated in any order or on any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from encsched.channel import arrival_prob, eavesdrop_prob
from encsched.errors import ConfigError
from encsched.linear_model import CovarianceLadder, build_ladder, psd_sqrt, steady_state_covariance, steady_state_gain
from encsched.mdp_full_info import PolicyTable, ProblemParams, backward_induction
from encsched.pomdp_belief import BeliefPolicy, enumerate_belief_tree, pomdp_backward_induction

MC_BLOCK = 4096

KINDS = ("never", "always", "optimal_known", "optimal_unknown", "table")
LABELS = {
    "never": "theta1",
    "always": "theta2",
    "optimal_known": "theta*1",
    "optimal_unknown": "theta*2",
    "table": "table",
}


@dataclass(frozen=True)
class Strategy:
    kind: str
    payload: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}")
        needs = {"optimal_known": PolicyTable, "table": PolicyTable, "optimal_unknown": BeliefPolicy}
        if self.kind in needs:
            if not isinstance(self.payload, needs[self.kind]):
                raise ConfigError(f"strategy {self.kind!r} needs a {needs[self.kind].__name__} payload")
        elif self.payload is not None:
            raise ConfigError(f"strategy {self.kind!r} takes no payload")

    @property
    def label(self) -> str:
        return LABELS[self.kind]

    @property
    def uses_belief(self) -> bool:
        return self.kind == "optimal_unknown"

    @classmethod
    def never(cls):
        return cls("never")

    @classmethod
    def always(cls):
        return cls("always")

    @classmethod
    def optimal_known(cls, policy: PolicyTable):
        return cls("optimal_known", policy)

    @classmethod
    def optimal_unknown(cls, policy: BeliefPolicy):
        return cls("optimal_unknown", policy)

    @classmethod
    def table(cls, policy: PolicyTable):
        return cls("table", policy)

    def check_horizon(self, N: int):
        if self.payload is not None and self.payload.horizon != N:
            raise ConfigError(f"strategy horizon {self.payload.horizon} does not match problem horizon {N}")

    def full_info_actions(self, N: int, depth: int) -> np.ndarray:
        """``(N, depth+1, depth+1)`` action array for non-belief strategies."""
        if self.kind == "never":
            return np.zeros((N, depth + 1, depth + 1), dtype=np.int8)
        if self.kind == "always":
            return np.ones((N, depth + 1, depth + 1), dtype=np.int8)
        if self.uses_belief:
            raise ConfigError("belief strategies have no full-information action table")
        return np.asarray(self.payload.actions)


@dataclass(frozen=True)
class SimReport:
    """Expected horizon sums for one strategy.

    ``trials == 0`` marks an exact evaluation (standard errors are zero).
    """

    sum_remote_trace: float
    sum_eve_trace: float
    enc_uses: float
    total_cost: float
    se_remote: float = 0.0
    se_eve: float = 0.0
    se_enc: float = 0.0
    se_cost: float = 0.0
    trials: int = 0
    seed: Optional[int] = None
    per_step_remote: tuple = field(default=(), repr=False)
    per_step_eve: tuple = field(default=(), repr=False)

    @property
    def exact(self) -> bool:
        return self.trials == 0

    def recombined_cost(self, beta: float, enc_cost: float) -> float:
        return beta * self.sum_remote_trace - (1.0 - beta) * self.sum_eve_trace + enc_cost * self.enc_uses

    def is_consistent(self, beta: float, enc_cost: float, tol: float = 1e-9) -> bool:
        J = self.recombined_cost(beta, enc_cost)
        return abs(J - self.total_cost) <= tol * max(1.0, abs(J))


# --- exact evaluation -------------------------------------------------------


def evaluate_tables_exact(actions, p: ProblemParams, traces, start=(0, 0)):
    """Exact per-step expectations for a batch of full-information policy tables.

    Args:
        actions: ``(B, N, G, G)`` 0/1 array.
        traces: ladder traces, at least ``G + 1`` long.
        start: initial ``(n, n_e)``.

    Returns:
        dict of ``(B, N)`` arrays ``remote``, ``eve``, ``enc``, ``cost``.
    """
    actions = np.asarray(actions)
    B, N, G, _ = actions.shape
    if max(start) + N > G:
        raise ConfigError(f"grid of size {G} too small for horizon {N} from start {tuple(start)}")
    if len(traces) < G + 1:
        raise ConfigError(f"need at least {G + 1} ladder traces for a grid of size {G}, got {len(traces)}")
    lam = (arrival_prob(0, p.ch), arrival_prob(1, p.ch))
    lam_e = (eavesdrop_prob(0, p.ch), eavesdrop_prob(1, p.ch))
    tr0 = traces[0]
    tr_next = np.asarray(traces[1 : G + 1])
    dist = np.zeros((B, G, G))
    dist[:, start[0], start[1]] = 1.0
    out = {key: np.zeros((B, N)) for key in ("remote", "eve", "enc", "cost")}
    for k in range(N):
        a = actions[:, k].astype(bool)
        q = np.where(a, lam[1], lam[0])
        qe = np.where(a, lam_e[1], lam_e[0])
        remote = q * tr0 + (1.0 - q) * tr_next[None, :, None]
        eve = qe * tr0 + (1.0 - qe) * tr_next[None, None, :]
        cost = a * p.enc_cost + p.beta * remote - (1.0 - p.beta) * eve
        out["remote"][:, k] = np.einsum("bij,bij->b", dist, remote)
        out["eve"][:, k] = np.einsum("bij,bij->b", dist, eve)
        out["enc"][:, k] = np.einsum("bij,bij->b", dist, a)
        out["cost"][:, k] = np.einsum("bij,bij->b", dist, cost)
        if k == N - 1:
            break
        nxt = np.zeros_like(dist)
        m00 = dist * (1.0 - q) * (1.0 - qe)
        m01 = dist * (1.0 - q) * qe
        m10 = dist * q * (1.0 - qe)
        m11 = dist * q * qe
        nxt[:, 1:, 1:] += m00[:, :-1, :-1]
        nxt[:, 1:, 0] += m01[:, :-1, :].sum(axis=2)
        nxt[:, 0, 1:] += m10[:, :, :-1].sum(axis=1)
        nxt[:, 0, 0] += m11.sum(axis=(1, 2))
        dist = nxt
    return out


def _evaluate_belief_exact(pol: BeliefPolicy, p: ProblemParams, ladder: CovarianceLadder):
    N = p.horizon
    tree = pol.tree
    G = pol.depth + 1
    if G < N + 1:
        raise ConfigError(f"belief policy depth {G - 1} too small for horizon {N}")
    traces = ladder.extended(G).traces
    eve_traces = ladder.traces[:G]
    q_of = (arrival_prob(0, p.ch), arrival_prob(1, p.ch))
    dist = np.zeros((1, G))
    dist[0, 0] = 1.0
    out = {key: np.zeros(N) for key in ("remote", "eve", "enc", "cost")}
    for k in range(1, N + 1):
        a = pol.at(k).astype(bool)
        q = np.where(a, q_of[1], q_of[0])
        remote = q * traces[0] + (1.0 - q) * traces[1 : G + 1][None, :]
        et = [tree.child_beliefs(k - 1, b) @ eve_traces for b in (0, 1)]
        eve = np.where(a, et[1][:, None], et[0][:, None])
        cost = a * p.enc_cost + p.beta * remote - (1.0 - p.beta) * eve
        out["remote"][k - 1] = np.sum(dist * remote)
        out["eve"][k - 1] = np.sum(dist * eve)
        out["enc"][k - 1] = np.sum(dist * a)
        out["cost"][k - 1] = np.sum(dist * cost)
        if k == N:
            break
        nxt = np.zeros((2 * dist.shape[0], G))
        for b in (0, 1):
            mask = a == b
            nxt[b::2, 0] = np.sum(dist * q * mask, axis=1)
            nxt[b::2, 1:] = (dist * (1.0 - q) * mask)[:, :-1]
        dist = nxt
    return out


def _report_from_steps(steps):
    return SimReport(
        sum_remote_trace=float(np.sum(steps["remote"])),
        sum_eve_trace=float(np.sum(steps["eve"])),
        enc_uses=float(np.sum(steps["enc"])),
        total_cost=float(np.sum(steps["cost"])),
        per_step_remote=tuple(float(x) for x in steps["remote"]),
        per_step_eve=tuple(float(x) for x in steps["eve"]),
    )


def evaluate_policy_exact(strategy: Strategy, p: ProblemParams, ladder: CovarianceLadder, start=(0, 0)) -> SimReport:
    """Exact expectations by forward propagation of the induced finite chain.

    Full-information and open-loop strategies propagate the joint law of
    ``(n, n_e)``; belief strategies propagate ``(belief node, n)`` and read the
    eavesdropper's index distribution off the belief.
    """
    strategy.check_horizon(p.horizon)
    if strategy.uses_belief:
        if tuple(start) != (0, 0):
            raise ConfigError("belief strategies start from (0, 0)")
        steps = _evaluate_belief_exact(strategy.payload, p, ladder)
    else:
        depth = strategy.payload.depth if strategy.payload is not None else max(ladder.depth, p.horizon + max(start))
        actions = strategy.full_info_actions(p.horizon, depth)
        traces = ladder.extended(depth + 1).traces
        steps = evaluate_tables_exact(actions[None], p, traces, start)
        steps = {key: v[0] for key, v in steps.items()}
    return _report_from_steps(steps)


# --- Monte Carlo ------------------------------------------------------------


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _check_seed(seed):
    if int(seed) != seed or seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


class _ActionLookup:
    """Vectorised action lookup for a strategy at ``(k, n, n_e, node)``."""

    def __init__(self, strategy, N, depth):
        strategy.check_horizon(N)
        self.strategy = strategy
        if strategy.uses_belief:
            self.table = None
        else:
            d = strategy.payload.depth if strategy.payload is not None else depth
            self.table = strategy.full_info_actions(N, d)

    def __call__(self, k, n, n_e, node):
        if self.table is None:
            return self.strategy.payload.at(k)[node, n]
        return self.table[k - 1][n, n_e]


def _mc_block(lookup, p, traces, u):
    m, N, _ = u.shape
    lam = (arrival_prob(0, p.ch), arrival_prob(1, p.ch))
    lam_e = (eavesdrop_prob(0, p.ch), eavesdrop_prob(1, p.ch))
    n = np.zeros(m, dtype=np.int64)
    n_e = np.zeros(m, dtype=np.int64)
    node = np.zeros(m, dtype=np.int64)
    remote = np.zeros((m, N))
    eve = np.zeros((m, N))
    enc = np.zeros((m, N))
    for k in range(1, N + 1):
        a = np.asarray(lookup(k, n, n_e, node)).astype(np.int64)
        q = np.where(a == 1, lam[1], lam[0])
        qe = np.where(a == 1, lam_e[1], lam_e[0])
        got = u[:, k - 1, 0] < q
        got_e = u[:, k - 1, 1] < qe
        n = np.where(got, 0, n + 1)
        n_e = np.where(got_e, 0, n_e + 1)
        node = 2 * node + a
        remote[:, k - 1] = traces[n]
        eve[:, k - 1] = traces[n_e]
        enc[:, k - 1] = a
    return remote, eve, enc


def simulate(strategy: Strategy, p: ProblemParams, ladder: CovarianceLadder, trials: int, seed: int) -> SimReport:
    """Monte Carlo estimate of the report columns from sampled channel outcomes."""
    if int(trials) != trials or trials < 1:
        raise ConfigError(f"trials must be an integer >= 1, got {trials!r}")
    seed = _check_seed(seed)
    N = p.horizon
    lookup = _ActionLookup(strategy, N, max(ladder.depth, N))
    traces = ladder.extended(N).traces
    parts = []
    for b, lo in enumerate(range(0, trials, MC_BLOCK)):
        m = min(MC_BLOCK, trials - lo)
        u = block_rng(seed, b).random((m, N, 2))
        parts.append(_mc_block(lookup, p, traces, u))
    remote = np.concatenate([x[0] for x in parts])
    eve = np.concatenate([x[1] for x in parts])
    enc = np.concatenate([x[2] for x in parts])
    totals = {
        "remote": remote.sum(axis=1),
        "eve": eve.sum(axis=1),
        "enc": enc.sum(axis=1),
    }
    totals["cost"] = p.beta * totals["remote"] - (1.0 - p.beta) * totals["eve"] + p.enc_cost * totals["enc"]

    def se(x):
        return float(np.std(x, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0

    return SimReport(
        sum_remote_trace=float(totals["remote"].mean()),
        sum_eve_trace=float(totals["eve"].mean()),
        enc_uses=float(totals["enc"].mean()),
        total_cost=float(totals["cost"].mean()),
        se_remote=se(totals["remote"]),
        se_eve=se(totals["eve"]),
        se_enc=se(totals["enc"]),
        se_cost=se(totals["cost"]),
        trials=int(trials),
        seed=seed,
        per_step_remote=tuple(float(x) for x in remote.mean(axis=0)),
        per_step_eve=tuple(float(x) for x in eve.mean(axis=0)),
    )


# --- state-space trajectories ----------------------------------------------


@dataclass(frozen=True)
class TrajectoryBatch:
    """Sampled trajectories; arrays have a leading trajectory axis.

    ``x``, ``x_local``, ``x_remote``, ``x_eve`` have shape ``(M, N+1, n)``
    (index 0 is the initial condition); ``actions``, ``gamma``, ``gamma_e``
    have shape ``(M, N)``; ``n_idx`` / ``ne_idx`` have shape ``(M, N+1)``.
    """

    x: np.ndarray
    x_local: np.ndarray
    x_remote: np.ndarray
    x_eve: np.ndarray
    actions: np.ndarray
    gamma: np.ndarray
    gamma_e: np.ndarray
    n_idx: np.ndarray
    ne_idx: np.ndarray

    def remote_sq_error(self) -> np.ndarray:
        return np.sum((self.x - self.x_remote) ** 2, axis=-1)

    def eve_sq_error(self) -> np.ndarray:
        return np.sum((self.x - self.x_eve) ** 2, axis=-1)

    def __getitem__(self, i):
        return TrajectoryBatch(*(getattr(self, f)[i] for f in self.__dataclass_fields__))


def simulate_trajectories(p: ProblemParams, strategy: Strategy, count: int, seed: int, Pstar=None) -> TrajectoryBatch:
    """Sample plant, local steady-state filter and both receivers end to end.

    The local filter starts in steady state: ``x_0 ~ N(0, P*)`` with local
    estimate 0, so its error covariance is ``P*`` at every step; both
    receivers start from the local estimate (index 0).  Draw order per step
    is process noise, measurement noise, then the two channel uniforms, all
    from one PCG64 stream seeded by ``SeedSequence(seed)``.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    seed = _check_seed(seed)
    model = p.model
    N = p.horizon
    if Pstar is None:
        Pstar = steady_state_covariance(model)
    K = steady_state_gain(model, Pstar)
    A, C = model.A, model.C
    sQ, sR, sP = psd_sqrt(model.Q), psd_sqrt(model.R), psd_sqrt(Pstar)
    lookup = _ActionLookup(strategy, N, N + 1)
    lam = (arrival_prob(0, p.ch), arrival_prob(1, p.ch))
    lam_e = (eavesdrop_prob(0, p.ch), eavesdrop_prob(1, p.ch))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    M, dim = count, model.n
    x = np.zeros((M, N + 1, dim))
    xs = np.zeros_like(x)
    xr = np.zeros_like(x)
    xe = np.zeros_like(x)
    acts = np.zeros((M, N), dtype=np.int8)
    gam = np.zeros((M, N), dtype=np.int8)
    gam_e = np.zeros((M, N), dtype=np.int8)
    n_idx = np.zeros((M, N + 1), dtype=np.int64)
    ne_idx = np.zeros((M, N + 1), dtype=np.int64)
    node = np.zeros(M, dtype=np.int64)

    x[:, 0] = rng.standard_normal((M, dim)) @ sP
    for k in range(1, N + 1):
        a = np.asarray(lookup(k, n_idx[:, k - 1], ne_idx[:, k - 1], node)).astype(np.int64)
        w = rng.standard_normal((M, dim)) @ sQ
        v = rng.standard_normal((M, model.m)) @ sR
        u = rng.random((M, 2))
        x[:, k] = x[:, k - 1] @ A.T + w
        y = x[:, k] @ C.T + v
        pred = xs[:, k - 1] @ A.T
        xs[:, k] = pred + (y - pred @ C.T) @ K.T
        got = u[:, 0] < np.where(a == 1, lam[1], lam[0])
        got_e = u[:, 1] < np.where(a == 1, lam_e[1], lam_e[0])
        xr[:, k] = np.where(got[:, None], xs[:, k], xr[:, k - 1] @ A.T)
        xe[:, k] = np.where(got_e[:, None], xs[:, k], xe[:, k - 1] @ A.T)
        n_idx[:, k] = np.where(got, 0, n_idx[:, k - 1] + 1)
        ne_idx[:, k] = np.where(got_e, 0, ne_idx[:, k - 1] + 1)
        node = 2 * node + a
        acts[:, k - 1] = a
        gam[:, k - 1] = got
        gam_e[:, k - 1] = got_e
    return TrajectoryBatch(x, xs, xr, xe, acts, gam, gam_e, n_idx, ne_idx)


def simulate_trajectory(p: ProblemParams, strategy: Strategy, seed: int, Pstar=None) -> TrajectoryBatch:
    """Single trajectory (first element of :func:`simulate_trajectories`)."""
    return simulate_trajectories(p, strategy, 1, seed, Pstar=Pstar)[0]


# --- strategy comparison ----------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    strategy: Strategy
    exact: SimReport
    mc: SimReport

    @property
    def label(self) -> str:
        return self.strategy.label


def solve_strategies(p: ProblemParams, ladder: CovarianceLadder):
    """The four compared strategies, solving both scheduling problems."""
    _, pol_known = backward_induction(p, ladder)
    tree = enumerate_belief_tree(p.ch, p.horizon, ladder.depth)
    _, pol_unknown = pomdp_backward_induction(p, ladder, tree)
    return [
        Strategy.never(),
        Strategy.always(),
        Strategy.optimal_known(pol_known),
        Strategy.optimal_unknown(pol_unknown),
    ]


def compare_strategies(p: ProblemParams, ladder: CovarianceLadder, trials: int, seed: int):
    """Rows for never / always / optimal-known / optimal-unknown, in that order.

    Every strategy is simulated with the same seed (common random numbers).
    """
    rows = []
    for s in solve_strategies(p, ladder):
        rows.append(ComparisonRow(s, evaluate_policy_exact(s, p, ladder), simulate(s, p, ladder, trials, seed)))
    return rows


def default_ladder(p: ProblemParams, depth=None, tol=1e-12, max_iter=1_000_000) -> CovarianceLadder:
    return build_ladder(p.model, p.horizon + 1 if depth is None else depth, tol=tol, max_iter=max_iter)
