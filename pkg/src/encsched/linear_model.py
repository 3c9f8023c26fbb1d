"""LTI plant, steady-state Kalman covariance and the Lyapunov covariance ladder.

Plant::

    x_{k+1} = A x_k + w_k,   w_k ~ N(0, Q)
    y_k     = C x_k + v_k,   v_k ~ N(0, R)

When no packet reaches an estimator its error covariance evolves by the
open-loop Lyapunov map ``h(X) = A X A^T + Q``; a received packet resets it
to the steady-state a-posteriori covariance ``P*``.  Every covariance an
estimator can hold is therefore some rung ``h^i(P*)`` of the ladder built
here, and the schedulers work on ladder indices only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from encsched.errors import ConfigError, NumericalError

SYM_TOL = 1e-9
PSD_TOL = 1e-8
RANK_TOL = 1e-8


def _sym(X):
    return 0.5 * (X + X.T)


def _as_matrix(name, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise ConfigError(f"{name}: expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigError(f"{name}: entries must be finite")
    return X


def _check_psd(name, X, strict=False):
    if X.shape[0] != X.shape[1]:
        raise ConfigError(f"{name}: must be square, got shape {X.shape}")
    if np.max(np.abs(X - X.T), initial=0.0) > SYM_TOL:
        raise ConfigError(f"{name}: not symmetric")
    eig_min = np.linalg.eigvalsh(_sym(X)).min()
    if strict and eig_min <= 0:
        raise ConfigError(f"{name}: must be positive definite (min eigenvalue {eig_min:.3g})")
    if eig_min < -SYM_TOL:
        raise ConfigError(f"{name}: must be positive semidefinite (min eigenvalue {eig_min:.3g})")


def psd_sqrt(X):
    """Symmetric square root of a PSD matrix (negative rounding clipped)."""
    w, V = np.linalg.eigh(_sym(X))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _rank(M):
    return np.linalg.matrix_rank(M, tol=RANK_TOL)


def controllability_matrix(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C):
    return controllability_matrix(A.T, C.T).T


def is_controllable(A, B):
    return _rank(controllability_matrix(A, B)) == A.shape[0]


def is_observable(A, C):
    return _rank(observability_matrix(A, C)) == A.shape[0]


def is_stabilizable(A, B):
    # PBH test on the modes with |mu| >= 1
    n = A.shape[0]
    for mu in np.linalg.eigvals(A):
        if abs(mu) >= 1.0 - 1e-12:
            if _rank(np.hstack([mu * np.eye(n) - A, B])) < n:
                return False
    return True


def is_detectable(A, C):
    return is_stabilizable(A.T, C.T)


@dataclass(frozen=True)
class SystemModel:
    """Plant matrices with validated covariances.

    Covariances must be symmetric PSD (``R`` positive definite).  The pair
    ``(A, sqrt(Q))`` must be stabilizable and ``(A, C)`` detectable, which
    is what the Riccati recursion actually needs to converge; full
    controllability/observability is available through
    :func:`is_controllable` and :func:`is_observable` but not enforced.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Pi0: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        C = _as_matrix("C", self.C)
        Q = _as_matrix("Q", self.Q)
        R = _as_matrix("R", self.R)
        Pi0 = _as_matrix("Pi0", self.Pi0)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigError(f"A: must be square, got shape {A.shape}")
        if C.shape[1] != n:
            raise ConfigError(f"C: expected {n} columns, got shape {C.shape}")
        m = C.shape[0]
        for name, X, dim in (("Q", Q, n), ("R", R, m), ("Pi0", Pi0, n)):
            if X.shape != (dim, dim):
                raise ConfigError(f"{name}: expected shape ({dim}, {dim}), got {X.shape}")
        _check_psd("Q", Q)
        _check_psd("R", R, strict=True)
        _check_psd("Pi0", Pi0)
        if not is_stabilizable(A, psd_sqrt(Q)):
            raise ConfigError("(A, sqrt(Q)) is not stabilizable")
        if not is_detectable(A, C):
            raise ConfigError("(A, C) is not detectable")
        for name, X in (("A", A), ("C", C), ("Q", _sym(Q)), ("R", _sym(R)), ("Pi0", _sym(Pi0))):
            X = X.copy()
            X.setflags(write=False)
            object.__setattr__(self, name, X)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]


def lyapunov_step(model: SystemModel, X) -> np.ndarray:
    """Open-loop covariance update ``A X A^T + Q``, symmetrized."""
    X = np.asarray(X, dtype=float)
    if X.shape != (model.n, model.n):
        raise ConfigError(f"X: expected shape ({model.n}, {model.n}), got {X.shape}")
    return _sym(model.A @ X @ model.A.T + model.Q)


def _innovation_gain(model, P_prior):
    S = model.C @ P_prior @ model.C.T + model.R
    try:
        # K = P C^T S^{-1}  <=>  S^T K^T = C P^T
        return np.linalg.solve(S.T, model.C @ P_prior.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular innovation covariance") from exc


def riccati_step(model: SystemModel, P) -> np.ndarray:
    """One time+measurement update of the a-posteriori error covariance."""
    P_prior = lyapunov_step(model, P)
    K = _innovation_gain(model, P_prior)
    return _sym((np.eye(model.n) - K @ model.C) @ P_prior)


def steady_state_covariance(model: SystemModel, tol: float = 1e-12, max_iter: int = 1_000_000, P0=None) -> np.ndarray:
    """Fixed point ``P*`` of the a-posteriori Riccati recursion.

    Iterates from ``Pi0`` (or ``P0`` if given) until the max-abs elementwise
    change drops below ``tol * max(1, max|P|)``.

    Raises:
        NumericalError: no convergence within ``max_iter`` iterations
            (``residual`` holds the last change) or singular innovation.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    P = _sym(np.asarray(model.Pi0 if P0 is None else P0, dtype=float))
    change = np.inf
    for _ in range(max_iter):
        P_next = riccati_step(model, P)
        if not np.all(np.isfinite(P_next)):
            raise NumericalError("Riccati iteration diverged", residual=change)
        change = np.max(np.abs(P_next - P))
        P = P_next
        if change < tol * max(1.0, np.max(np.abs(P))):
            return P
    raise NumericalError(f"Riccati iteration did not converge in {max_iter} iterations", residual=change)


def steady_state_gain(model: SystemModel, Pstar) -> np.ndarray:
    """Kalman gain ``K*`` of the local filter running at ``P*``."""
    return _innovation_gain(model, lyapunov_step(model, Pstar))


@dataclass(frozen=True)
class CovarianceLadder:
    """Rungs ``h^0(P*), ..., h^D(P*)`` with their traces.

    The plant's ``A`` and ``Q`` are kept so the ladder can be extended
    without recomputing ``P*``.
    """

    rungs: np.ndarray
    traces: np.ndarray
    A: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)

    @property
    def depth(self) -> int:
        return len(self.traces) - 1

    @property
    def pstar(self) -> np.ndarray:
        return self.rungs[0]

    def extended(self, depth: int) -> "CovarianceLadder":
        """Ladder with at least ``depth`` rungs above ``P*`` (self if already deep enough)."""
        if depth <= self.depth:
            return self
        rungs = list(self.rungs)
        while len(rungs) <= depth:
            rungs.append(_sym(self.A @ rungs[-1] @ self.A.T + self.Q))
        return _make_ladder(np.array(rungs), self.A, self.Q)


def _make_ladder(rungs, A, Q):
    traces = np.trace(rungs, axis1=1, axis2=2)
    rungs.setflags(write=False)
    traces.setflags(write=False)
    return CovarianceLadder(rungs=rungs, traces=traces, A=A, Q=Q)


def build_ladder(model: SystemModel, depth: int, Pstar=None, tol: float = 1e-12, max_iter: int = 1_000_000) -> CovarianceLadder:
    """Build ``[h^0(P*), ..., h^depth(P*)]``; ``P*`` is computed unless supplied."""
    if depth < 0:
        raise ConfigError("ladder depth must be >= 0")
    if Pstar is None:
        Pstar = steady_state_covariance(model, tol=tol, max_iter=max_iter)
    rungs = [_sym(np.asarray(Pstar, dtype=float))]
    for _ in range(depth):
        rungs.append(lyapunov_step(model, rungs[-1]))
    return _make_ladder(np.array(rungs), model.A, model.Q)
