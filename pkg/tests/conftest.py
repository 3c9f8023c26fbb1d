import numpy as np
import pytest

from encsched import ChannelParams, ConfigError, ProblemParams, SystemModel
from encsched.evaluation import default_ladder

BASE_A = np.diag([1.5, 0.9])
BASE_C = np.array([[1.0, 0.0]])
BASE_Q = 0.5 * np.eye(2)
BASE_R = np.array([[0.6]])
BASE_CH = dict(lam=0.7, lam_e=0.7, eps1=0.9, eps2=0.18)
BASE_BETA = 0.5
BASE_COST = 6.0


def base_model():
    return SystemModel(A=BASE_A, C=BASE_C, Q=BASE_Q, R=BASE_R, Pi0=np.eye(2))


def base_problem(horizon=10, **changes):
    ch = ChannelParams(**{**BASE_CH, **{k: v for k, v in changes.items() if k in BASE_CH}})
    beta = changes.get("beta", BASE_BETA)
    cost = changes.get("enc_cost", BASE_COST)
    return ProblemParams(base_model(), ch, beta, cost, horizon)


def random_diag_problem(rng, horizon):
    """Random draw used by the structural suites: diagonal A with modes in [0.3, 1.5]."""
    while True:
        A = np.diag(rng.uniform(0.3, 1.5, 2))
        C = rng.normal(size=(1, 2))
        Q = np.diag(rng.uniform(0.1, 1.0, 2))
        R = np.array([[rng.uniform(0.1, 1.0)]])
        try:
            model = SystemModel(A=A, C=C, Q=Q, R=R, Pi0=np.eye(2))
        except ConfigError:
            continue
        ch = ChannelParams(*rng.uniform(0.0, 1.0, 4))
        return ProblemParams(model, ch, rng.uniform(0.05, 0.95), rng.uniform(0.0, 10.0), horizon)


def random_full_model(rng):
    """Random controllable/observable 2x2 model with spectral radius in [0.3, 1.3]."""
    from encsched.linear_model import is_controllable, is_observable, psd_sqrt

    while True:
        A = rng.normal(size=(2, 2))
        A *= rng.uniform(0.3, 1.3) / max(abs(np.linalg.eigvals(A)))
        C = rng.normal(size=(1, 2))
        L = rng.normal(size=(2, 2))
        Q = L @ L.T + 0.05 * np.eye(2)
        R = np.array([[rng.uniform(0.1, 2.0)]])
        if is_controllable(A, psd_sqrt(Q)) and is_observable(A, C):
            return SystemModel(A=A, C=C, Q=Q, R=R, Pi0=np.eye(2))


@pytest.fixture
def model():
    return base_model()


@pytest.fixture
def problem6():
    return base_problem(6)


@pytest.fixture
def ladder6(problem6):
    return default_ladder(problem6)


# acceptance summary: one line per criterion at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
