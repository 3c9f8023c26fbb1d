"""Action-dependent Bernoulli channel to the remote estimator and the eavesdropper.

Outcome labels follow ``(gamma, gamma_e)``: first bit is remote reception,
second bit is successful eavesdropping (overheard and decrypted), 1 means
success.  ``p01`` is therefore "remote lost, eavesdropper succeeded".
The two links are independent given the action.
"""

from __future__ import annotations

from dataclasses import dataclass

from encsched.errors import ConfigError

PLAIN = 0
ENCRYPT = 1


def _check_action(a):
    if a not in (0, 1):
        raise ConfigError(f"action must be 0 or 1, got {a!r}")


@dataclass(frozen=True)
class ChannelParams:
    """Reception/eavesdrop probabilities and encryption impact factors.

    Attributes:
        lam: packet arrival probability at the remote estimator (plain).
        lam_e: successful eavesdrop probability (plain).
        eps1: multiplicative impact of encryption on ``lam``.
        eps2: probability the eavesdropper decrypts an overheard packet.
    """

    lam: float
    lam_e: float
    eps1: float
    eps2: float

    def __post_init__(self):
        for name in ("lam", "lam_e", "eps1", "eps2"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class JointTransition:
    p00: float
    p01: float
    p10: float
    p11: float

    def as_tuple(self):
        return (self.p00, self.p01, self.p10, self.p11)


def arrival_prob(a: int, ch: ChannelParams) -> float:
    _check_action(a)
    return ch.eps1 * ch.lam if a else ch.lam


def eavesdrop_prob(a: int, ch: ChannelParams) -> float:
    _check_action(a)
    return ch.eps2 * ch.lam_e if a else ch.lam_e


def joint_transition(a: int, ch: ChannelParams) -> JointTransition:
    """Probabilities of the four ``(gamma, gamma_e)`` outcomes under action ``a``."""
    q = arrival_prob(a, ch)
    qe = eavesdrop_prob(a, ch)
    return JointTransition(
        p00=(1.0 - q) * (1.0 - qe),
        p01=(1.0 - q) * qe,
        p10=q * (1.0 - qe),
        p11=q * qe,
    )
