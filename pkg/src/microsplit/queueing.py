"""Closed-form mean-value formulas for single-server FIFO queues.

Two service disciplines are supported: exponential service (M/M/1) and
deterministic service (M/D/1, via Pollaczek-Khinchine). Every function here
is pure.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

# Utilization above which results are flagged as near saturation.
NEAR_SATURATION_RHO = 0.99


class UnstableQueue(ValueError):
    """Raised when a queue has no steady state (arrival rate >= service rate)."""

    def __init__(self, lam: float, mu: float, where: object = None):
        self.lam = lam
        self.mu = mu
        self.where = where
        location = "" if where is None else f" at {_describe(where)}"
        super().__init__(
            f"unstable queue{location}: arrival rate {lam!r} >= service rate {mu!r}"
        )


def _describe(where: object) -> str:
    if isinstance(where, int):
        return f"stage {where + 1}"
    return str(where)


class Discipline(str, enum.Enum):
    """Service-time distribution of a queue, spelled in Kendall notation."""

    EXPONENTIAL = "mm1"
    DETERMINISTIC = "md1"

    @classmethod
    def parse(cls, value: "str | Discipline") -> "Discipline":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown discipline {value!r}; expected 'mm1' or 'md1'") from None


def as_rate(value: float, name: str = "rate") -> float:
    """Validate a strictly positive, finite rate and return it as a float."""
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class StageMetrics:
    rho: float
    wait_time: float
    sojourn_time: float

    @property
    def service_time(self) -> float:
        return self.sojourn_time - self.wait_time

    @property
    def near_saturation(self) -> bool:
        return self.rho > NEAR_SATURATION_RHO


def utilization(lam: float, mu: float) -> float:
    return as_rate(lam, "lambda") / as_rate(mu, "mu")


def _checked(lam: float, mu: float) -> tuple[float, float]:
    lam = as_rate(lam, "lambda")
    mu = as_rate(mu, "mu")
    if lam >= mu:
        raise UnstableQueue(lam, mu)
    return lam, mu


def mm1_sojourn(lam: float, mu: float) -> StageMetrics:
    """Mean time in an M/M/1 system, ``1/(mu - lam)``."""
    lam, mu = _checked(lam, mu)
    sojourn = 1.0 / (mu - lam)
    wait = lam / (mu * (mu - lam))
    return StageMetrics(rho=lam / mu, wait_time=wait, sojourn_time=sojourn)


def md1_sojourn(lam: float, mu: float) -> StageMetrics:
    """Mean time in an M/D/1 system.

    The Pollaczek-Khinchine wait for constant service ``1/mu`` is
    ``lam / (2 mu (mu - lam))``, i.e. half the M/M/1 wait.
    """
    lam, mu = _checked(lam, mu)
    wait = lam / (2.0 * mu * (mu - lam))
    return StageMetrics(rho=lam / mu, wait_time=wait, sojourn_time=1.0 / mu + wait)


def sojourn(discipline: Discipline | str, lam: float, mu: float) -> StageMetrics:
    if Discipline.parse(discipline) is Discipline.EXPONENTIAL:
        return mm1_sojourn(lam, mu)
    return md1_sojourn(lam, mu)
