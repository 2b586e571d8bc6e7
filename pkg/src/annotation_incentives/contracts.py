"""Binary and linear payment contracts and their pass/payout evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .behavior_models import BehaviorModel, MonitoringDataset, score_variance
from .estimation import MleResult, simulate_mle_batch


class Method(Enum):
    """Evaluation route for probabilistic contract quantities."""

    ANALYTIC_NORMAL = "analytic_normal"
    MONTE_CARLO = "monte_carlo"
    SCORE_MC = "score_mc"


@dataclass(frozen=True)
class BinaryContract:
    """Threshold test contract: bonus wb on top of w0 when theta_hat >= tau."""

    tau: float
    w0: float
    wb: float
    wage_floor: float
    wage_cap: float

    def __post_init__(self):
        # wb = 0 is admitted so the no-incentive degenerate cases stay
        # representable; calibration rejects it.
        if self.wb < 0:
            raise ValueError(f"bonus must be >= 0, got {self.wb}")
        if self.w0 < self.wage_floor:
            raise ValueError(
                f"base wage {self.w0} below wage floor {self.wage_floor}")
        if self.w0 + self.wb > self.wage_cap:
            raise ValueError(
                f"w0 + wb = {self.w0 + self.wb} exceeds wage cap {self.wage_cap}")

    def wage(self, psi: int) -> float:
        return self.w0 + self.wb * psi


@dataclass(frozen=True)
class TestOutcome:
    psi: int
    wage: float


@dataclass(frozen=True)
class LinearPayout:
    wage: float
    clamped: bool
    extrapolated: bool


@dataclass(frozen=True)
class LinearContract:
    """Per-item piecewise-linear payment rule, averaged over the dataset.

    ``knots``/``values`` describe the payment map; payloads outside the knot
    range earn the nearest knot's value (flagged on evaluation).
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]
    wage_floor: float
    wage_cap: float

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if k.size < 2 or k.size != v.size:
            raise ValueError("need matching knot/value lists with >= 2 points")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(v < self.wage_floor) or np.any(v > self.wage_cap):
            raise ValueError("knot payments must lie within the wage bounds")

    def payment(self, payload) -> np.ndarray:
        return np.interp(np.asarray(payload, dtype=np.float64),
                         self.knots, self.values)


def evaluate_binary(c: BinaryContract, mle_result: MleResult) -> TestOutcome:
    """Run the threshold test; theta_hat == tau passes (closed accept set)."""
    psi = 1 if mle_result.theta_hat >= c.tau else 0
    return TestOutcome(psi=psi, wage=c.wage(psi))


def evaluate_linear(c: LinearContract, ds: MonitoringDataset) -> LinearPayout:
    """Average per-item payment, clamped to the wage bounds."""
    payload = ds.values
    pay = c.payment(payload)
    raw = float(pay.mean())
    wage = min(max(raw, c.wage_floor), c.wage_cap)
    extrapolated = bool(np.any(payload < c.knots[0]) or np.any(payload > c.knots[-1]))
    return LinearPayout(wage=wage, clamped=wage != raw, extrapolated=extrapolated)


def analytic_pass_probability(model: BehaviorModel, theta: float,
                              c: BinaryContract, n: int) -> float:
    """CLT plug-in Phi(sqrt(n V(theta)) (theta - tau)); exact for the Gaussian family."""
    v = score_variance(model, theta)
    return float(ndtr(math.sqrt(n * v) * (theta - c.tau)))


def pass_probability(model: BehaviorModel, theta: float, c: BinaryContract,
                     n: int, method: Method = Method.ANALYTIC_NORMAL,
                     reps: int = 0, seed: int = 0) -> tuple[float, float]:
    """P(test passes) under action theta, with its standard error.

    ANALYTIC_NORMAL is the normal plug-in (exact for gaussian_sft, a CLT
    approximation otherwise, std_err 0).  MONTE_CARLO simulates datasets,
    runs the MLE on each, and reports the binomial standard error.
    """
    model.domain.require(theta)
    model.domain.require(c.tau, "tau")
    if method is Method.ANALYTIC_NORMAL:
        return analytic_pass_probability(model, theta, c, n), 0.0
    if method is not Method.MONTE_CARLO:
        raise ValueError(f"unsupported method {method} for pass_probability")
    if reps < 1000:
        raise ValueError(f"MONTE_CARLO needs reps >= 1000, got {reps}")
    theta_hat, _ = simulate_mle_batch(model, theta, n, reps, seed)
    p = float(np.mean(theta_hat >= c.tau))
    return p, math.sqrt(p * (1.0 - p) / reps)
