"""Agent and principal utility specifications and the agent's best response.

The agent chooses its commitment to maximize expected utility
``p_pass * G(w0 + wb) + (1 - p_pass) * G(w0) - E(theta)``.  The solver is
a coarse grid plus golden-section refinement; the first-order-condition
residual is reported as a diagnostic only.  Monte Carlo evaluation uses
common random numbers across candidate actions (the same dataset seeds),
which makes the simulated objective smooth in theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from . import kernels
from .behavior_models import GAUSSIAN_SFT, BehaviorModel, score_variance
from .contracts import BinaryContract, Method, pass_probability
from .estimation import simulate_mle_batch

CARA = "cara"
SQRT = "sqrt"

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

BEST_RESPONSE_GRID = 256
BEST_RESPONSE_TOL = 1e-6


class SolverMethod(Enum):
    GRID_REFINE = "grid_refine"
    FOC_ROOT = "foc_root"


@dataclass(frozen=True)
class AgentSpec:
    """Risk-averse monetary utility, convex quadratic effort, outside option.

    Effort is ``e0 + e1 * (theta - theta_min)**2`` with ``theta_min`` the
    lower end of the action domain, so effort is minimized by shirking.
    """

    ga_kind: str = CARA
    rho: float = 1.0
    w_min: float = 0.0
    e0: float = 0.0
    e1: float = 1.0
    u0: float = 0.0
    theta_min: float = 0.0

    def __post_init__(self):
        if self.ga_kind not in (CARA, SQRT):
            raise ValueError(f"unknown monetary utility kind {self.ga_kind!r}")
        if self.ga_kind == CARA and self.rho <= 0:
            raise ValueError("CARA risk aversion must be positive")
        if self.e1 <= 0:
            raise ValueError("effort curvature e1 must be positive")

    def ga(self, w):
        """Monetary utility G_a(w), strictly increasing and concave."""
        if self.ga_kind == CARA:
            return -np.expm1(-self.rho * np.asarray(w, dtype=np.float64)) / self.rho
        return np.sqrt(np.asarray(w, dtype=np.float64) - self.w_min)

    def ga_inv(self, u):
        """Inverse of G_a; raises when u is outside the attainable range."""
        u = np.asarray(u, dtype=np.float64)
        if self.ga_kind == CARA:
            arg = -self.rho * u
            if np.any(arg <= -1.0):
                raise ValueError(
                    f"utility {u} unreachable for CARA(rho={self.rho})")
            return -np.log1p(arg) / self.rho
        if np.any(u < 0):
            raise ValueError("sqrt utility is nonnegative")
        return u * u + self.w_min

    def effort(self, theta):
        d = np.asarray(theta, dtype=np.float64) - self.theta_min
        return self.e0 + self.e1 * d * d

    def effort_prime(self, theta):
        return 2.0 * self.e1 * (np.asarray(theta, dtype=np.float64) - self.theta_min)


@dataclass(frozen=True)
class PrincipalSpec:
    """Concave quadratic data utility mu(theta) = m1*theta - m2*theta^2."""

    m1: float
    m2: float

    def __post_init__(self):
        if self.m2 < 0:
            raise ValueError("m2 must be >= 0 for a concave data utility")

    def mu(self, theta):
        t = np.asarray(theta, dtype=np.float64)
        return self.m1 * t - self.m2 * t * t

    def mu_prime(self, theta):
        return self.m1 - 2.0 * self.m2 * np.asarray(theta, dtype=np.float64)


@dataclass(frozen=True)
class BestResponse:
    theta_a: float
    expected_utility: float
    foc_residual: float
    method: SolverMethod


def validate_assumptions(agent: AgentSpec, principal: PrincipalSpec,
                         model: BehaviorModel, wage_floor: float,
                         wage_cap: float) -> list[str]:
    """Names of violated regularity clauses (empty when the config is sound)."""
    domain = model.domain
    violations: list[str] = []
    if agent.theta_min != domain.lo:
        violations.append("Assumption 1(a): effort minimum must sit at the domain floor")
    if agent.ga_kind == SQRT and agent.w_min >= wage_floor:
        violations.append("Assumption 1(a): sqrt utility needs w_min < wage_floor")
    # strong convexity of the compensation cost G^-1(E(theta) + u) on a grid
    thetas = np.linspace(domain.lo, domain.hi, 65)
    try:
        for u in np.linspace(0.0, agent.u0 + 0.1, 4):
            cost = agent.ga_inv(agent.effort(thetas) + u)
            if np.any(np.diff(cost, 2) <= 0):
                violations.append(
                    "Assumption 1(a): compensation cost not strongly convex in theta")
                break
    except ValueError:
        violations.append(
            "Assumption 1(c): wage range cannot express the required utility levels")
    if principal.m2 < 0:
        violations.append("Assumption 1(b): data utility must be concave")
    # wage richness: E(Theta) + U0 inside the interior of G([floor, cap])
    e_lo = float(agent.effort(domain.lo))
    e_hi = float(np.max(agent.effort(thetas)))
    g_lo = float(agent.ga(wage_floor))
    g_hi = float(agent.ga(wage_cap))
    if not (g_lo < e_lo + agent.u0 and e_hi + agent.u0 < g_hi):
        violations.append(
            "Assumption 1(c): wage range not rich enough to compensate every effort level")
    for theta in np.linspace(domain.lo, domain.hi, 9):
        if score_variance(model, float(theta)) <= 0:
            violations.append("Assumption 2(a): score variance must be positive")
            break
    return violations


def expected_agent_utility(agent: AgentSpec, model: BehaviorModel,
                           c: BinaryContract, theta: float, n: int,
                           method: Method = Method.ANALYTIC_NORMAL,
                           reps: int = 0, seed: int = 0) -> float:
    """E[G_a(wage)] - E(theta) under the binary contract at action theta."""
    p, _ = pass_probability(model, theta, c, n, method=method, reps=reps, seed=seed)
    g_hi = float(agent.ga(c.w0 + c.wb))
    g_lo = float(agent.ga(c.w0))
    return p * g_hi + (1.0 - p) * g_lo - float(agent.effort(theta))


def analytic_incentive(model: BehaviorModel, c: BinaryContract, theta: float,
                       n: int, scale: float | None = None) -> float:
    """Closed-form marginal expected wage wb * sqrt(nV)/sqrt(2pi) * exp(-nV(theta-tau)^2/2).

    ``scale`` replaces wb (the risk-averse best response substitutes the
    utility gap for the raw bonus).
    """
    v = score_variance(model, theta)
    s = c.wb if scale is None else scale
    x = math.sqrt(n * v) * (theta - c.tau)
    return s * math.sqrt(n * v) / _SQRT_2PI * math.exp(-0.5 * x * x)


def incentive(model: BehaviorModel, c: BinaryContract, theta: float, n: int,
              method: Method = Method.ANALYTIC_NORMAL, reps: int = 0,
              seed: int = 0) -> tuple[float, float]:
    """Marginal expected wage d/dtheta E[wage], with Monte Carlo std error.

    SCORE_MC estimates ``wb * E[1{pass} * n * Z(theta)]`` (the score-function
    form of the derivative); ANALYTIC_NORMAL is the normal closed form.
    """
    if not (model.domain.lo < theta < model.domain.hi):
        raise ValueError(f"theta={theta} must be interior to the action domain")
    if method is Method.ANALYTIC_NORMAL:
        return analytic_incentive(model, c, theta, n), 0.0
    if method is not Method.SCORE_MC:
        raise ValueError(f"unsupported method {method} for incentive")
    if reps < 2:
        raise ValueError("SCORE_MC needs reps >= 2")
    theta_hat, nz = simulate_mle_batch(model, theta, n, reps, seed)
    terms = c.wb * nz * (theta_hat >= c.tau)
    value = float(terms.mean())
    std_err = float(terms.std(ddof=1) / math.sqrt(reps))
    return value, std_err


def golden_section_max(fn, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Golden-section maximization of a unimodal scalar function."""
    a, b = lo, hi
    c1 = b - _INVPHI * (b - a)
    c2 = a + _INVPHI * (b - a)
    f1, f2 = fn(c1), fn(c2)
    while b - a > tol:
        if f1 >= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - _INVPHI * (b - a)
            f1 = fn(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + _INVPHI * (b - a)
            f2 = fn(c2)
    x = 0.5 * (a + b)
    return x, fn(x)


def _mc_pass_curve(model: BehaviorModel, c: BinaryContract, n: int,
                   reps: int, seed: int):
    """Pass-fraction evaluator theta -> p_hat with common random numbers.

    Sharing the dataset seeds across actions couples the simulated tests,
    so the estimated pass curve is monotone and smooth in theta.
    """
    if model.kind == GAUSSIAN_SFT:
        sigma = math.sqrt(model.sigma2)
        noise = np.sort(kernels.gaussian_mean_noise(n, reps, seed))

        def p_hat(theta: float) -> float:
            # theta_hat >= tau iff the dataset mean clears tau (tau interior)
            x = (c.tau - theta) / sigma
            return 1.0 - np.searchsorted(noise, x, side="left") / reps

        return p_hat

    code = model.kind_code
    ctx = model.context_array
    wts = model.weight_array

    def p_hat(theta: float) -> float:
        cnt, suc = kernels.binary_sample_stats(code, ctx, wts, theta, n, reps, seed)
        # theta_hat >= tau iff the decreasing score sum is >= 0 at tau,
        # which is the reject-region test evaluated exactly
        nz_tau = kernels.binary_nz_at(code, ctx, cnt, suc, c.tau)
        return float(np.mean(nz_tau >= 0.0))

    return p_hat


def best_response(agent: AgentSpec, model: BehaviorModel, c: BinaryContract,
                  n: int, reps: int = 0, seed: int = 0,
                  method: Method = Method.ANALYTIC_NORMAL) -> BestResponse:
    """Agent's utility-maximizing action under the contract.

    Coarse 256-point grid plus golden-section refinement to 1e-6 in theta.
    The FOC residual compares the analytic marginal utility-gap incentive
    with the marginal effort; it is informational at boundary optima.
    """
    lo, hi = model.domain.lo, model.domain.hi
    g_hi = float(agent.ga(c.w0 + c.wb))
    g_lo = float(agent.ga(c.w0))
    dg = g_hi - g_lo

    if method is Method.ANALYTIC_NORMAL:
        def p_fn(theta: float) -> float:
            v = score_variance(model, theta)
            return float(ndtr(math.sqrt(n * v) * (theta - c.tau)))
    elif method is Method.MONTE_CARLO:
        if reps < 2:
            raise ValueError("MONTE_CARLO best response needs reps >= 2")
        p_fn = _mc_pass_curve(model, c, n, reps, seed)
    else:
        raise ValueError(f"unsupported method {method} for best_response")

    def utility(theta: float) -> float:
        return g_lo + dg * p_fn(theta) - float(agent.effort(theta))

    grid = np.linspace(lo, hi, BEST_RESPONSE_GRID)
    values = np.asarray([utility(float(t)) for t in grid])
    i = int(np.argmax(values))
    a = float(grid[max(i - 1, 0)])
    b = float(grid[min(i + 1, len(grid) - 1)])
    theta_a, u_a = golden_section_max(utility, a, b, BEST_RESPONSE_TOL)
    # keep the better of the refined point and the raw grid winner
    if values[i] > u_a:
        theta_a, u_a = float(grid[i]), float(values[i])
    residual = (analytic_incentive(model, c, theta_a, n, scale=dg)
                - float(agent.effort_prime(theta_a)))
    return BestResponse(theta_a=theta_a, expected_utility=u_a,
                        foc_residual=residual, method=SolverMethod.GRID_REFINE)
