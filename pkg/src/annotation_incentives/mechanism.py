"""First-best benchmark, contract calibration, and rate-verification sweeps.

Calibration finds the binary contract under which the agent's best
response equals the first-best action theta*: the threshold comes from
inverting the normal-form first-order condition (with the utility gap in
place of the raw bonus) and is refined by bisection; the base wage then
binds the participation constraint.  Rate sweeps tabulate how the test
variance and the first-best/second-best gap shrink with the number of
golden questions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr
from scipy.stats import binom

from .agent import (
    AgentSpec,
    BestResponse,
    PrincipalSpec,
    golden_section_max,
    best_response,
)
from .behavior_models import (
    GAUSSIAN_SFT,
    BehaviorModel,
    ThetaDomain,
    score_variance,
)
from .contracts import BinaryContract, LinearContract, Method
from .estimation import loglog_slope
from .seeding import derive_seed

_SQRT_2PI = math.sqrt(2.0 * math.pi)

FIRST_BEST_TOL = 1e-8
CALIBRATION_THETA_TOL = 1e-4
MIN_CALIBRATION_N = 16


class ConfigurationError(ValueError):
    """Specification parameters violate a regularity assumption."""


class CalibrationError(RuntimeError):
    """No contract in the searched family achieves the target action."""


@dataclass(frozen=True)
class FirstBest:
    theta_star: float
    wage_star: float
    value: float


@dataclass(frozen=True)
class CalibratedMechanism:
    contract: BinaryContract
    theta_a: float
    p_pass: float
    var_psi: float
    expected_wage: float
    second_best_value: float
    gap: float
    audit_theta_a: float | None = None
    audit_jitter: float | None = None


@dataclass(frozen=True)
class RateSweepRow:
    n: int
    var_psi: float
    var_scaled: float
    gap: float
    gap_scaled: float
    theta_a: float
    tau: float
    p_pass: float
    expected_wage: float


@dataclass(frozen=True)
class RateSweepResult:
    rows: list[RateSweepRow]
    var_slope: float
    gap_slope: float

    @property
    def var_scaled_band(self) -> float:
        vals = [r.var_scaled for r in self.rows]
        return max(vals) / min(vals)


def solve_first_best(agent: AgentSpec, principal: PrincipalSpec,
                     domain: ThetaDomain) -> FirstBest:
    """Maximize mu(theta) - G^-1(U0 + E(theta)); the IR constraint binds."""

    def value(theta: float) -> float:
        try:
            wage = float(agent.ga_inv(agent.u0 + float(agent.effort(theta))))
        except ValueError as exc:
            raise ConfigurationError(
                "Assumption 1(c): wage range cannot compensate the required "
                f"effort at theta={theta}: {exc}") from exc
        return float(principal.mu(theta)) - wage

    theta_star, v_star = golden_section_max(value, domain.lo, domain.hi, FIRST_BEST_TOL)
    margin = 1e-5 * domain.width
    if theta_star - domain.lo < margin or domain.hi - theta_star < margin:
        raise ConfigurationError(
            "Assumption 1(a): first-best action lands on the domain boundary "
            f"(theta*={theta_star:.6g}); adjust the data-utility or effort parameters")
    wage_star = float(agent.ga_inv(agent.u0 + float(agent.effort(theta_star))))
    return FirstBest(theta_star=theta_star, wage_star=wage_star, value=v_star)


def _analytic_pass(model: BehaviorModel, theta: float, tau: float, n: int) -> float:
    v = score_variance(model, theta)
    return float(ndtr(math.sqrt(n * v) * (theta - tau)))


def _ir_base_wage(agent: AgentSpec, p: float, wb: float, target: float,
                  wage_floor: float, wage_cap: float) -> float:
    """Base wage making p*G(w0+wb) + (1-p)*G(w0) equal the IR target."""

    def residual(w0: float) -> float:
        return (p * float(agent.ga(w0 + wb)) + (1.0 - p) * float(agent.ga(w0))
                - target)

    lo, hi = wage_floor, wage_cap - wb
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo > 0.0 or r_hi < 0.0:
        raise ConfigurationError(
            "Assumption 1(c): the wage range is not rich enough to bind the "
            f"participation constraint (residuals {r_lo:.3g} @floor, {r_hi:.3g} @cap)")
    if r_lo == 0.0:
        return lo
    return float(brentq(residual, lo, hi, xtol=1e-13, rtol=8.9e-16))


def _calibrate_tau(agent: AgentSpec, model: BehaviorModel, n: int, wb: float,
                   w0: float, theta_star: float, tau0: float, delta0: float,
                   wage_floor: float, wage_cap: float) -> tuple[float, BestResponse]:
    """Bisect the threshold until the best response hits theta*.

    The best response moves up with tau near the solution; if the initial
    bracket misses a sign change it is widened, falling back over the whole
    admissible threshold range.
    """
    lo_dom, hi_dom = model.domain.lo, model.domain.hi

    def response(tau: float) -> BestResponse:
        contract = BinaryContract(tau, w0, wb, wage_floor, wage_cap)
        return best_response(agent, model, contract, n)

    span = max(delta0, 1e-3)
    a = max(lo_dom, tau0 - 2.0 * span)
    b = min(hi_dom, tau0 + span)
    h_a = response(a).theta_a - theta_star
    h_b = response(b).theta_a - theta_star
    tries = 0
    while h_a > 0.0 and a > lo_dom and tries < 60:
        a = max(lo_dom, a - span)
        h_a = response(a).theta_a - theta_star
        tries += 1
    while h_b < 0.0 and b < hi_dom and tries < 60:
        b = min(hi_dom, b + span)
        h_b = response(b).theta_a - theta_star
        tries += 1
    if h_a > 0.0 or h_b < 0.0:
        # monotonicity failed locally: scan for the smallest miss instead
        taus = np.linspace(a, b, 129)
        misses = [abs(response(float(t)).theta_a - theta_star) for t in taus]
        tau = float(taus[int(np.argmin(misses))])
        return tau, response(tau)
    while b - a > 1e-9:
        mid = 0.5 * (a + b)
        if response(mid).theta_a - theta_star <= 0.0:
            a = mid
        else:
            b = mid
    tau = 0.5 * (a + b)
    return tau, response(tau)


def calibrate_binary(agent: AgentSpec, principal: PrincipalSpec,
                     model: BehaviorModel, n: int, wb: float,
                     reps: int = 0, seed: int = 0, *,
                     wage_floor: float, wage_cap: float,
                     first_best: FirstBest | None = None) -> CalibratedMechanism:
    """Calibrate (tau, w0) so the best response is theta* and the IR binds.

    The reported pass probability, wage, and values are evaluated at the
    target action theta*; ``theta_a`` records the solved best response.
    When ``reps`` is positive, three fresh-seeded Monte Carlo best
    responses audit the calibration and their spread is reported.
    """
    if wb <= 0.0:
        raise CalibrationError(
            "a zero bonus cannot incentivize any action above the effort minimum")
    if n < MIN_CALIBRATION_N:
        raise CalibrationError(
            f"n={n} below the minimum {MIN_CALIBRATION_N}: the normal "
            "approximation behind the threshold initialization is unreliable")
    fb = first_best or solve_first_best(agent, principal, model.domain)
    theta_star = fb.theta_star
    v_star = score_variance(model, theta_star)
    e_prime = float(agent.effort_prime(theta_star))
    target = agent.u0 + float(agent.effort(theta_star))

    w0 = max(wage_floor,
             min(float(agent.ga_inv(target)) - wb, wage_cap - wb))
    tau, br = 0.0, None
    for _ in range(60):
        dg = float(agent.ga(w0 + wb)) - float(agent.ga(w0))
        arg = (0.5 * math.log(n * v_star) + math.log(dg)
               - 0.5 * math.log(2.0 * math.pi) - math.log(e_prime))
        if arg <= 0.0:
            raise CalibrationError(
                f"monitoring too weak at n={n}: the first-order condition has "
                "no interior solution for this configuration")
        delta0 = math.sqrt(2.0 * arg / (n * v_star))
        tau0 = theta_star - delta0
        if tau0 <= model.domain.lo:
            raise CalibrationError(
                f"calibrated threshold {tau0:.4g} leaves the action domain at n={n}")
        tau, br = _calibrate_tau(agent, model, n, wb, w0, theta_star, tau0,
                                 delta0, wage_floor, wage_cap)
        p_star = _analytic_pass(model, theta_star, tau, n)
        w0_new = _ir_base_wage(agent, p_star, wb, target, wage_floor, wage_cap)
        if abs(w0_new - w0) < 1e-11:
            w0 = w0_new
            break
        w0 = w0_new
    contract = BinaryContract(tau, w0, wb, wage_floor, wage_cap)
    br = best_response(agent, model, contract, n)
    if abs(br.theta_a - theta_star) > CALIBRATION_THETA_TOL:
        raise CalibrationError(
            f"calibration missed the target action: |theta_a - theta*| = "
            f"{abs(br.theta_a - theta_star):.3g} > {CALIBRATION_THETA_TOL}")
    p_pass = _analytic_pass(model, theta_star, tau, n)
    expected_wage = w0 + wb * p_pass
    second_best_value = float(principal.mu(theta_star)) - expected_wage
    audit_theta = None
    audit_jitter = None
    if reps > 0:
        audits = []
        for k in range(3):
            key = derive_seed(seed, f"calibration_audit_n{n}", k)
            audits.append(best_response(agent, model, contract, n, reps=reps,
                                        seed=key, method=Method.MONTE_CARLO).theta_a)
        audit_theta = float(np.mean(audits))
        audit_jitter = max(float(np.std(audits, ddof=1)), 1e-6)
    return CalibratedMechanism(
        contract=contract,
        theta_a=br.theta_a,
        p_pass=p_pass,
        var_psi=p_pass * (1.0 - p_pass),
        expected_wage=expected_wage,
        second_best_value=second_best_value,
        gap=fb.value - second_best_value,
        audit_theta_a=audit_theta,
        audit_jitter=audit_jitter,
    )


def _require_sweep_ns(ns) -> list[int]:
    ns = [int(n) for n in ns]
    if len(ns) < 6:
        raise ValueError("rate sweeps need at least 6 sample sizes")
    if min(ns) < 64:
        raise ValueError("rate sweeps need min(ns) >= 64")
    ratios = {ns[i + 1] / ns[i] for i in range(len(ns) - 1)}
    if len({round(r, 9) for r in ratios}) != 1:
        raise ValueError("rate sweep sample sizes must be geometric")
    return ns


def rate_sweep(agent: AgentSpec, principal: PrincipalSpec, model: BehaviorModel,
               ns, wb: float, reps: int = 0, seed: int = 0, *,
               wage_floor: float, wage_cap: float,
               audit_max_n: int = 4096) -> RateSweepResult:
    """Calibrate per n and tabulate Var(Psi) and the gap with their scalings.

    Monte Carlo audits (reps > 0) run on every Gaussian point but only up
    to ``audit_max_n`` for binary models, whose per-action re-simulation
    cost grows with n.
    """
    ns = _require_sweep_ns(ns)
    fb = solve_first_best(agent, principal, model.domain)
    rows = []
    for n in ns:
        audit_reps = reps
        if model.kind != GAUSSIAN_SFT and n > audit_max_n:
            audit_reps = 0
        mech = calibrate_binary(agent, principal, model, n, wb, reps=audit_reps,
                                seed=seed, wage_floor=wage_floor,
                                wage_cap=wage_cap, first_best=fb)
        scale = math.sqrt(n * math.log(n))
        rows.append(RateSweepRow(
            n=n,
            var_psi=mech.var_psi,
            var_scaled=mech.var_psi * scale,
            gap=mech.gap,
            gap_scaled=mech.gap * scale,
            theta_a=mech.theta_a,
            tau=mech.contract.tau,
            p_pass=mech.p_pass,
            expected_wage=mech.expected_wage,
        ))
    xs = [math.sqrt(n * math.log(n)) for n in ns]
    var_slope = loglog_slope(xs, [r.var_psi for r in rows])
    gap_slope = loglog_slope(xs, [r.gap for r in rows])
    return RateSweepResult(rows=rows, var_slope=var_slope, gap_slope=gap_slope)


# ---------------------------------------------------------------------------
# linear contracts (sample-average payment)
# ---------------------------------------------------------------------------

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(96)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(math.pi)


def _payment_moments(model: BehaviorModel, a: float, s: float, theta: float,
                     wage_floor: float, wage_cap: float) -> tuple[float, float]:
    """Mean and variance of the per-item payment clip(a + s*d) at action theta."""
    if model.kind == GAUSSIAN_SFT:
        d = theta + math.sqrt(2.0 * model.sigma2) * _GH_NODES
        f = np.clip(a + s * d, wage_floor, wage_cap)
        m = float(_GH_WEIGHTS @ f)
        return m, float(_GH_WEIGHTS @ (f - m) ** 2)
    p1 = float(model.weight_array @ model.label1_probability(theta))
    f0 = min(max(a, wage_floor), wage_cap)
    f1 = min(max(a + s, wage_floor), wage_cap)
    m = (1.0 - p1) * f0 + p1 * f1
    var = (1.0 - p1) * (f0 - m) ** 2 + p1 * (f1 - m) ** 2
    return m, var


def _linear_agent_utility(agent: AgentSpec, model: BehaviorModel, a: float,
                          s: float, theta: float, n: int, wage_floor: float,
                          wage_cap: float) -> float:
    """E[G(average payment)] - E(theta) under the normal approximation."""
    m, var = _payment_moments(model, a, s, theta, wage_floor, wage_cap)
    w = m + math.sqrt(2.0 * var / n) * _GH_NODES
    w = np.clip(w, wage_floor, wage_cap)
    return float(_GH_WEIGHTS @ agent.ga(w)) - float(agent.effort(theta))


def _linear_best_response(agent: AgentSpec, model: BehaviorModel, a: float,
                          s: float, n: int, wage_floor: float,
                          wage_cap: float) -> float:
    lo, hi = model.domain.lo, model.domain.hi

    def utility(theta: float) -> float:
        return _linear_agent_utility(agent, model, a, s, theta, n,
                                     wage_floor, wage_cap)

    grid = np.linspace(lo, hi, 128)
    vals = [utility(float(t)) for t in grid]
    i = int(np.argmax(vals))
    theta, _ = golden_section_max(utility, float(grid[max(i - 1, 0)]),
                           float(grid[min(i + 1, len(grid) - 1)]), 1e-7)
    return theta


def _linear_intercept_for_ir(agent: AgentSpec, model: BehaviorModel, s: float,
                             theta_star: float, n: int, target: float,
                             wage_floor: float, wage_cap: float) -> float:
    def residual(a: float) -> float:
        return (_linear_agent_utility(agent, model, a, s, theta_star, n,
                                      wage_floor, wage_cap)
                + float(agent.effort(theta_star)) - target)

    lo = wage_floor - abs(s) * 10.0 - 1.0
    hi = wage_cap
    if residual(lo) > 0.0 or residual(hi) < 0.0:
        raise ConfigurationError(
            "Assumption 1(c): linear-contract participation cannot bind "
            "within the wage bounds")
    return float(brentq(residual, lo, hi, xtol=1e-12))


@dataclass(frozen=True)
class LinearCalibration:
    contract: LinearContract
    intercept: float
    slope: float
    theta_a: float
    expected_wage: float
    value: float
    gap: float


def calibrate_linear(agent: AgentSpec, principal: PrincipalSpec,
                     model: BehaviorModel, n: int, *, wage_floor: float,
                     wage_cap: float,
                     first_best: FirstBest | None = None) -> LinearCalibration:
    """Smallest-slope sample-average contract whose best response is theta*.

    For each candidate slope the intercept binds the participation
    constraint at theta*; the slope is then driven by bisection until the
    agent's best response lands on theta*.  Binding participation pins the
    certainty-equivalent, so expected wage grows with the slope and the
    root is also the wage minimizer.
    """
    fb = first_best or solve_first_best(agent, principal, model.domain)
    theta_star = fb.theta_star
    target = agent.u0 + float(agent.effort(theta_star))

    def response_gap(s: float) -> float:
        a = _linear_intercept_for_ir(agent, model, s, theta_star, n, target,
                                     wage_floor, wage_cap)
        return (_linear_best_response(agent, model, a, s, n, wage_floor,
                                      wage_cap) - theta_star)

    s_lo, s_hi = 1e-6, 0.25
    tries = 0
    while response_gap(s_hi) < 0.0:
        s_hi *= 2.0
        tries += 1
        if tries > 24:
            raise CalibrationError(
                "no slope in the searched family reaches the target action")
    if response_gap(s_lo) > 0.0:
        raise CalibrationError("target action reached even at a negligible slope")
    s = float(brentq(response_gap, s_lo, s_hi, xtol=1e-10))
    a = _linear_intercept_for_ir(agent, model, s, theta_star, n, target,
                                 wage_floor, wage_cap)
    theta_a = _linear_best_response(agent, model, a, s, n, wage_floor, wage_cap)
    expected_wage, _ = _payment_moments(model, a, s, theta_star, wage_floor,
                                        wage_cap)
    value = float(principal.mu(theta_star)) - expected_wage
    if model.kind == GAUSSIAN_SFT:
        knot_lo = (wage_floor - a) / s
        knot_hi = (wage_cap - a) / s
        contract = LinearContract((knot_lo, knot_hi), (wage_floor, wage_cap),
                                  wage_floor, wage_cap)
    else:
        f0 = min(max(a, wage_floor), wage_cap)
        f1 = min(max(a + s, wage_floor), wage_cap)
        contract = LinearContract((0.0, 1.0), (f0, f1), wage_floor, wage_cap)
    return LinearCalibration(contract=contract, intercept=a, slope=s,
                             theta_a=theta_a, expected_wage=expected_wage,
                             value=value, gap=fb.value - value)


@dataclass(frozen=True)
class LinearSweepResult:
    rows: list[tuple[int, float]]
    gap_slope: float


def linear_rate_sweep(agent: AgentSpec, principal: PrincipalSpec,
                      model: BehaviorModel, ns, seed: int = 0, *,
                      wage_floor: float, wage_cap: float) -> LinearSweepResult:
    """Tabulate the first-best gap of calibrated linear contracts per n."""
    ns = _require_sweep_ns(ns)
    fb = solve_first_best(agent, principal, model.domain)
    rows = []
    for n in ns:
        cal = calibrate_linear(agent, principal, model, n,
                               wage_floor=wage_floor, wage_cap=wage_cap,
                               first_best=fb)
        rows.append((n, cal.gap))
    slope = loglog_slope([n for n, _ in rows], [g for _, g in rows])
    return LinearSweepResult(rows=rows, gap_slope=slope)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prop1Row:
    n: int
    dist_sq: float
    dist_sq_scaled: float
    theta_a: float
    value: float
    converged: bool


def proposition1_diagnostic(agent: AgentSpec, principal: PrincipalSpec,
                            model: BehaviorModel, ns, wb: float,
                            reps: int = 0, seed: int = 0, *,
                            wage_floor: float, wage_cap: float) -> list[Prop1Row]:
    """Unconstrained (tau, w0) second-best search; distance of its action to theta*.

    For each threshold the base wage is driven to bind participation at the
    induced best response, and the threshold maximizing the principal's
    value is located by golden section.
    """
    ns = _require_sweep_ns(ns)
    fb = solve_first_best(agent, principal, model.domain)
    theta_star = fb.theta_star
    rows = []
    for n in ns:
        ref = calibrate_binary(agent, principal, model, n, wb, seed=seed,
                               wage_floor=wage_floor, wage_cap=wage_cap,
                               first_best=fb)
        delta_ref = theta_star - ref.contract.tau

        def polish_theta(theta_a: float, tau: float, dg: float) -> float:
            # sharpen the grid+golden argmax with the analytic FOC root;
            # removes the solver's extraction noise from the recorded distance
            def foc(theta: float) -> float:
                v = score_variance(model, theta)
                x = math.sqrt(n * v) * (theta - tau)
                marginal = dg * math.sqrt(n * v) / _SQRT_2PI * math.exp(-0.5 * x * x)
                return marginal - float(agent.effort_prime(theta))

            lo = max(model.domain.lo, theta_a - 0.01)
            hi = min(model.domain.hi, theta_a + 0.01)
            if foc(lo) > 0.0 > foc(hi):
                return float(brentq(foc, lo, hi, xtol=1e-12))
            return theta_a

        def free_value(tau: float) -> tuple[float, float, float]:
            w0 = ref.contract.w0
            theta_a = theta_star
            for _ in range(40):
                contract = BinaryContract(tau, w0, wb, wage_floor, wage_cap)
                theta_a = best_response(agent, model, contract, n).theta_a
                dg = float(agent.ga(w0 + wb)) - float(agent.ga(w0))
                theta_a = polish_theta(theta_a, tau, dg)
                p = _analytic_pass(model, theta_a, tau, n)
                target = agent.u0 + float(agent.effort(theta_a))
                w0_new = _ir_base_wage(agent, p, wb, target, wage_floor, wage_cap)
                if abs(w0_new - w0) < 1e-11:
                    w0 = w0_new
                    break
                w0 = w0_new
            p = _analytic_pass(model, theta_a, tau, n)
            return float(principal.mu(theta_a)) - (w0 + wb * p), theta_a, w0

        lo_tau = max(model.domain.lo, ref.contract.tau - 2.0 * delta_ref)
        hi_tau = min(model.domain.hi, ref.contract.tau + 1.5 * delta_ref)
        converged = True
        try:
            tau_opt, _ = golden_section_max(lambda t: free_value(t)[0], lo_tau, hi_tau,
                                     max(1e-7, 1e-4 * delta_ref))
            value, theta_a, _ = free_value(tau_opt)
        except (ConfigurationError, CalibrationError):
            converged = False
            value, theta_a = ref.second_best_value, ref.theta_a
        dist_sq = (theta_a - theta_star) ** 2
        rows.append(Prop1Row(
            n=n,
            dist_sq=dist_sq,
            dist_sq_scaled=dist_sq * math.sqrt(n * math.log(n)),
            theta_a=theta_a,
            value=value,
            converged=converged,
        ))
    return rows


def clt_diagnostic(model: BehaviorModel, theta: float, ns, reps: int,
                   seed: int) -> list[tuple[int, float]]:
    """Kolmogorov-Smirnov distance of the normalized score sum to N(0, 1)."""
    from .estimation import simulate_mle_batch

    model.domain.require(theta)
    rows = []
    for i, n in enumerate(ns):
        n = int(n)
        key = derive_seed(seed, "clt_diagnostic", i)
        _, nz = simulate_mle_batch(model, theta, n, reps, key)
        z = np.sort(nz / math.sqrt(n * score_variance(model, theta)))
        cdf = ndtr(z)
        k = np.arange(1, reps + 1, dtype=np.float64)
        ks = float(max(np.max(k / reps - cdf), np.max(cdf - (k - 1.0) / reps)))
        rows.append((n, ks))
    return rows


def exponential_contrast(model: BehaviorModel, theta: float, ns,
                         offset: float = 0.2) -> list[tuple[int, float, float]]:
    """Exact fail probabilities for a frozen threshold at theta - offset.

    With the action held fixed, the test fails only on a large deviation,
    so ln P(fail) falls linearly in n -- the classical regime the
    strategic sweep escapes.  Rows are ``(n, p_fail, ln_p_fail)``.
    """
    model.domain.require(theta)
    tau = theta - offset
    model.domain.require(tau, "frozen tau")
    rows = []
    for n in ns:
        n = int(n)
        if model.kind == GAUSSIAN_SFT:
            x = math.sqrt(n / model.sigma2) * (tau - theta)
            ln_p = float(log_ndtr(x))
        else:
            if len(model.contexts) != 1:
                raise NotImplementedError(
                    "exact tail contrast supports single-context binary models")
            c = model.contexts[0]
            p1 = float(model.label1_probability(theta, c)[0])
            # fail iff the score sum at tau is negative: k*s1 + (n-k)*s0 < 0
            p1_tau = float(model.label1_probability(tau, c)[0])
            if model.kind_code == 0:
                s1 = (c - 0.5) / p1_tau
                s0 = -(c - 0.5) / (1.0 - p1_tau)
            else:
                s1 = c * (1.0 - p1_tau)
                s0 = -c * p1_tau
            k_min = math.ceil(n * (-s0) / (s1 - s0) - 1e-12)
            ln_p = float(binom.logcdf(k_min - 1, n, p1))
        rows.append((n, math.exp(ln_p), ln_p))
    return rows
