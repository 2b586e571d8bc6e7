"""Maximum-likelihood estimation over monitoring datasets.

The mean log-likelihood is strongly concave for every shipped family, so
its gradient -- the score average Z(theta) -- is strictly decreasing and
the MLE is the unique zero of Z, found by bisection, or the better
endpoint when Z keeps one sign on the whole domain.

All dataset reductions go through order-independent sufficient statistics
(sorted values / grouped label counts), so permuting the items of a
dataset leaves every estimate bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .behavior_models import (
    GAUSSIAN_SFT,
    LATENT_FACTOR,
    BehaviorModel,
    MonitoringDataset,
)
from .seeding import derive_seed

MLE_THETA_TOL = 1e-10


class EstimationError(RuntimeError):
    """The likelihood is degenerate on the whole action domain."""


@dataclass(frozen=True)
class MleResult:
    theta_hat: float
    boundary_hit: bool
    objective: float
    score_at_hat: float


@dataclass(frozen=True)
class _SuffStats:
    """Order-independent reduction of a dataset.

    Gaussian: total of the sorted values.  Binary: per-(context, label)
    item counts in sorted context order.
    """

    n: int
    gaussian_sum: float = 0.0
    gaussian_sumsq: float = 0.0
    ctx: np.ndarray | None = None
    cnt1: np.ndarray | None = None
    cnt0: np.ndarray | None = None


def _suffstats(ds: MonitoringDataset) -> _SuffStats:
    n = len(ds)
    if ds.model.kind == GAUSSIAN_SFT:
        v = np.sort(ds.values)
        return _SuffStats(n, gaussian_sum=float(v.sum()),
                          gaussian_sumsq=float((v * v).sum()))
    ctx = np.unique(ds.contexts)
    cnt1 = np.empty(ctx.size, dtype=np.int64)
    cnt0 = np.empty(ctx.size, dtype=np.int64)
    for i, c in enumerate(ctx):
        here = ds.contexts == c
        cnt1[i] = int(np.sum(here & (ds.values == 1.0)))
        cnt0[i] = int(np.sum(here) - cnt1[i])
    return _SuffStats(n, ctx=ctx, cnt1=cnt1, cnt0=cnt0)


def _z_from_stats(model: BehaviorModel, st: _SuffStats, theta: float) -> float:
    if model.kind == GAUSSIAN_SFT:
        return (st.gaussian_sum / st.n - theta) / model.sigma2
    p1 = np.asarray([float(model.label1_probability(theta, c)[0]) for c in st.ctx])
    if model.kind == LATENT_FACTOR:
        grad = st.ctx - 0.5
        with np.errstate(divide="ignore"):
            s1 = np.where(p1 > 0, grad / p1, np.inf * np.sign(grad))
            s0 = np.where(p1 < 1, -grad / (1.0 - p1), -np.inf * np.sign(grad))
    else:
        s1 = st.ctx * (1.0 - p1)
        s0 = -st.ctx * p1
    total = 0.0
    for i in range(st.ctx.size):
        if st.cnt1[i] > 0:
            total += st.cnt1[i] * float(s1[i])
        if st.cnt0[i] > 0:
            total += st.cnt0[i] * float(s0[i])
    return total / st.n


def _objective_from_stats(model: BehaviorModel, st: _SuffStats, theta: float) -> float:
    """Mean log-likelihood M(theta) from sufficient statistics."""
    if model.kind == GAUSSIAN_SFT:
        s2 = model.sigma2
        mean_sq = (st.gaussian_sumsq - 2.0 * theta * st.gaussian_sum) / st.n + theta * theta
        return -0.5 * math.log(2.0 * math.pi * s2) - mean_sq / (2.0 * s2)
    total = 0.0
    for i in range(st.ctx.size):
        p1 = float(model.label1_probability(theta, float(st.ctx[i]))[0])
        if st.cnt1[i] > 0:
            total += st.cnt1[i] * (math.log(p1) if p1 > 0 else -math.inf)
        if st.cnt0[i] > 0:
            total += st.cnt0[i] * (math.log(1.0 - p1) if p1 < 1 else -math.inf)
    return total / st.n


def score_average(ds: MonitoringDataset, theta: float) -> float:
    """Z(theta): dataset mean of per-item scores, strictly decreasing."""
    ds.model.domain.require(theta)
    return _z_from_stats(ds.model, _suffstats(ds), theta)


def mle(ds: MonitoringDataset) -> MleResult:
    """Unique maximizer of the mean log-likelihood on the action domain.

    Interior optima are the bisection root of Z(theta) to 1e-10; when Z
    keeps one sign the better endpoint is returned with ``boundary_hit``
    set.  A flat likelihood resolves to the lower endpoint.
    """
    model = ds.model
    st = _suffstats(ds)
    lo, hi = model.domain.lo, model.domain.hi
    z_lo = _z_from_stats(model, st, lo)
    z_hi = _z_from_stats(model, st, hi)
    if z_lo <= 0.0:
        theta_hat, boundary = lo, z_lo < 0.0
    elif z_hi >= 0.0:
        theta_hat, boundary = hi, z_hi > 0.0
    else:
        a, b = lo, hi
        while b - a > MLE_THETA_TOL:
            mid = 0.5 * (a + b)
            if _z_from_stats(model, st, mid) >= 0.0:
                a = mid
            else:
                b = mid
        theta_hat, boundary = 0.5 * (a + b), False
    objective = _objective_from_stats(model, st, theta_hat)
    if objective == -math.inf:
        raise EstimationError("likelihood degenerate: objective is -inf at the optimum")
    return MleResult(
        theta_hat=theta_hat,
        boundary_hit=boundary,
        objective=objective,
        score_at_hat=_z_from_stats(model, st, theta_hat),
    )


def simulate_mle_batch(model: BehaviorModel, theta: float, n: int, reps: int,
                       seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``reps`` datasets at action theta and estimate each.

    Returns ``(theta_hat, nz)`` where ``nz[r]`` is n * Z_r(theta), the
    dataset score sum at the generating action (the log-trick factor).
    """
    model.domain.require(theta)
    lo, hi = model.domain.lo, model.domain.hi
    if model.kind == GAUSSIAN_SFT:
        sigma = math.sqrt(model.sigma2)
        noise = kernels.gaussian_mean_noise(n, reps, seed)
        dbar = theta + sigma * noise
        theta_hat = np.clip(dbar, lo, hi)
        nz = n * noise / sigma
        return theta_hat, nz
    cnt, suc = kernels.binary_sample_stats(
        model.kind_code, model.context_array, model.weight_array, theta, n, reps, seed)
    theta_hat = kernels.binary_mle_batch(
        model.kind_code, model.context_array, lo, hi, cnt, suc, MLE_THETA_TOL)
    nz = kernels.binary_nz_at(model.kind_code, model.context_array, cnt, suc, theta)
    return theta_hat, nz


def mle_rmse_sweep(model: BehaviorModel, theta: float, ns, reps: int,
                   seed: int) -> list[tuple[int, float]]:
    """Monte Carlo RMSE of the MLE about theta for each sample size."""
    if reps < 100:
        raise ValueError(f"need reps >= 100, got {reps}")
    rows = []
    for i, n in enumerate(ns):
        key = derive_seed(seed, "mle_rmse_sweep", i)
        theta_hat, _ = simulate_mle_batch(model, theta, int(n), reps, key)
        rmse = float(np.sqrt(np.mean((theta_hat - theta) ** 2)))
        rows.append((int(n), rmse))
    return rows


def loglog_slope(xs, ys) -> float:
    """OLS slope of log(y) on log(x)."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    return float(np.polyfit(lx, ly, 1)[0])
