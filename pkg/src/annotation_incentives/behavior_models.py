"""Annotation likelihood families: samplers, scores, curvature, KL.

Three families share one interface:

* ``latent_factor`` -- the annotator is committed with probability theta
  and labels from the per-item true preference probability p*, otherwise
  flips a fair coin.  Label-1 probability: ``theta * p* + (1 - theta)/2``.
* ``bt_temperature`` -- Bradley-Terry preference with commitment acting as
  inverse temperature on the reward gap: ``sigmoid(theta * delta_r)``.
* ``gaussian_sft`` -- response-quality scores distributed N(theta, sigma^2).

Binary families take a single context value (p* or delta_r) or a finite
mixture of them; each monitored item draws its context independently, so
datasets remain i.i.d. draws from the joint law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

GAUSSIAN_SFT = "gaussian_sft"
LATENT_FACTOR = "latent_factor"
BT_TEMPERATURE = "bt_temperature"

MODEL_KINDS = (GAUSSIAN_SFT, LATENT_FACTOR, BT_TEMPERATURE)

#: numeric floor below which a strong-concavity constant is rejected
MIN_ALPHA = 1e-3

NEG_INF = float("-inf")


class ModelValidationError(ValueError):
    """A likelihood configuration violates a regularity requirement."""


@dataclass(frozen=True)
class ThetaDomain:
    """Closed interval of admissible one-dimensional actions."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ModelValidationError("theta domain bounds must be finite")
        if not self.lo < self.hi:
            raise ModelValidationError(
                f"theta domain needs lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, theta: float) -> bool:
        return self.lo <= theta <= self.hi

    def clip(self, theta: float) -> float:
        return min(max(theta, self.lo), self.hi)

    def require(self, theta: float, what: str = "theta") -> None:
        if not self.contains(theta):
            raise ValueError(
                f"{what}={theta} outside action domain [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class CurvatureBounds:
    """Strong-concavity / smoothness constants of -log p in theta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= self.beta):
            raise ModelValidationError(
                f"need 0 < alpha <= beta, got alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class MonitoringDatum:
    """One monitored observation.

    Binary families carry a 0/1 ``value`` plus the item's context scalar
    (p* or delta_r); the Gaussian family carries a real score and no
    context.
    """

    value: float
    context: float | None = None


@dataclass(frozen=True)
class MonitoringDataset:
    """Ordered golden-question outcomes, stored as arrays for batch work."""

    model: "BehaviorModel"
    values: np.ndarray
    contexts: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.size == 0:
            raise ValueError("monitoring dataset must be non-empty")
        if self.contexts is not None:
            ctx = np.asarray(self.contexts, dtype=np.float64)
            if ctx.shape != vals.shape:
                raise ValueError("contexts must align with values")
            object.__setattr__(self, "contexts", ctx)
        if self.model.is_binary:
            if not np.all((vals == 0.0) | (vals == 1.0)):
                raise ValueError("binary-model labels must be exactly 0 or 1")
            if self.contexts is None:
                if len(self.model.contexts) != 1:
                    raise ValueError("mixture models need per-item contexts")
                object.__setattr__(
                    self, "contexts", np.full_like(vals, self.model.contexts[0]))
        else:
            if not np.all(np.isfinite(vals)):
                raise ValueError("gaussian payloads must be finite")

    def __len__(self) -> int:
        return int(self.values.size)

    def items(self) -> list[MonitoringDatum]:
        if self.contexts is None:
            return [MonitoringDatum(float(v)) for v in self.values]
        return [MonitoringDatum(float(v), float(c))
                for v, c in zip(self.values, self.contexts)]


@dataclass(frozen=True)
class BehaviorModel:
    """A parametric annotation likelihood p(d; theta) on a bounded domain."""

    kind: str
    domain: ThetaDomain
    sigma2: float | None = None
    contexts: tuple[float, ...] = field(default_factory=tuple)
    weights: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelValidationError(f"unknown model kind {self.kind!r}")
        if self.kind == GAUSSIAN_SFT:
            if self.sigma2 is None or not (self.sigma2 > 0):
                raise ModelValidationError("gaussian_sft needs sigma2 > 0")
            return
        if not (0.0 <= self.domain.lo and self.domain.hi <= 1.0):
            raise ModelValidationError(
                f"{self.kind} needs theta domain within [0, 1]")
        if not self.contexts:
            raise ModelValidationError(f"{self.kind} needs at least one context value")
        if len(self.weights) != len(self.contexts):
            raise ModelValidationError("weights must align with contexts")
        w = np.asarray(self.weights)
        if np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ModelValidationError("mixture weights must be positive and sum to 1")
        if self.kind == LATENT_FACTOR:
            for c in self.contexts:
                if not 0.0 <= c <= 1.0:
                    raise ModelValidationError(f"p_star={c} outside [0, 1]")
        else:
            for c in self.contexts:
                if not math.isfinite(c):
                    raise ModelValidationError("delta_r values must be finite")
        bounds = curvature_bounds(self)
        if bounds.alpha < MIN_ALPHA:
            raise ModelValidationError(
                f"{self.kind} configuration is not strongly log-concave enough: "
                f"empirical alpha={bounds.alpha:.3g} < {MIN_ALPHA} "
                "(Assumption on likelihood curvature)")

    # -- constructors ------------------------------------------------------

    @classmethod
    def gaussian_sft(cls, sigma2: float, lo: float, hi: float) -> "BehaviorModel":
        return cls(GAUSSIAN_SFT, ThetaDomain(lo, hi), sigma2=sigma2)

    @classmethod
    def latent_factor(cls, p_star, weights=None, lo: float = 0.0,
                      hi: float = 1.0) -> "BehaviorModel":
        ctx, wts = _as_mixture(p_star, weights)
        return cls(LATENT_FACTOR, ThetaDomain(lo, hi), contexts=ctx, weights=wts)

    @classmethod
    def bt_temperature(cls, delta_r, weights=None, lo: float = 0.0,
                       hi: float = 1.0) -> "BehaviorModel":
        ctx, wts = _as_mixture(delta_r, weights)
        return cls(BT_TEMPERATURE, ThetaDomain(lo, hi), contexts=ctx, weights=wts)

    # -- shared helpers ----------------------------------------------------

    @property
    def is_binary(self) -> bool:
        return self.kind != GAUSSIAN_SFT

    @property
    def kind_code(self) -> int:
        return (kernels.LATENT_FACTOR_CODE if self.kind == LATENT_FACTOR
                else kernels.BT_TEMPERATURE_CODE)

    @property
    def context_array(self) -> np.ndarray:
        return np.asarray(self.contexts, dtype=np.float64)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def label1_probability(self, theta: float, context: float | None = None):
        """P(label = 1) per context (binary families only)."""
        if not self.is_binary:
            raise ValueError("label probabilities only exist for binary models")
        ctx = self.context_array if context is None else np.asarray([context])
        if self.kind == LATENT_FACTOR:
            return 0.5 + theta * (ctx - 0.5)
        x = theta * ctx
        with np.errstate(over="ignore"):
            return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                            np.exp(x) / (1.0 + np.exp(x)))


def _as_mixture(values, weights) -> tuple[tuple[float, ...], tuple[float, ...]]:
    vals = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if weights is None:
        wts = np.full(vals.size, 1.0 / vals.size)
    else:
        wts = np.asarray(weights, dtype=np.float64)
    return tuple(float(v) for v in vals), tuple(float(w) for w in wts)


def _datum_context(model: BehaviorModel, d: MonitoringDatum) -> float:
    if d.context is not None:
        return float(d.context)
    if len(model.contexts) == 1:
        return model.contexts[0]
    raise ValueError("datum for a mixture model must carry its context")


def _require_binary_label(value: float) -> int:
    if value == 0.0 or value == 1.0:
        return int(value)
    raise ValueError(f"binary payload must be exactly 0 or 1, got {value}")


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def log_likelihood(model: BehaviorModel, d: MonitoringDatum, theta: float) -> float:
    """log p(d; theta); -inf when the observed label has probability zero."""
    model.domain.require(theta)
    if model.kind == GAUSSIAN_SFT:
        r = d.value - theta
        return -0.5 * math.log(2.0 * math.pi * model.sigma2) - r * r / (2.0 * model.sigma2)
    y = _require_binary_label(d.value)
    c = _datum_context(model, d)
    p1 = float(model.label1_probability(theta, c)[0])
    p = p1 if y == 1 else 1.0 - p1
    return math.log(p) if p > 0.0 else NEG_INF


def score(model: BehaviorModel, d: MonitoringDatum, theta: float) -> float:
    """d/dtheta log p(d; theta); +-inf sentinel on a zero-probability label."""
    model.domain.require(theta)
    if model.kind == GAUSSIAN_SFT:
        return (d.value - theta) / model.sigma2
    y = _require_binary_label(d.value)
    c = _datum_context(model, d)
    p1 = float(model.label1_probability(theta, c)[0])
    if model.kind == LATENT_FACTOR:
        grad = c - 0.5
        if y == 1:
            return grad / p1 if p1 > 0 else math.copysign(math.inf, grad)
        return -grad / (1.0 - p1) if p1 < 1 else -math.copysign(math.inf, grad)
    return c * (1.0 - p1) if y == 1 else -c * p1


def sample_dataset(model: BehaviorModel, theta: float, n: int,
                   seed: int) -> MonitoringDataset:
    """Draw n i.i.d. monitored items; bit-reproducible from the seed."""
    model.domain.require(theta)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if model.kind == GAUSSIAN_SFT:
        z = kernels.gaussian_items(n, seed)
        return MonitoringDataset(model, theta + math.sqrt(model.sigma2) * z)
    groups, labels = kernels.binary_items(
        model.kind_code, model.context_array, model.weight_array, theta, n, seed)
    ctx = model.context_array[groups]
    return MonitoringDataset(model, labels.astype(np.float64), ctx)


def score_variance(model: BehaviorModel, theta: float) -> float:
    """Var of the per-datum score at theta (exact, by enumeration)."""
    model.domain.require(theta)
    if model.kind == GAUSSIAN_SFT:
        return 1.0 / model.sigma2
    p1 = model.label1_probability(theta)
    w = model.weight_array
    c = model.context_array
    if model.kind == LATENT_FACTOR:
        with np.errstate(divide="ignore"):
            s1 = np.where(p1 > 0, (c - 0.5) / p1, np.inf)
            s0 = np.where(p1 < 1, -(c - 0.5) / (1.0 - p1), -np.inf)
    else:
        s1 = c * (1.0 - p1)
        s0 = -c * p1
    # conditional score means are zero, so the variance is the second moment
    with np.errstate(invalid="ignore"):
        second = np.where(p1 > 0, p1 * s1 ** 2, 0.0) + np.where(
            p1 < 1, (1.0 - p1) * s0 ** 2, 0.0)
    return float(np.sum(w * second))


def _bernoulli_kl(p: float, q: float) -> float:
    def part(a: float, b: float) -> float:
        if a == 0.0:
            return 0.0
        if b == 0.0:
            return math.inf
        return a * math.log(a / b)

    return part(p, q) + part(1.0 - p, 1.0 - q)


def kl_divergence(model: BehaviorModel, theta1: float, theta2: float) -> float:
    """KL(p(.; theta1) || p(.; theta2)); +inf if absolute continuity fails."""
    model.domain.require(theta1, "theta1")
    model.domain.require(theta2, "theta2")
    if model.kind == GAUSSIAN_SFT:
        d = theta1 - theta2
        return d * d / (2.0 * model.sigma2)
    p = model.label1_probability(theta1)
    q = model.label1_probability(theta2)
    w = model.weight_array
    return float(sum(wi * _bernoulli_kl(float(pi), float(qi))
                     for wi, pi, qi in zip(w, p, q)))


def neg_log_curvature(model: BehaviorModel, d: MonitoringDatum, theta: float) -> float:
    """-d^2/dtheta^2 log p(d; theta), in closed form."""
    model.domain.require(theta)
    if model.kind == GAUSSIAN_SFT:
        return 1.0 / model.sigma2
    y = _require_binary_label(d.value)
    c = _datum_context(model, d)
    p1 = float(model.label1_probability(theta, c)[0])
    if model.kind == LATENT_FACTOR:
        # p is linear in theta, so the curvature equals the squared score
        p = p1 if y == 1 else 1.0 - p1
        if p <= 0.0:
            return math.inf
        return (c - 0.5) ** 2 / p ** 2
    return c * c * p1 * (1.0 - p1)


def curvature_bounds(model: BehaviorModel, grid_size: int = 129) -> CurvatureBounds:
    """Empirical [alpha, beta] of -log p curvature over a (label, context, theta) grid.

    Grid points where the label has probability below 1e-12 are outside the
    almost-sure support and are skipped.
    """
    thetas = np.linspace(model.domain.lo, model.domain.hi, grid_size)
    if model.kind == GAUSSIAN_SFT:
        v = 1.0 / model.sigma2
        return CurvatureBounds(v, v)
    lo_v = math.inf
    hi_v = 0.0
    for c in model.contexts:
        for theta in thetas:
            p1 = float(model.label1_probability(float(theta), c)[0])
            for y, p in ((1, p1), (0, 1.0 - p1)):
                if p < 1e-12:
                    continue
                h = neg_log_curvature(model, MonitoringDatum(float(y), c), float(theta))
                lo_v = min(lo_v, h)
                hi_v = max(hi_v, h)
    if not (lo_v > 0.0) or not math.isfinite(lo_v):
        raise ModelValidationError(
            f"{model.kind} likelihood is not strongly concave on the grid")
    return CurvatureBounds(lo_v, hi_v)
