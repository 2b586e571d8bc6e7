"""Hot Monte Carlo kernels: numba-jitted with a pure-numpy fallback.

The simulate -> estimate -> test inner loops dominate the runtime of the
Monte Carlo surfaces (pass probabilities, score-function incentive
estimates, RMSE sweeps, CLT diagnostics).  Both backends implement the
same counter-based SplitMix64 random stream, so results are reproducible
from ``(kernel, arguments, key)`` alone and are independent of thread
count and replication batching.

Backend selection: the numba path is used when numba imports and the
environment variable ``ANNOTATION_INCENTIVES_NO_NUMBA`` is unset (or set
to something falsy).  ``numpy_impl`` and ``numba_impl`` expose both
backends for benchmarks and equivalence tests regardless of the flag.

Random stream layout, shared by every kernel: replication ``r`` of a
size-``n`` dataset consumes the two uniforms at counters
``(r*n + j)*2`` and ``(r*n + j)*2 + 1`` for item ``j``.  Gaussian items
turn the pair into one Box-Muller normal; binary items use the first
uniform for the mixture component and the second for the label.  Integer
outputs (group/label counts) are bit-identical across backends; float
outputs agree to accumulation-order rounding.
"""

from __future__ import annotations

import math
import os
import types

import numpy as np

NO_NUMBA_ENV = "ANNOTATION_INCENTIVES_NO_NUMBA"

#: model-kind codes shared with behavior_models
LATENT_FACTOR_CODE = 0
BT_TEMPERATURE_CODE = 1

_U64 = np.uint64
_GAMMA = _U64(0x9E3779B97F4A7C15)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_S30 = _U64(30)
_S27 = _U64(27)
_S31 = _U64(31)
_S11 = _U64(11)
_ONE = _U64(1)
_TWO53 = 2.0 ** -53
_TWOPI = 2.0 * math.pi


def _flag_disables_numba() -> bool:
    return os.environ.get(NO_NUMBA_ENV, "").strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# pure-numpy backend (the reference implementation)
# ---------------------------------------------------------------------------

_CHUNK_ELEMS = 1 << 22  # max counters materialized per fallback batch


def _np_mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _np_u01(key, ctr):
    """Uniform in (0, 1] from 64-bit key and counter (vectorized)."""
    raw = _np_mix(_U64(key) + _GAMMA * ctr)
    return ((raw >> _S11) + _ONE).astype(np.float64) * _TWO53


def _np_uniforms(count, key, ctr0=0):
    ctr = np.arange(ctr0, ctr0 + count, dtype=np.uint64)
    return _np_u01(key, ctr)


def _np_normal_pair(key, ctr):
    """Box-Muller normal from the uniforms at counters (ctr, ctr+1)."""
    u1 = _np_u01(key, ctr)
    u2 = _np_u01(key, ctr + _ONE)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWOPI * u2)


def _np_gaussian_items(n, key, rep=0):
    base = (np.arange(n, dtype=np.uint64) + _U64(rep * n)) * _U64(2)
    return _np_normal_pair(key, base)


def _np_gaussian_mean_noise(n, reps, key):
    """Per-replication mean of n standard normals (sequential accumulation)."""
    out = np.empty(reps, dtype=np.float64)
    rows = max(1, _CHUNK_ELEMS // max(n, 1))
    for r0 in range(0, reps, rows):
        r1 = min(r0 + rows, reps)
        idx = np.arange(r0 * n, r1 * n, dtype=np.uint64) * _U64(2)
        z = _np_normal_pair(key, idx).reshape(r1 - r0, n)
        # cumsum matches the jitted kernel's left-to-right accumulation
        out[r0:r1] = np.cumsum(z, axis=1)[:, -1] / n
    return out


def _np_prob1(kind, ctx, theta):
    ctx = np.asarray(ctx, dtype=np.float64)
    if kind == LATENT_FACTOR_CODE:
        return 0.5 + theta * (ctx - 0.5)
    x = theta * ctx
    return np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-x)),
                    np.exp(x) / (1.0 + np.exp(x)))


def _np_binary_items(kind, ctx, wts, theta, n, key, rep=0):
    ctx = np.asarray(ctx, dtype=np.float64)
    cumw = np.cumsum(np.asarray(wts, dtype=np.float64))
    base = (np.arange(n, dtype=np.uint64) + _U64(rep * n)) * _U64(2)
    ug = _np_u01(key, base)
    ul = _np_u01(key, base + _ONE)
    groups = np.searchsorted(cumw, ug, side="left").astype(np.int64)
    groups = np.minimum(groups, len(ctx) - 1)
    p1 = _np_prob1(kind, ctx, theta)
    labels = (ul < p1[groups]).astype(np.int64)
    return groups, labels


def _np_binary_sample_stats(kind, ctx, wts, theta, n, reps, key):
    """Per-replication (count, success) totals by mixture group."""
    ctx = np.asarray(ctx, dtype=np.float64)
    ngroups = len(ctx)
    cumw = np.cumsum(np.asarray(wts, dtype=np.float64))
    p1 = _np_prob1(kind, ctx, theta)
    cnt = np.zeros((reps, ngroups), dtype=np.int64)
    suc = np.zeros((reps, ngroups), dtype=np.int64)
    rows = max(1, _CHUNK_ELEMS // max(n, 1))
    for r0 in range(0, reps, rows):
        r1 = min(r0 + rows, reps)
        idx = np.arange(r0 * n, r1 * n, dtype=np.uint64) * _U64(2)
        ug = _np_u01(key, idx).reshape(r1 - r0, n)
        ul = _np_u01(key, idx + _ONE).reshape(r1 - r0, n)
        groups = np.searchsorted(cumw, ug.ravel(), side="left").reshape(ug.shape)
        groups = np.minimum(groups, ngroups - 1)
        labels = ul < p1[groups]
        for g in range(ngroups):
            ing = groups == g
            cnt[r0:r1, g] = ing.sum(axis=1)
            suc[r0:r1, g] = (ing & labels).sum(axis=1)
    return cnt, suc


def _np_scores(kind, ctx, theta):
    """Per-group scores for labels 1 and 0; theta scalar or per-replication."""
    ctx = np.asarray(ctx, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 1:
        theta = theta[:, None]  # (reps, 1) against (ngroups,)
    p1 = _np_prob1(kind, ctx, theta)
    with np.errstate(divide="ignore"):
        if kind == LATENT_FACTOR_CODE:
            s1 = (ctx - 0.5) / p1
            s0 = -(ctx - 0.5) / (1.0 - p1)
        else:
            s1 = ctx * (1.0 - p1)
            s0 = -ctx * p1
    return np.broadcast_arrays(s1, s0)


def _np_binary_nz_at(kind, ctx, cnt, suc, theta):
    """n * Z(theta) per replication; theta scalar or one value per replication."""
    s1, s0 = _np_scores(kind, ctx, theta)
    if s1.ndim == 1:
        s1 = np.broadcast_to(s1, cnt.shape)
        s0 = np.broadcast_to(s0, cnt.shape)
    out = np.zeros(cnt.shape[0], dtype=np.float64)
    with np.errstate(invalid="ignore"):
        for g in range(cnt.shape[1]):
            sg = suc[:, g]
            fg = cnt[:, g] - sg
            out = out + np.where(sg > 0, sg * s1[:, g], 0.0)
            out = out + np.where(fg > 0, fg * s0[:, g], 0.0)
    return out


def _np_binary_mle_batch(kind, ctx, lo, hi, cnt, suc, tol=1e-10):
    """Batch MLE by bisection on the monotone score sum, one per replication."""
    reps = cnt.shape[0]
    zlo = _np_binary_nz_at(kind, ctx, cnt, suc, lo)
    zhi = _np_binary_nz_at(kind, ctx, cnt, suc, hi)
    theta = np.empty(reps, dtype=np.float64)
    at_lo = zlo <= 0.0
    at_hi = ~at_lo & (zhi >= 0.0)
    theta[at_lo] = lo
    theta[at_hi] = hi
    active = ~(at_lo | at_hi)
    a = np.full(reps, lo)
    b = np.full(reps, hi)
    while True:
        width = b - a
        if not np.any(active & (width > tol)):
            break
        mid = 0.5 * (a + b)
        z = _np_binary_nz_at(kind, ctx, cnt, suc, mid)
        take_lo = active & (z >= 0.0)
        take_hi = active & (z < 0.0)
        a[take_lo] = mid[take_lo]
        b[take_hi] = mid[take_hi]
    theta[active] = 0.5 * (a[active] + b[active])
    return theta


_NUMPY_IMPL = types.SimpleNamespace(
    name="numpy",
    uniforms=_np_uniforms,
    gaussian_items=_np_gaussian_items,
    gaussian_mean_noise=_np_gaussian_mean_noise,
    binary_items=_np_binary_items,
    binary_sample_stats=_np_binary_sample_stats,
    binary_nz_at=_np_binary_nz_at,
    binary_mle_batch=_np_binary_mle_batch,
)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

def _build_numba_impl():
    import numba
    from numba import njit, prange

    @njit(cache=True)
    def mix(z):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @njit(cache=True)
    def u01(key, ctr):
        raw = mix(key + _GAMMA * ctr)
        return np.float64((raw >> _S11) + _ONE) * _TWO53

    @njit(cache=True)
    def normal_at(key, ctr):
        u1 = u01(key, ctr)
        u2 = u01(key, ctr + _ONE)
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWOPI * u2)

    @njit(cache=True)
    def uniforms(count, key, ctr0=0):
        k = _U64(key)
        out = np.empty(count, dtype=np.float64)
        for i in range(count):
            out[i] = u01(k, _U64(ctr0 + i))
        return out

    @njit(cache=True)
    def gaussian_items(n, key, rep=0):
        k = _U64(key)
        out = np.empty(n, dtype=np.float64)
        for j in range(n):
            out[j] = normal_at(k, _U64((rep * n + j) * 2))
        return out

    @njit(cache=True, parallel=True)
    def gaussian_mean_noise(n, reps, key):
        k = _U64(key)
        out = np.empty(reps, dtype=np.float64)
        for r in prange(reps):
            acc = 0.0
            for j in range(n):
                acc += normal_at(k, _U64((r * n + j) * 2))
            out[r] = acc / n
        return out

    @njit(cache=True)
    def prob1_scalar(kind, c, theta):
        if kind == LATENT_FACTOR_CODE:
            return 0.5 + theta * (c - 0.5)
        x = theta * c
        if x >= 0.0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    @njit(cache=True)
    def binary_items(kind, ctx, wts, theta, n, key, rep=0):
        k = _U64(key)
        ngroups = ctx.shape[0]
        p1 = np.empty(ngroups, dtype=np.float64)
        cumw = np.empty(ngroups, dtype=np.float64)
        acc = 0.0
        for g in range(ngroups):
            p1[g] = prob1_scalar(kind, ctx[g], theta)
            acc += wts[g]
            cumw[g] = acc
        groups = np.empty(n, dtype=np.int64)
        labels = np.empty(n, dtype=np.int64)
        for j in range(n):
            base = _U64((rep * n + j) * 2)
            ug = u01(k, base)
            ul = u01(k, base + _ONE)
            g = 0
            while g < ngroups - 1 and ug > cumw[g]:
                g += 1
            groups[j] = g
            labels[j] = 1 if ul < p1[g] else 0
        return groups, labels

    @njit(cache=True, parallel=True)
    def binary_sample_stats(kind, ctx, wts, theta, n, reps, key):
        k = _U64(key)
        ngroups = ctx.shape[0]
        p1 = np.empty(ngroups, dtype=np.float64)
        cumw = np.empty(ngroups, dtype=np.float64)
        acc = 0.0
        for g in range(ngroups):
            p1[g] = prob1_scalar(kind, ctx[g], theta)
            acc += wts[g]
            cumw[g] = acc
        cnt = np.zeros((reps, ngroups), dtype=np.int64)
        suc = np.zeros((reps, ngroups), dtype=np.int64)
        for r in prange(reps):
            for j in range(n):
                base = _U64((r * n + j) * 2)
                ug = u01(k, base)
                ul = u01(k, base + _ONE)
                g = 0
                while g < ngroups - 1 and ug > cumw[g]:
                    g += 1
                cnt[r, g] += 1
                if ul < p1[g]:
                    suc[r, g] += 1
        return cnt, suc

    @njit(cache=True)
    def score_pair(kind, c, theta):
        p1 = prob1_scalar(kind, c, theta)
        if kind == LATENT_FACTOR_CODE:
            s1 = (c - 0.5) / p1 if p1 > 0.0 else math.inf * (1.0 if c > 0.5 else -1.0)
            q = 1.0 - p1
            s0 = -(c - 0.5) / q if q > 0.0 else -math.inf * (1.0 if c > 0.5 else -1.0)
            return s1, s0
        return c * (1.0 - p1), -c * p1

    @njit(cache=True)
    def nz_scalar(kind, ctx, cnt_r, suc_r, theta):
        total = 0.0
        for g in range(ctx.shape[0]):
            s1, s0 = score_pair(kind, ctx[g], theta)
            sg = suc_r[g]
            fg = cnt_r[g] - sg
            if sg > 0:
                total += sg * s1
            if fg > 0:
                total += fg * s0
        return total

    @njit(cache=True, parallel=True)
    def binary_nz_at(kind, ctx, cnt, suc, theta):
        reps = cnt.shape[0]
        out = np.empty(reps, dtype=np.float64)
        for r in prange(reps):
            out[r] = nz_scalar(kind, ctx, cnt[r], suc[r], theta)
        return out

    @njit(cache=True, parallel=True)
    def binary_mle_batch(kind, ctx, lo, hi, cnt, suc, tol=1e-10):
        reps = cnt.shape[0]
        out = np.empty(reps, dtype=np.float64)
        for r in prange(reps):
            zlo = nz_scalar(kind, ctx, cnt[r], suc[r], lo)
            if zlo <= 0.0:
                out[r] = lo
                continue
            zhi = nz_scalar(kind, ctx, cnt[r], suc[r], hi)
            if zhi >= 0.0:
                out[r] = hi
                continue
            a = lo
            b = hi
            while b - a > tol:
                mid = 0.5 * (a + b)
                if nz_scalar(kind, ctx, cnt[r], suc[r], mid) >= 0.0:
                    a = mid
                else:
                    b = mid
            out[r] = 0.5 * (a + b)
        return out

    # seeds are full 64-bit values; convert before numba type inference
    return types.SimpleNamespace(
        name="numba",
        uniforms=lambda count, key, ctr0=0: uniforms(count, _U64(key), ctr0),
        gaussian_items=lambda n, key, rep=0: gaussian_items(n, _U64(key), rep),
        gaussian_mean_noise=lambda n, reps, key: gaussian_mean_noise(
            n, reps, _U64(key)),
        binary_items=lambda kind, ctx, wts, theta, n, key, rep=0: binary_items(
            kind, ctx, wts, theta, n, _U64(key), rep),
        binary_sample_stats=lambda kind, ctx, wts, theta, n, reps, key:
            binary_sample_stats(kind, ctx, wts, theta, n, reps, _U64(key)),
        binary_nz_at=binary_nz_at,
        binary_mle_batch=binary_mle_batch,
    )


numpy_impl = _NUMPY_IMPL
numba_impl = None
if not _flag_disables_numba():
    try:
        numba_impl = _build_numba_impl()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

active_impl = numba_impl if numba_impl is not None else numpy_impl


def backend_name() -> str:
    """Name of the backend serving the module-level kernels."""
    return active_impl.name


def get_impl(name: str):
    """Fetch a backend by name ('numpy' or 'numba'); numba may be None."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        if numba_impl is None:
            raise RuntimeError("numba backend unavailable (flag set or import failed)")
        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")


uniforms = active_impl.uniforms
gaussian_items = active_impl.gaussian_items
gaussian_mean_noise = active_impl.gaussian_mean_noise
binary_items = active_impl.binary_items
binary_sample_stats = active_impl.binary_sample_stats
binary_nz_at = active_impl.binary_nz_at
binary_mle_batch = active_impl.binary_mle_batch
