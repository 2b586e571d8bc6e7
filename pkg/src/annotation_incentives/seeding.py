"""Deterministic seed derivation and the counter-based random stream.

Every operation that consumes randomness receives an explicit 64-bit seed.
Seeds for sub-streams (replications, sweep points, audit runs) are derived
with :func:`derive_seed`, a fixed mixing function of
``(base_seed, stream_label, index)``.  The derivation is pure integer
arithmetic, so identical triples give identical seeds on every platform,
and the parallelism degree of a computation can never change its results.

The mixing function, documented here once and frozen:

    h     = fnv1a64(stream_label.encode("utf-8"))
    s     = splitmix64(base_seed XOR h)
    seed  = splitmix64(s + index * GOLDEN_GAMMA)   (mod 2**64)

where ``splitmix64`` is the finalizer of the SplitMix64 generator and
``GOLDEN_GAMMA = 0x9E3779B97F4A7C15``.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a 64-bit bijective mixing function."""
    x &= MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & MASK64
    return x ^ (x >> 31)


def fnv1a64(data: bytes) -> int:
    """FNV-1a hash of a byte string, reduced to 64 bits."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def derive_seed(base_seed: int, stream_label: str, index: int = 0) -> int:
    """Derive the seed for sub-stream ``(stream_label, index)`` of ``base_seed``.

    Distinct labels give statistically independent streams, so changing the
    amount of randomness one command consumes cannot perturb another.
    """
    if index < 0:
        raise ValueError(f"stream index must be >= 0, got {index}")
    h = fnv1a64(stream_label.encode("utf-8"))
    s = splitmix64((base_seed & MASK64) ^ h)
    return splitmix64((s + index * GOLDEN_GAMMA) & MASK64)
