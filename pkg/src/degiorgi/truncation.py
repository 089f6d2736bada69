"""Truncation energies ``g_+`` / ``g_-`` and their two-sided power bounds.

Arguments are the already powered quantities: the energy inequality uses
``g(u^m, k^m)``, i.e. ``a = u^m`` and ``b = k^m``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DomainError

_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 64


def _check(a, b, m):
    if not m > 0:
        raise DomainError(f"m must be positive, got {m}")
    if np.any(np.asarray(a) < 0) or np.any(np.asarray(b) < 0):
        raise DomainError("truncation energy needs nonnegative arguments")


def _series(x, r):
    """``int_0^x (1 + w)^(r-1) w dw`` for ``0 <= x <= 1/2``."""
    total = np.zeros_like(x)
    coef = 1.0
    xpow = x * x
    for n in range(_SERIES_TERMS):
        total = total + coef * xpow / (n + 2)
        coef *= (r - 1.0 - n) / (n + 1)
        xpow = xpow * x
    return total


def g_plus(a, b, m):
    """``(1/m) int_b^a z^(1/m-1) (z-b)_+ dz``; zero for ``a <= b``.

    Closed form away from ``a = b``; near it a binomial series avoids the
    cancellation between the two closed-form terms.
    """
    _check(a, b, m)
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.zeros(a.shape)
    diff = a - b
    pos = diff > 0
    if m == 1:
        out[pos] = 0.5 * diff[pos] ** 2
    else:
        r = 1.0 / m
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            x = np.where(b > 0, diff / np.where(b > 0, b, 1.0), np.inf)
        near = pos & (x <= _SERIES_CUTOFF)
        far = pos & ~near
        af, bf = a[far], b[far]
        out[far] = (af ** (1.0 + r) - bf ** (1.0 + r)) / (1.0 + m) - bf * (af ** r - bf ** r)
        bn = b[near]
        out[near] = r * bn ** (1.0 + r) * _series(x[near], r)
    return float(out) if scalar else out


def g_minus(a, b, m):
    """``-(1/m) int_b^a z^(1/m-1) (z-b)_- dz``; zero for ``a >= b``."""
    _check(a, b, m)
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.zeros(a.shape)
    neg = a < b
    af, bf = a[neg], b[neg]
    if m == 1:
        out[neg] = 0.5 * (bf - af) ** 2
    else:
        r = 1.0 / m
        out[neg] = bf * (bf ** r - af ** r) - (bf ** (1.0 + r) - af ** (1.0 + r)) / (1.0 + m)
    return float(out) if scalar else out


def _sandwich_base(u, k, m, sign=+1):
    gap = np.maximum(sign * (np.asarray(u, dtype=float) - k), 0.0)
    s = np.asarray(u, dtype=float) + k
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(gap > 0, s ** (1.0 / m - 1.0), 0.0)
    return w * gap ** 2


@lru_cache(maxsize=None)
def sandwich_gamma(m: float, safety: float = 1.05) -> float:
    """Constant of the two-sided bound for ``g_+``, calibrated on ``k/u in [0, 1)``.

    The ratio ``g_+(u, k) / ((u+k)^(1/m-1) (u-k)^2)`` depends on ``k/u`` only,
    so a dense sweep of that ratio (plus its limit at ``k = u``) is enough.
    """
    if not m > 0:
        raise DomainError(f"m must be positive, got {m}")
    t = np.concatenate([np.linspace(0.0, 0.999, 4000), 1.0 - np.logspace(-3, -8, 200)])
    ratio = g_plus(1.0, t, m) / _sandwich_base(1.0, t, m)
    ratio = np.append(ratio, 2.0 ** (1.0 - 1.0 / m) / (2.0 * m))
    return float(safety * max(ratio.max(), 1.0 / ratio.min()))


class Sandwich(NamedTuple):
    lower: float
    value: float
    upper: float
    gamma: float


def lemma21_sandwich(u, k, m) -> Sandwich:
    value = g_plus(u, k, m)
    base = _sandwich_base(u, k, m)
    gamma = sandwich_gamma(float(m))
    return Sandwich(base / gamma, value, gamma * base, gamma)


def truncation_power_field(u, k, m, exponent):
    """Pointwise ``(u^m - k^m)_+^exponent``, exactly zero where ``u <= k``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("truncation needs a nonnegative field")
    t = np.maximum(u ** m - k ** m, 0.0)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = t[pos] ** exponent
    return out
