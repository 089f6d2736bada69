"""Exponent calculus for the parabolic De Giorgi class.

An :class:`ExponentConfig` holds the growth data ``(m_i, n_i, p_i, q_i)`` of
a member class. Everything else (harmonic mean ``p``, the numbers ``L`` and
``M`` that decide criticality, the non-degeneracy number ``kappa_s``) is
derived from it by :func:`derive_indices`.

All arithmetic is plain double precision. Regime comparisons use an absolute
tolerance of ``TOL``; configurations that land within it of an equality are
reported as limiting / critical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ValidationError

TOL = 1e-12

SINGULAR, LIMITING, DEGENERATE = "singular", "limiting", "degenerate"
SUPERCRITICAL, CRITICAL, SUBCRITICAL = "supercritical", "critical", "subcritical"


def _as_tuple(values, N, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size != N:
        raise ValidationError(f"{name} must have length N={N}, got shape {arr.shape}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ExponentConfig:
    """Raw growth exponents of a member class, one entry per spatial axis."""

    N: int
    m: tuple[float, ...]
    n: tuple[float, ...]
    p: tuple[float, ...]
    q: tuple[float, ...]

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"N must be an integer >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("m", "n", "p", "q"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name), self.N, name))
        for i in range(self.N):
            mi, ni, pi, qi = self.m[i], self.n[i], self.p[i], self.q[i]
            if not all(np.isfinite([mi, ni, pi, qi])):
                raise ValidationError(f"axis {i}: exponents must be finite")
            if not pi > 1.0:
                raise ValidationError(f"axis {i}: need p_{i} > 1, got p_{i}={pi}")
            if not pi <= qi:
                raise ValidationError(f"axis {i}: need p_{i} <= q_{i}, got {pi} > {qi}")
            if not (mi > 0.0 and ni > 0.0):
                raise ValidationError(f"axis {i}: need m_{i}, n_{i} > 0, got {mi}, {ni}")
            lam, Lam = mi * (pi - 1.0), ni * (qi - 1.0)
            if lam > Lam + TOL:
                raise ValidationError(
                    f"axis {i}: need m_{i}(p_{i}-1) <= n_{i}(q_{i}-1), got {lam} > {Lam}"
                )

    @classmethod
    def isotropic(cls, N, m, p, n=None, q=None):
        n = m if n is None else n
        q = p if q is None else q
        return cls(N, (m,) * N, (n,) * N, (p,) * N, (q,) * N)

    def to_dict(self):
        return {"N": self.N, "m": list(self.m), "n": list(self.n),
                "p": list(self.p), "q": list(self.q)}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["N"], data["m"], data["n"], data["p"], data["q"])
        except KeyError as exc:
            raise ValidationError(f"config is missing key {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def permuted(self, order: Sequence[int]) -> "ExponentConfig":
        """Same configuration with the axes relabelled by ``order``."""
        pick = lambda vals: tuple(vals[j] for j in order)
        return ExponentConfig(self.N, pick(self.m), pick(self.n), pick(self.p), pick(self.q))


@dataclass(frozen=True)
class DerivedIndices:
    N: int
    lambda_i: tuple[float, ...]
    Lambda_i: tuple[float, ...]
    Lambda: float
    m: float
    q: float
    p: float
    lambda_over_p: float
    alpha_i: tuple[float, ...]
    alpha: float
    p_star: float
    L: float
    M: float
    p_minus: float
    alpha_minus: float
    gamma0: float

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def derive_indices(config: ExponentConfig) -> DerivedIndices:
    N = config.N
    mi, ni, pi, qi = (np.asarray(v) for v in (config.m, config.n, config.p, config.q))
    lam = mi * (pi - 1.0)
    Lam = ni * (qi - 1.0)
    Lambda = float(Lam.max())
    m = float(min(mi.min(), ni.min()))
    p = N / float(np.sum(1.0 / pi))
    lop = float(np.sum(lam / pi)) / N
    alpha_i = (lam + m) / (m * pi)
    alpha = float(alpha_i.mean())
    p_star = alpha * p + (1.0 + 1.0 / m) * p / N
    L = max(1.0, Lambda)
    M = p * lop + (m + 1.0) * p / N
    p_minus = float(pi.min())
    alpha_minus = float(alpha_i.min())
    return DerivedIndices(
        N=N,
        lambda_i=tuple(lam.tolist()),
        Lambda_i=tuple(Lam.tolist()),
        Lambda=Lambda,
        m=m,
        q=float(qi.max()),
        p=p,
        lambda_over_p=lop,
        alpha_i=tuple(alpha_i.tolist()),
        alpha=alpha,
        p_star=p_star,
        L=L,
        M=M,
        p_minus=p_minus,
        alpha_minus=alpha_minus,
        gamma0=float(qi.max()) * (1.0 + 1.0 / (p_minus * alpha_minus)),
    )


def diffusion_regime(Lambda: float) -> str:
    if abs(Lambda - 1.0) <= TOL:
        return LIMITING
    return SINGULAR if Lambda < 1.0 else DEGENERATE


def criticality(L: float, M: float) -> str:
    if abs(L - M) <= TOL:
        return CRITICAL
    return SUPERCRITICAL if L < M else SUBCRITICAL


@dataclass(frozen=True)
class RegimeReport:
    diffusion: str
    criticality: str
    s_min: float | None
    L: float
    M: float
    Lambda: float
    p: float
    embedding_admissible: bool

    def to_dict(self):
        return dict(self.__dict__)


def s_threshold(config: ExponentConfig) -> float:
    """Root of ``kappa_s`` in ``s``; integrability needs ``s`` strictly above it."""
    d = derive_indices(config)
    return d.L - 1.0 + (d.N / d.p) * (d.L - d.p * d.lambda_over_p)


def classify(config: ExponentConfig) -> RegimeReport:
    d = derive_indices(config)
    crit = criticality(d.L, d.M)
    s_min = None if crit == SUPERCRITICAL else s_threshold(config)
    return RegimeReport(
        diffusion=diffusion_regime(d.Lambda),
        criticality=crit,
        s_min=s_min,
        L=d.L,
        M=d.M,
        Lambda=d.Lambda,
        p=d.p,
        embedding_admissible=d.p < d.N,
    )


def kappa_s(config: ExponentConfig, s: float, *, strict: bool = True) -> float:
    """Non-degeneracy number ``p(s+1-L) + N(p|lambda/p| - L)``.

    With ``strict`` (the default) ``s`` must exceed ``m + 1``.
    """
    d = derive_indices(config)
    if strict and not s > d.m + 1.0:
        raise DomainError(f"kappa_s needs s > m + 1 = {d.m + 1.0}, got s={s}")
    return d.p * (s + 1.0 - d.L) + d.N * (d.p * d.lambda_over_p - d.L)


def kappa_s_branch(config: ExponentConfig, s: float) -> float:
    """``kappa_s`` through the explicit singular / degenerate expressions.

    Only defined off the limiting case ``Lambda = 1``.
    """
    d = derive_indices(config)
    plp = d.p * d.lambda_over_p
    if d.Lambda < 1.0:
        return d.p * s + d.N * (plp - 1.0)
    if d.Lambda > 1.0:
        return d.p * (s + 1.0 - d.Lambda) + d.N * (plp - d.Lambda)
    raise DomainError("explicit kappa_s branches exclude Lambda = 1")


DNL_STANDARD, ORLICZ_POWER, ANISOTROPIC_DNL = "dnl_standard", "orlicz_power", "anisotropic_dnl"


def translate_example(kind: str, N: int | None = None, **params) -> ExponentConfig:
    """Exponent data of the model equations that generate member classes.

    ``dnl_standard``    -- ``m``, ``p`` scalars, needs ``N``.
    ``orlicz_power``    -- ``m``, ``n``, ``p``, ``q`` scalars from the power
                           sandwich of the Orlicz growth; needs ``N``.
    ``anisotropic_dnl`` -- per-axis ``m`` and ``p`` sequences.
    """
    if kind == DNL_STANDARD:
        _expect(params, {"m", "p"}, kind)
        _need_N(N, kind)
        return ExponentConfig.isotropic(N, float(params["m"]), float(params["p"]))
    if kind == ORLICZ_POWER:
        _expect(params, {"m", "n", "p", "q"}, kind)
        _need_N(N, kind)
        return ExponentConfig.isotropic(N, float(params["m"]), float(params["p"]),
                                        n=float(params["n"]), q=float(params["q"]))
    if kind == ANISOTROPIC_DNL:
        _expect(params, {"m", "p"}, kind)
        m = np.atleast_1d(np.asarray(params["m"], dtype=float))
        p = np.atleast_1d(np.asarray(params["p"], dtype=float))
        if m.ndim != 1 or m.shape != p.shape:
            raise ValidationError(f"{kind}: m and p must be 1-d of equal length")
        if N is not None and N != m.size:
            raise ValidationError(f"{kind}: N={N} but {m.size} axes given")
        return ExponentConfig(m.size, m, m, p, p)
    raise ValidationError(f"unknown example kind {kind!r}")


def _expect(params, keys, kind):
    if set(params) != keys:
        raise ValidationError(f"{kind} takes parameters {sorted(keys)}, got {sorted(params)}")
    for key in keys:
        arr = np.asarray(params[key], dtype=float)
        if kind != ANISOTROPIC_DNL and arr.ndim != 0:
            raise ValidationError(f"{kind}: parameter {key!r} must be a scalar")


def _need_N(N, kind):
    if N is None:
        raise ValidationError(f"{kind} needs the dimension N")
