"""Explicit quantities of the local sup estimates.

``radius_term`` and ``h_factor`` are the geometric terms R(theta, rho) and
H(theta, rho); both change form across ``Lambda = 1`` and are evaluated
branch by branch. The constant ``gamma`` of the estimates is never known
numerically, so every bound takes it as an argument (default 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, RegimeError, ValidationError
from .exponents import (
    CRITICAL, LIMITING, SINGULAR, SUBCRITICAL, SUPERCRITICAL, TOL,
    ExponentConfig, classify, derive_indices, diffusion_regime, kappa_s,
)


@dataclass(frozen=True)
class CylinderGeometry:
    """The cylinder ``K_rho(center_x) x (center_t - theta, center_t)``."""

    center_x: tuple[float, ...]
    center_t: float
    rho: tuple[float, ...]
    theta: float

    def __post_init__(self):
        cx = tuple(float(v) for v in np.atleast_1d(self.center_x))
        rho = tuple(float(v) for v in np.atleast_1d(self.rho))
        if len(cx) != len(rho):
            raise ValidationError("center_x and rho must have the same length")
        if not all(r > 0 for r in rho) or not self.theta > 0:
            raise ValidationError(f"cylinder radii must be positive, got rho={rho}, theta={self.theta}")
        object.__setattr__(self, "center_x", cx)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "center_t", float(self.center_t))
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def N(self):
        return len(self.rho)

    @property
    def lo(self):
        return tuple(c - r for c, r in zip(self.center_x, self.rho))

    @property
    def hi(self):
        return tuple(c + r for c, r in zip(self.center_x, self.rho))

    @property
    def t_lo(self):
        return self.center_t - self.theta

    @property
    def volume(self):
        return float(np.prod([2.0 * r for r in self.rho]) * self.theta)

    def scaled(self, space: float | Sequence[float], time: float) -> "CylinderGeometry":
        """Same top centre, radii multiplied by ``space`` and ``time``."""
        s = np.broadcast_to(np.asarray(space, dtype=float), (self.N,))
        return replace(self, rho=tuple(np.asarray(self.rho) * s), theta=self.theta * time)

    def contains(self, other: "CylinderGeometry", strict=False) -> bool:
        lt = (lambda a, b: a < b - TOL) if strict else (lambda a, b: a <= b + TOL)
        return (all(lt(a, b) for a, b in zip(self.lo, other.lo))
                and all(lt(b, a) for a, b in zip(self.hi, other.hi))
                and lt(self.t_lo, other.t_lo)
                and abs(self.center_t - other.center_t) <= TOL)

    def to_dict(self):
        return {"center_x": list(self.center_x), "center_t": self.center_t,
                "rho": list(self.rho), "theta": self.theta}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["center_x"], data["center_t"], data["rho"], data["theta"])
        except KeyError as exc:
            raise ValidationError(f"geometry is missing key {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class BoundInputs:
    config: ExponentConfig
    geom: CylinderGeometry
    mass: float
    s: float | None = None

    def __post_init__(self):
        if not self.mass >= 0:
            raise ValidationError(f"mass must be nonnegative, got {self.mass}")
        if self.geom.N != self.config.N:
            raise ValidationError("geometry and config dimensions differ")


def _eq(a, b):
    return abs(a - b) <= TOL


def _check_dims(config, geom):
    if geom.N != config.N:
        raise ValidationError(f"geometry has N={geom.N}, config has N={config.N}")


def radius_term(config: ExponentConfig, geom: CylinderGeometry) -> float:
    _check_dims(config, geom)
    d = derive_indices(config)
    rho, theta = np.asarray(geom.rho), geom.theta
    p, q = np.asarray(config.p), np.asarray(config.q)
    lam, Lam, Lmax = d.lambda_i, d.Lambda_i, d.Lambda
    regime = diffusion_regime(Lmax)
    # terms past the float range saturate to inf, like the bounds built on them
    with np.errstate(over="ignore"):
        return float(_radius_sum(d, rho, theta, p, q, lam, Lam, Lmax, regime))


def _radius_sum(d, rho, theta, p, q, lam, Lam, Lmax, regime):
    total = 0.0
    if regime == SINGULAR:
        for i in range(d.N):
            assert lam[i] < 1.0 and Lam[i] < 1.0, "singular branch needs lambda_i, Lambda_i < 1"
            total += (theta / rho[i] ** p[i]) ** (1.0 / (1.0 - lam[i]))
            total += (theta / rho[i] ** q[i]) ** (1.0 / (1.0 - Lam[i]))
    elif regime == LIMITING:
        for i in range(d.N):
            if lam[i] < 1.0 - TOL:
                total += (theta / rho[i] ** p[i]) ** (1.0 / (1.0 - lam[i]))
            if Lam[i] < 1.0 - TOL:
                total += (theta / rho[i] ** q[i]) ** (1.0 / (1.0 - Lam[i]))
    else:
        e = 1.0 / (Lmax - 1.0)
        top_p = [i for i in range(d.N) if _eq(lam[i], Lmax)]
        top_q = [i for i in range(d.N) if _eq(Lam[i], Lmax)]
        sum_p = sum(rho[l] ** p[l] for l in top_p)
        sum_q = sum(rho[l] ** q[l] for l in top_q)
        total += sum((rho[i] ** p[i] / theta) ** e for i in top_p)
        total += sum((rho[i] ** q[i] / theta) ** e for i in top_q)
        for i in range(d.N):
            if i not in top_p and top_p:
                total += (sum_p / rho[i] ** p[i]) ** (1.0 / (Lmax - lam[i]))
            if i not in top_q and top_q:
                total += (sum_q / rho[i] ** q[i]) ** (1.0 / (Lmax - Lam[i]))
    return total


def h_factor(config: ExponentConfig, geom: CylinderGeometry) -> float:
    _check_dims(config, geom)
    d = derive_indices(config)
    rho, theta = geom.rho, geom.theta
    regime = diffusion_regime(d.Lambda)
    if regime == SINGULAR:
        return 1.0 / theta
    level = 1.0 if regime == LIMITING else d.Lambda
    total = 1.0 / theta if regime == LIMITING else 0.0
    for i in range(d.N):
        if _eq(d.lambda_i[i], level):
            total += rho[i] ** -config.p[i]
        if _eq(d.Lambda_i[i], level):
            total += rho[i] ** -config.q[i]
    return float(total)


def _pow(base, exponent):
    """``base ** exponent``, saturating to ``inf`` past the float range.

    Near the critical line the outer exponents blow up; the bound is then
    larger than any float and ``inf`` is still a valid upper bound.
    """
    try:
        return float(base) ** exponent
    except OverflowError:
        return math.inf


def supercritical_exponent(config: ExponentConfig) -> float:
    """Outer exponent ``p / ((M - L) N)`` of the supercritical bound."""
    d = derive_indices(config)
    denom = (d.m + 1.0) * d.p + d.N * (d.p * d.lambda_over_p - d.L)
    if not denom > 0:
        raise RegimeError("supercritical exponent needs L < M")
    return d.p / denom


def sup_bound_supercritical(inputs: BoundInputs, gamma: float = 1.0) -> float:
    report = classify(inputs.config)
    if report.criticality != SUPERCRITICAL:
        raise RegimeError(f"supercritical bound requested for a {report.criticality} config")
    d = derive_indices(inputs.config)
    H = h_factor(inputs.config, inputs.geom)
    R = radius_term(inputs.config, inputs.geom)
    inner = H ** ((d.N + d.p) / d.p) * inputs.mass
    return gamma * _pow(inner, supercritical_exponent(inputs.config)) + R


THEOREM_FORM, PROOF_FORM = "theorem", "proof"


def _require_s(inputs):
    if inputs.s is None:
        raise DomainError("this bound needs the integrability exponent s")
    return float(inputs.s)


def sup_bound_subcritical(inputs: BoundInputs, gamma: float = 1.0, form: str = PROOF_FORM,
                          check_regime: bool = True) -> float:
    """Bound under extra integrability ``u in L^s``.

    ``form="theorem"`` uses ``(H * mass)^(p/kappa_s)``; ``form="proof"`` uses
    ``H^((N+p)/kappa_s) * mass^(p/kappa_s)``, the power the level choice of
    the iteration actually produces.
    """
    report = classify(inputs.config)
    if check_regime and report.criticality == SUPERCRITICAL:
        raise RegimeError("integrability bound needs L >= M")
    s = _require_s(inputs)
    kap = kappa_s(inputs.config, s)
    if not kap > 0:
        raise DomainError(f"need kappa_s > 0 (s > s_min = {report.s_min}), got kappa_s={kap}")
    d = derive_indices(inputs.config)
    H = h_factor(inputs.config, inputs.geom)
    R = radius_term(inputs.config, inputs.geom)
    if form == THEOREM_FORM:
        main = _pow(H * inputs.mass, d.p / kap)
    elif form == PROOF_FORM:
        main = _pow(H, (d.N + d.p) / kap) * _pow(inputs.mass, d.p / kap)
    else:
        raise ValidationError(f"unknown bound form {form!r}")
    return gamma * main + R


class EpsilonReport(NamedTuple):
    epsilon: float
    identity_lhs: float
    identity_rhs: float


def _epsilon(d, s):
    return (s - d.m - d.L) / (s - d.m * d.p_star)


def iteration_epsilon(config: ExponentConfig, s: float) -> EpsilonReport:
    """Hoelder splitting exponent of the subcritical iteration.

    Returns ``epsilon`` together with both sides of
    ``epsilon (N + p) - N = kappa_s / (s - m p_*)``.
    """
    report = classify(config)
    if report.criticality != SUBCRITICAL:
        raise RegimeError(f"epsilon is defined for L > M, config is {report.criticality}")
    d = derive_indices(config)
    if not s > d.m * d.p_star:
        raise DomainError(f"need s > m p_* = {d.m * d.p_star}, got {s}")
    kap = kappa_s(config, s)
    if not kap > 0:
        raise DomainError(f"need kappa_s > 0, i.e. s > {report.s_min}, got s={s}")
    eps = _epsilon(d, s)
    if not 0.0 < eps < 1.0:
        raise DomainError(f"epsilon={eps} outside (0, 1)")
    return EpsilonReport(eps, eps * (d.N + d.p) - d.N, kap / (s - d.m * d.p_star))


def level_threshold_k(inputs: BoundInputs, y0: float, gamma: float = 1.0,
                      mode: str | None = None) -> float:
    """Smallest level making the geometric-convergence start condition hold.

    Supercritical: ``y0`` is the energy ``iint u^(m+L)``. Critical and
    subcritical: ``y0`` is ``iint u^s`` and ``d = y0^(1/s)``.
    """
    if y0 < 0:
        raise DomainError("y0 must be nonnegative")
    config = inputs.config
    d = derive_indices(config)
    mode = mode or classify(config).criticality
    H = h_factor(config, inputs.geom)
    if mode == SUPERCRITICAL:
        num = (d.m + 1.0) * d.p + d.N * (d.p * d.lambda_over_p - d.L)
        if not num > 0:
            raise RegimeError("nonpositive level exponent: config is not supercritical")
        return _pow(gamma * H ** ((d.N + d.p) / d.p) * y0, d.p / num)
    if mode not in (CRITICAL, SUBCRITICAL):
        raise ValidationError(f"unknown mode {mode!r}")
    s = _require_s(inputs)
    kap = kappa_s(config, s)
    if not kap > 0:
        raise RegimeError(f"nonpositive kappa_s={kap}; s must exceed s_min")
    eps = _epsilon(d, s)
    gap = eps * (d.N + d.p) - d.N
    power = s - d.m * d.p_star
    if not (gap > 0 and power > 0):
        raise RegimeError("nonpositive level exponent for the integrability iteration")
    dd = y0 ** (1.0 / s)
    k_pow = _pow(dd, s + s * (1.0 - eps) * (d.N + d.p) / gap) * _pow(H, (d.N + d.p) / gap)
    return gamma * _pow(k_pow, 1.0 / power)


def bound_report(config: ExponentConfig, geom: CylinderGeometry, mass: float,
                 s: float | None = None, gamma: float = 1.0, form: str = PROOF_FORM) -> dict:
    """Everything the ``bound`` command prints."""
    rep = classify(config)
    d = derive_indices(config)
    inputs = BoundInputs(config, geom, mass, s)
    out = {"regime": rep.to_dict(), "H": h_factor(config, geom), "R": radius_term(config, geom),
           "gamma": gamma}
    if rep.criticality == SUPERCRITICAL and s is None:
        out["bound"] = sup_bound_supercritical(inputs, gamma)
        out["exponents"] = {"H_power": (d.N + d.p) / d.p,
                            "outer": supercritical_exponent(config),
                            "mass_integrand_power": d.m + d.L}
        out["theorem"] = "supercritical"
    else:
        kap = kappa_s(config, _require_s(inputs))
        out["bound"] = sup_bound_subcritical(inputs, gamma, form=form,
                                             check_regime=rep.criticality != SUPERCRITICAL)
        out["exponents"] = {"kappa_s": kap, "outer": d.p / kap,
                            "H_power": ((d.N + d.p) / kap) if form == PROOF_FORM else d.p / kap,
                            "mass_integrand_power": s}
        out["theorem"] = "integrability"
        out["form"] = form
    return out
