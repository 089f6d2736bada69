"""Executable De Giorgi iteration: levels, cylinders, energies, recursion fit.

Given a level ``k`` the ladder ``k_j`` climbs to ``k`` while the cylinders
``Q_j`` shrink to ``Q_{rho/2, theta/2}``. The energies

    y_j = iint_{Q_j} (u^m - k_j^m)_+^e

are measured on the field and compared with the recursion
``y_{j+1} <= A B^j y_j^{1+delta}`` that drives them to zero.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import mpmath
import numpy as np

from .bounds import (
    PROOF_FORM, BoundInputs, CylinderGeometry, h_factor, level_threshold_k, radius_term,
    sup_bound_subcritical, sup_bound_supercritical, supercritical_exponent,
)
from .errors import DomainError, ValidationError
from .exponents import CRITICAL, SUBCRITICAL, SUPERCRITICAL, ExponentConfig, classify, derive_indices
from .fields import SpaceTimeField, cylinder_window, integrate_cylinder, sup_sub_cylinder
from .truncation import truncation_power_field

MODES = (SUPERCRITICAL, CRITICAL, SUBCRITICAL)
_MODE_ALIASES = {"super": SUPERCRITICAL, "crit": CRITICAL, "sub": SUBCRITICAL}


def resolve_mode(config: ExponentConfig, mode: str | None) -> str:
    if mode in (None, "auto"):
        return classify(config).criticality
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    return mode


@dataclass(frozen=True)
class LevelLadder:
    k: float
    m: float
    k_j: tuple[float, ...]
    kbar_j: tuple[float, ...]
    kprime_j: tuple[float, ...]

    @property
    def J(self):
        return len(self.k_j) - 1


def build_ladder(k: float, m: float, J: int = 10) -> LevelLadder:
    """Levels ``k_j^m = k^m (1 - 2^{-(j+1)})`` for ``j = 0..J`` and their midpoints."""
    if not k > 0 or not m > 0:
        raise DomainError("ladder needs k > 0 and m > 0")
    if J < 2:
        raise DomainError("ladder needs J >= 2")
    km = k ** m
    j = np.arange(J + 1)
    kjm = km - km / 2.0 ** (j + 1)
    kbar = 0.5 * (kjm[:-1] + kjm[1:])
    kprime = 0.5 * (kbar + kjm[1:])
    root = lambda v: tuple((v ** (1.0 / m)).tolist())
    return LevelLadder(float(k), float(m), root(kjm), root(kbar), root(kprime))


@dataclass(frozen=True)
class ShrinkingCylinders:
    base: CylinderGeometry
    cylinders: tuple[CylinderGeometry, ...]

    @property
    def J(self):
        return len(self.cylinders) - 1

    @property
    def limit(self):
        return self.base.scaled(0.5, 0.5)


def build_cylinders(geom: CylinderGeometry, J: int = 10) -> ShrinkingCylinders:
    """``r_j = rho/2 (1 + 2^{-(j+1)})``, ``eta_j = theta/2 (1 + 2^{-(j+1)})``."""
    if J < 2:
        raise DomainError("cylinder sequence needs J >= 2")
    cyl = tuple(geom.scaled(f, f) for f in 0.5 * (1.0 + 0.5 ** (np.arange(J + 1) + 1.0)))
    return ShrinkingCylinders(geom, cyl)


def convergence_threshold(A: float, B: float, delta: float) -> float:
    """Largest ``y_0`` for which ``y_{j+1} <= A B^j y_j^{1+delta}`` forces ``y_j -> 0``."""
    if not (A > 1 and B > 1 and delta > 0):
        raise DomainError(f"need A > 1, B > 1, delta > 0; got {A}, {B}, {delta}")
    return A ** (-1.0 / delta) * B ** (-1.0 / delta ** 2)


def recursion_sequence(A, B, delta, y0, J, digits=None):
    """Iterate ``y_{j+1} = A B^j y_j^{1+delta}`` in extended precision.

    The trajectory from the threshold is unstable: relative rounding error is
    amplified by ``1 + delta`` per step, so the default precision carries
    enough digits to absorb ``(1 + delta)^J``.
    """
    if digits is None:
        digits = int(J * math.log10(1.0 + float(delta))) + 40
    with mpmath.workdps(digits):
        A, B, d = mpmath.mpf(A), mpmath.mpf(B), mpmath.mpf(delta)
        y = [mpmath.mpf(y0) if not isinstance(y0, mpmath.mpf) else y0]
        for j in range(J):
            y.append(A * B ** j * y[-1] ** (1 + d))
        return y


def threshold_mp(A, B, delta, digits=60):
    with mpmath.workdps(digits):
        A, B, d = mpmath.mpf(A), mpmath.mpf(B), mpmath.mpf(delta)
        return A ** (-1 / d) * B ** (-1 / d ** 2)


@dataclass(frozen=True)
class IterationTrace:
    mode: str
    exponent: float
    k: float
    levels: tuple[float, ...]
    y: tuple[float, ...]
    delta_theory: float
    fit: dict | None
    per_step_A: tuple[float | None, ...]
    A_calibrated: float | None
    B: float
    threshold: float | None
    lemma_start_ok: bool | None
    converged: bool
    trivial: bool
    d: float | None = None

    @property
    def verdict(self):
        if self.trivial:
            return "converged (trivial)"
        return "converged" if self.converged else "not converged"

    def to_dict(self):
        out = asdict(self)
        out["verdict"] = self.verdict
        out["fit_available"] = self.fit is not None
        return out

    def csv_rows(self):
        return [(j, kj, yj) for j, (kj, yj) in enumerate(zip(self.levels, self.y))]


def theoretical_delta(config: ExponentConfig, mode: str, s: float | None = None) -> float:
    d = derive_indices(config)
    if mode == SUPERCRITICAL:
        return (1.0 + d.L / d.m) * d.p / (d.p_star * d.N)
    if mode == CRITICAL:
        return d.p / d.N
    if s is None:
        raise DomainError("subcritical mode needs s")
    eps = (s - d.m - d.L) / (s - d.m * d.p_star)
    return eps * (d.N + d.p) / d.N - 1.0


def fit_recursion(y):
    """OLS fit of ``log y_{j+1} = log A + j log B + (1+delta) log y_j``.

    Uses only pairs with both energies positive; ``None`` below three pairs.
    """
    rows = [(j, y[j], y[j + 1]) for j in range(len(y) - 1) if y[j] > 0 and y[j + 1] > 0]
    if len(rows) < 3:
        return None
    j = np.array([r[0] for r in rows], float)
    X = np.column_stack([np.ones_like(j), j, np.log([r[1] for r in rows])])
    rhs = np.log([r[2] for r in rows])
    coef, *_ = np.linalg.lstsq(X, rhs, rcond=None)
    return {"A": float(np.exp(coef[0])), "B": float(np.exp(coef[1])),
            "exponent": float(coef[2]), "pairs": len(rows)}


def compute_trace(field: SpaceTimeField, config: ExponentConfig, ladder: LevelLadder,
                  cylinders: ShrinkingCylinders, mode: str | None = None,
                  s: float | None = None, B: float = 2.0, tol: float = 1e-8,
                  threads: int = 1) -> IterationTrace:
    """Measure ``y_j`` and set them against the recursion.

    ``B`` is the geometric factor used when turning the per-step ratios
    ``A_j = y_{j+1} / y_j^{1+delta}`` into one calibrated ``A``.
    """
    mode = resolve_mode(config, mode)
    if ladder.J != cylinders.J:
        raise ValidationError("ladder and cylinders have different lengths")
    d = derive_indices(config)
    m = d.m
    if abs(ladder.m - m) > 1e-12:
        raise ValidationError("ladder built with a different m")
    e = 1.0 + d.L / m if mode == SUPERCRITICAL else d.p_star
    dd = None
    if mode == SUBCRITICAL:
        if s is None:
            raise DomainError("subcritical trace needs s")
        dd = integrate_cylinder(field.samples ** s, cylinders.base, field.grid) ** (1.0 / s)
    delta = theoretical_delta(config, mode, s)

    def energy(j):
        geo = cylinders.cylinders[j]
        win = cylinder_window(field.grid, geo, pad=0)
        integrand = truncation_power_field(win.take(field.samples), ladder.k_j[j], m, e)
        return win.integrate(integrand)

    idx = range(ladder.J + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            y = list(pool.map(energy, idx))
    else:
        y = [energy(j) for j in idx]

    per_step = []
    for j in range(ladder.J):
        per_step.append(y[j + 1] / y[j] ** (1.0 + delta) if y[j] > 0 else None)
    scaled = [a * B ** (-j) for j, a in enumerate(per_step) if a is not None]
    A_cal = max(scaled) if scaled else None
    threshold = start_ok = None
    if A_cal is not None and delta > 0 and B > 1:
        threshold = convergence_threshold(max(A_cal, 1.0 + 1e-12), B, delta)
        start_ok = bool(y[0] <= threshold)
    trivial = y[0] == 0.0
    converged = bool(y[-1] <= tol * y[0])
    return IterationTrace(mode, e, ladder.k, ladder.k_j, tuple(y), delta, fit_recursion(y),
                          tuple(per_step), A_cal, float(B), threshold, start_ok, converged,
                          trivial, dd)


@dataclass(frozen=True)
class SupVerdict:
    sup: float
    bound: float
    ratio: float
    H: float
    R: float
    mass: float
    mode: str
    gamma: float
    form: str | None = None

    @property
    def passes(self):
        return self.ratio <= 1.0

    def to_dict(self):
        out = asdict(self)
        out["passes"] = self.passes
        return out


def bound_mass(field: SpaceTimeField, config: ExponentConfig, geom: CylinderGeometry,
               mode: str, s: float | None = None) -> float:
    """``iint_Q u^{m+L}`` (supercritical) or ``iint_Q u^s``."""
    d = derive_indices(config)
    power = d.m + d.L if mode == SUPERCRITICAL else s
    if power is None:
        raise DomainError(f"{mode} bound needs s")
    return integrate_cylinder(field.samples ** power, geom, field.grid)


def verdict_sup_bound(field: SpaceTimeField, config: ExponentConfig, geom: CylinderGeometry,
                      mode: str | None = None, s: float | None = None, gamma: float = 1.0,
                      form: str = PROOF_FORM) -> SupVerdict:
    """Sup over ``Q_{rho/2, theta/2}`` against the matching a-priori bound."""
    mode = resolve_mode(config, mode)
    mass = bound_mass(field, config, geom, mode, s)
    inputs = BoundInputs(config, geom, mass, s)
    if mode == SUPERCRITICAL:
        bound = sup_bound_supercritical(inputs, gamma)
        form = None
    else:
        bound = sup_bound_subcritical(inputs, gamma, form=form)
    sup = sup_sub_cylinder(field, geom.scaled(0.5, 0.5))
    ratio = sup / bound if bound > 0 else (0.0 if sup == 0 else math.inf)
    return SupVerdict(sup, bound, ratio, h_factor(config, geom), radius_term(config, geom),
                      mass, mode, gamma, form)


def calibrate_gamma(field: SpaceTimeField, config: ExponentConfig, geom: CylinderGeometry,
                    mode: str | None = None, s: float | None = None, safety: float = 1.25,
                    form: str = PROOF_FORM) -> float:
    """``safety`` times the least ``gamma`` for which the bound covers this instance."""
    unit = verdict_sup_bound(field, config, geom, mode, s, 1.0, form)
    main = unit.bound - unit.R
    if not main > 0:
        raise DomainError("cannot calibrate gamma on an instance with zero energy")
    return safety * max(unit.sup - unit.R, 0.0) / main


def pipeline_level(field: SpaceTimeField, config: ExponentConfig, geom: CylinderGeometry,
                   mode: str, s: float | None, gamma: float) -> float:
    """Level ``k = threshold + R`` for the iteration, with ``gamma`` in bound form.

    This is exactly the sup bound, so truncations above it are empty.

    The supercritical threshold carries its constant inside the power, so the
    bound-form ``gamma`` enters as ``gamma^(1/outer exponent)``.
    """
    mass = bound_mass(field, config, geom, mode, s)
    inputs = BoundInputs(config, geom, mass, s)
    if mode == SUPERCRITICAL:
        g_in = gamma ** (1.0 / supercritical_exponent(config))
        k = level_threshold_k(inputs, mass, g_in, mode)
    else:
        k = level_threshold_k(inputs, mass, gamma, mode)
    return k + radius_term(config, geom)


def run_de_giorgi(field: SpaceTimeField, config: ExponentConfig, geom: CylinderGeometry,
                  gamma: float, mode: str | None = None, s: float | None = None, J: int = 10,
                  tol: float = 1e-8, threads: int = 1):
    """Level choice, trace and sup verdict for one instance."""
    mode = resolve_mode(config, mode)
    k = pipeline_level(field, config, geom, mode, s, gamma)
    d = derive_indices(config)
    if not k > 0:
        raise DomainError("level threshold is zero: the field vanishes on the cylinder")
    trace = compute_trace(field, config, build_ladder(k, d.m, J), build_cylinders(geom, J),
                          mode, s, tol=tol, threads=threads)
    verdict = verdict_sup_bound(field, config, geom, mode, s, gamma)
    return trace, verdict
