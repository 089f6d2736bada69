"""Explicit finite-difference solutions of the model doubly nonlinear equations.

    u_t = sum_i D_i ( u^{(m_i - m)(p_i - 1)} |D_i u^m|^{p_i - 2} D_i u^m ),

with ``m = min m_i`` over the axes (``m_i = m`` and ``p_i = p`` for the standard
equation). Fluxes live on cell faces, so on a periodic box the scheme is
conservative up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError, StabilityError, ValidationError
from .exponents import ExponentConfig, translate_example
from .fields import AnisotropicGrid, CutoffField, SpaceTimeField, _diff

KINDS = ("dnl_standard", "anisotropic_dnl")
BOUNDARIES = ("periodic", "homogeneous")


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    m: tuple[float, ...]
    p: tuple[float, ...]
    bc: str = "periodic"
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None
    eps: float = 1e-8
    c_s: float = 0.25

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown operator kind {self.kind!r}")
        if self.bc not in BOUNDARIES:
            raise ValidationError(f"unknown boundary condition {self.bc!r}")
        m = tuple(float(v) for v in np.atleast_1d(self.m))
        p = tuple(float(v) for v in np.atleast_1d(self.p))
        if len(m) != len(p):
            raise ValidationError("m and p need one entry per axis")
        for i, (mi, pi) in enumerate(zip(m, p)):
            if not mi > 0:
                raise ValidationError(f"axis {i}: m_i must be positive, got {mi}")
            if not pi > 1:
                raise ValidationError(f"axis {i}: p_i must exceed 1, got {pi}")
        if self.kind == "dnl_standard" and (len(set(m)) > 1 or len(set(p)) > 1):
            raise ValidationError("dnl_standard takes one (m, p) for all axes")
        if not self.eps > 0 or not self.c_s > 0:
            raise ValidationError("eps and c_s must be positive")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "p", p)
        for name in ("lo", "hi"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(x) for x in np.atleast_1d(v))
                if len(v) != len(m):
                    raise ValidationError(f"{name} needs {len(m)} entries")
                object.__setattr__(self, name, v)

    @classmethod
    def standard(cls, N: int, m: float, p: float, **kw) -> "OperatorSpec":
        return cls("dnl_standard", (m,) * N, (p,) * N, **kw)

    @property
    def N(self):
        return len(self.m)

    @property
    def periodic(self):
        return self.bc == "periodic"

    @property
    def m_min(self):
        return min(self.m)

    def coefficient_exponents(self):
        mm = self.m_min
        return tuple((mi - mm) * (pi - 1.0) for mi, pi in zip(self.m, self.p))

    def config(self) -> ExponentConfig:
        if self.kind == "dnl_standard":
            return translate_example("dnl_standard", N=self.N, m=self.m[0], p=self.p[0])
        return translate_example("anisotropic_dnl", m=self.m, p=self.p)

    def grid(self, extents: Sequence[int], T: float, t_steps: int) -> AnisotropicGrid:
        if self.lo is None or self.hi is None:
            raise ValidationError("operator spec has no domain box")
        return AnisotropicGrid.box(self.lo, self.hi, extents, T, t_steps, self.periodic)

    def to_dict(self):
        return {"kind": self.kind, "m": list(self.m), "p": list(self.p), "bc": self.bc,
                "lo": None if self.lo is None else list(self.lo),
                "hi": None if self.hi is None else list(self.hi),
                "eps": self.eps, "c_s": self.c_s}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.get("kind") == "dnl_standard" and np.ndim(data.get("m")) == 0:
            N = int(data.pop("N"))
            data["m"], data["p"] = (data["m"],) * N, (data["p"],) * N
        data.pop("N", None)
        known = {"kind", "m", "p", "bc", "lo", "hi", "eps", "c_s"}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown operator keys {sorted(extra)}")
        return cls(**data)


def _face_values(u, axis, periodic):
    if periodic:
        return 0.5 * (u + np.roll(u, -1, axis=axis))
    a = np.moveaxis(u, axis, 0)
    return np.moveaxis(0.5 * (a[1:] + a[:-1]), 0, axis)


def _face_grad(w, h, axis, periodic):
    if periodic:
        return (np.roll(w, -1, axis=axis) - w) / h
    return np.diff(w, axis=axis) / h


def _coefficient(ubar, e, eps):
    if e == 0:
        return np.ones_like(ubar)
    if e > 0:
        return ubar ** e
    return np.maximum(ubar, eps) ** e


def _flux(g, p, eps):
    if p == 2:
        return g
    return (g * g + eps * eps) ** ((p - 2.0) / 2.0) * g


def _flux_slope(g, p, eps):
    """``dF/dg`` of the regularized flux."""
    if p == 2:
        return np.ones_like(g)
    s = g * g + eps * eps
    return s ** ((p - 4.0) / 2.0) * ((p - 1.0) * g * g + eps * eps)


@dataclass
class StepDiagnostics:
    steps: int = 0
    clip_events: int = 0
    max_stability_number: float = 0.0
    mass: list = dc_field(default_factory=list)


def _rhs(u, spec, h, diag_for_tau=None):
    """Discrete divergence; also returns ``max sum_i d_i / h_i^2``."""
    N = spec.N
    div = np.zeros_like(u)
    speed = np.zeros_like(u) if diag_for_tau is not None else None
    exps = spec.coefficient_exponents()
    mm = spec.m_min
    w = u if mm == 1 else u ** mm
    for i in range(N):
        g = _face_grad(w, h[i], i, spec.periodic)
        ubar = _face_values(u, i, spec.periodic)
        a = _coefficient(ubar, exps[i], spec.eps)
        F = a * _flux(g, spec.p[i], spec.eps)
        if spec.periodic:
            div += (F - np.roll(F, 1, axis=i)) / h[i]
        else:
            inner = [slice(None)] * N
            inner[i] = slice(1, -1)
            div[tuple(inner)] += np.diff(F, axis=i) / h[i]
        if speed is not None:
            # chain rule through w = u^m, one face per node
            dw = 1.0 if mm == 1 else mm * np.maximum(ubar, spec.eps) ** (mm - 1.0)
            d = a * _flux_slope(g, spec.p[i], spec.eps) * dw / h[i] ** 2
            if spec.periodic:
                speed += np.maximum(d, np.roll(d, 1, axis=i))
            else:
                pad = [(0, 0)] * N
                pad[i] = (1, 0)
                left = np.pad(d, pad)
                pad[i] = (0, 1)
                right = np.pad(d, pad)
                speed += np.maximum(left, right)
    if not spec.periodic:
        div[_boundary_mask(u.shape)] = 0.0
    number = float(speed.max()) if speed is not None else 0.0
    return div, number


def _boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for i in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[i] = 0
        mask[tuple(idx)] = True
        idx[i] = -1
        mask[tuple(idx)] = True
    return mask


def stable_tau(spec: OperatorSpec, u, spacings) -> float:
    """Largest explicit step allowed by ``tau * max sum_i d_i/h_i^2 <= c_s`` at ``u``."""
    _, number = _rhs(np.asarray(u, float), spec, tuple(spacings), diag_for_tau=True)
    return math.inf if number == 0 else spec.c_s / number


def solve(spec: OperatorSpec, initial, T: float, grid: AnisotropicGrid,
          substeps: int = 1) -> SpaceTimeField:
    """Forward Euler from ``initial`` on ``[0, T]``.

    The result has ``grid.t_steps`` samples; each saved interval is split
    into ``substeps`` Euler steps. Every step is checked against the local
    linearized stability number.
    """
    u = np.array(initial, dtype=float)
    if u.shape != grid.extents:
        raise ValidationError(f"initial data shape {u.shape} != grid extents {grid.extents}")
    if spec.N != grid.N:
        raise ValidationError(f"operator has N={spec.N}, grid has N={grid.N}")
    if not np.all(np.isfinite(u)) or np.any(u < 0):
        raise ValidationError("initial data must be finite and nonnegative")
    if grid.t_steps < 2 or not T > 0 or substeps < 1:
        raise ValidationError("need T > 0, at least two time samples and substeps >= 1")
    if not spec.periodic:
        u[_boundary_mask(u.shape)] = 0.0
    tau = T / ((grid.t_steps - 1) * substeps)
    h = grid.spacings
    out = np.empty(grid.shape)
    out[0] = u
    diag = StepDiagnostics(mass=[float(u.sum() * np.prod(h))])
    for n in range(1, grid.t_steps):
        for _ in range(substeps):
            div, number = _rhs(u, spec, h, diag_for_tau=True)
            if tau * number > spec.c_s:
                raise StabilityError(
                    f"step {diag.steps}: tau={tau:.3e} exceeds the stable step "
                    f"{spec.c_s / number:.3e}", suggested_tau=0.9 * spec.c_s / number)
            diag.max_stability_number = max(diag.max_stability_number, tau * number)
            u = u + tau * div
            if not np.all(np.isfinite(u)):
                raise StabilityError(f"non-finite values at step {diag.steps}")
            neg = u < 0
            if neg.any():
                diag.clip_events += int(neg.sum())
                u[neg] = 0.0
            diag.steps += 1
        out[n] = u
        diag.mass.append(float(u.sum() * np.prod(h)))
    grid_out = grid.with_time(grid.t_steps, T / (grid.t_steps - 1), 0.0)
    meta = {"operator": spec.to_dict(), "T": float(T), "tau": tau, "substeps": substeps,
            "steps": diag.steps, "clip_events": diag.clip_events,
            "max_stability_number": diag.max_stability_number, "mass": diag.mass}
    return SpaceTimeField(grid_out, out, meta)


# -- reference data ----------------------------------------------------------

def gaussian(grid: AnisotropicGrid, sigma: float, amp: float = 1.0,
             center: Sequence[float] | None = None) -> np.ndarray:
    """``amp * exp(-|x - c|^2 / (2 sigma^2))`` on the spatial grid."""
    if not sigma > 0 or amp < 0:
        raise ValidationError("gaussian needs sigma > 0 and amp >= 0")
    xs = grid.space_mesh()
    c = np.zeros(grid.N) if center is None else np.asarray(center, float)
    r2 = sum((x - ci) ** 2 for x, ci in zip(xs, c))
    return amp * np.exp(-r2 / (2.0 * sigma * sigma))


def heat_gaussian(grid: AnisotropicGrid, t: float, sigma: float, amp: float = 1.0,
                  center: Sequence[float] | None = None, periodic: bool = True,
                  images: int = 3) -> np.ndarray:
    """Exact solution of ``u_t = Δu`` from Gaussian data.

    Variance grows as ``sigma^2 + 2t``. On a periodic box the free-space
    profile is summed over ``images`` periodic copies per axis, assuming the
    grid covers exactly one period.
    """
    s2 = sigma * sigma + 2.0 * t
    factor = amp * (sigma * sigma / s2) ** (grid.N / 2.0)
    c = np.zeros(grid.N) if center is None else np.asarray(center, float)
    shifts = range(-images, images + 1) if periodic else (0,)
    prof = []
    for i in range(grid.N):
        x = grid.axis(i)
        L = grid.spacings[i] * grid.extents[i]
        prof.append(sum(np.exp(-(x - c[i] - k * L) ** 2 / (2.0 * s2)) for k in shifts))
    out = factor * prof[0]
    for pr in prof[1:]:
        out = np.multiply.outer(out, pr)
    return out


def heat_gaussian_field(grid: AnisotropicGrid, sigma: float, amp: float = 1.0,
                        center=None, periodic: bool = True) -> SpaceTimeField:
    samples = np.stack([heat_gaussian(grid, t, sigma, amp, center, periodic) for t in grid.times])
    return SpaceTimeField(grid, samples, {"reference": "heat_gaussian", "sigma": sigma, "amp": amp})


def parse_initial(text: str) -> tuple[float, float] | None:
    """``gaussian:sigma,amp`` -> ``(sigma, amp)``; ``None`` for anything else."""
    if not text.startswith("gaussian:"):
        return None
    try:
        sigma, amp = (float(v) for v in text.split(":", 1)[1].split(","))
    except ValueError as exc:
        raise ValidationError(f"bad gaussian initial data {text!r}; use gaussian:sigma,amp") from exc
    return sigma, amp


# -- weak form ---------------------------------------------------------------

def bump_test(grid: AnisotropicGrid, center: Sequence[float], radii: Sequence[float],
              time_profile: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Smooth ``cos^4`` bump supported in the box ``|x_i - c_i| < r_i``, times ``psi(t)``."""
    parts = []
    for i in range(grid.N):
        z = (grid.axis(i) - center[i]) / radii[i]
        parts.append(np.where(np.abs(z) < 1.0, np.cos(0.5 * np.pi * z) ** 4, 0.0))
    space = parts[0]
    for pr in parts[1:]:
        space = np.multiply.outer(space, pr)
    psi = np.ones(grid.t_steps) if time_profile is None else np.asarray(time_profile(grid.times), float)
    return np.multiply.outer(psi, space)


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _space_integral(arr, grid):
    acc = arr
    for i in reversed(range(grid.N)):
        acc = (acc * _trapezoid_weights(grid.extents[i], grid.spacings[i])).sum(axis=-1)
    return acc


def weak_residual(field: SpaceTimeField, spec: OperatorSpec, tests: Sequence,
                  signed: bool = False) -> float:
    """Weak-form residual of the equation against each test; max over tests.

    Evaluates ``int u zeta dx |_{t_1}^{t_2} + iint ( -u zeta_t + sum_i a_i(u)
    |D_i u^m|^{p_i-2} D_i u^m D_i zeta )`` over the whole record. ``signed``
    returns the largest signed value (a subsolution has it ``<= tol``);
    otherwise the largest magnitude.
    """
    grid = field.grid
    if spec.N != grid.N:
        raise ValidationError("operator and field dimensions differ")
    u = field.samples
    mm = spec.m_min
    w = u ** mm
    exps = spec.coefficient_exponents()
    grads = [_diff(w, grid.spacings[i], i + 1) for i in range(grid.N)]
    coeffs = [_coefficient(u, e, spec.eps) for e in exps]
    tw = _trapezoid_weights(grid.t_steps, grid.tau)
    values = []
    for zeta in tests:
        z = zeta.samples if isinstance(zeta, CutoffField) else np.asarray(zeta, float)
        if z.shape != grid.shape:
            raise ValidationError(f"test shape {z.shape} != field shape {grid.shape}")
        if not np.allclose(z[_spatial_boundary(grid.shape)], 0.0, atol=1e-14):
            raise GeometryError("test function does not vanish on the spatial boundary")
        ends = _space_integral(u[[0, -1]] * z[[0, -1]], grid)
        integrand = -u * _diff(z, grid.tau, 0)
        for i in range(grid.N):
            dz = _diff(z, grid.spacings[i], i + 1)
            integrand = integrand + coeffs[i] * _flux(grads[i], spec.p[i], spec.eps) * dz
        r = float(ends[1] - ends[0] + (_space_integral(integrand, grid) * tw).sum())
        values.append(r)
    if not values:
        raise ValidationError("weak_residual needs at least one test function")
    return max(values) if signed else max(abs(v) for v in values)


def _spatial_boundary(shape):
    mask = np.zeros(shape, dtype=bool)
    for i in range(1, len(shape)):
        idx = [slice(None)] * len(shape)
        idx[i] = 0
        mask[tuple(idx)] = True
        idx[i] = -1
        mask[tuple(idx)] = True
    return mask
