"""Both sides of the truncated energy (Caccioppoli) inequality on grid fields.

For a level ``k`` and a cutoff ``zeta`` vanishing on the lateral boundary of
``K``, the ledger holds

    lhs_sup      sup_t  int_K g(u^m, k^m) zeta^q dx
    lhs_grad_i   iint_Q u^{(m_i-m)(p_i-1)} |D_i (u^m - k^m)_+|^{p_i} zeta^q
    rhs_initial  int_K g(u^m, k^m) zeta^q dx  at t = t0 - theta
    rhs_time     iint_Q g(u^m, k^m) |zeta_t|
    rhs_grad_p_i iint_Q u^{(m_i-m)(p_i-1)} (u^m - k^m)_+^{p_i} |D_i zeta|^{p_i}
    rhs_grad_q_i iint_Q u^{(n_i-m)(q_i-1)} (u^m - k^m)_+^{q_i} |D_i zeta|^{q_i}

and a field belongs to the class with constant ``C`` when
``lhs_sup + lhs_grad / C <= rhs_initial + C * (rest of the right side)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .bounds import CylinderGeometry
from .errors import DomainError, GeometryError, ValidationError
from .exponents import ExponentConfig, derive_indices
from .fields import (
    AnisotropicGrid, CutoffField, SpaceTimeField, _diff, build_cutoff,
    cylinder_window, interval_weights,
)
from .truncation import g_plus

TINY = 1e-300


@dataclass(frozen=True)
class EnergyLedger:
    k: float
    q_exp: float
    lhs_sup: float
    lhs_grad: tuple[float, ...]
    rhs_initial: float
    rhs_time: float
    rhs_grad_p: tuple[float, ...]
    rhs_grad_q: tuple[float, ...]

    @property
    def lhs_total(self):
        return self.lhs_sup + sum(self.lhs_grad)

    @property
    def rhs_total(self):
        return self.rhs_initial + self.rhs_time + sum(self.rhs_grad_p) + sum(self.rhs_grad_q)

    @property
    def ratio(self):
        """``lhs_total / rhs_total``: a constant ``C >= 1`` above it always works."""
        return self.lhs_total / max(self.rhs_total, TINY)

    @property
    def minimal_constant(self):
        """Smallest ``C >= 1`` solving the inequality with ``C`` in both places."""
        S, G, I = self.lhs_sup, sum(self.lhs_grad), self.rhs_initial
        R = self.rhs_total - I
        if R <= 0:
            return 1.0 if S + G <= I else math.inf
        c = ((S - I) + math.sqrt((S - I) ** 2 + 4.0 * R * G)) / (2.0 * R)
        return max(1.0, c)

    def holds(self, C: float) -> bool:
        lhs = self.lhs_sup + sum(self.lhs_grad) / C
        rhs = self.rhs_initial + C * (self.rhs_total - self.rhs_initial)
        return lhs <= rhs * (1.0 + 1e-12) + TINY

    def to_dict(self):
        out = asdict(self)
        out.update(lhs_total=self.lhs_total, rhs_total=self.rhs_total, ratio=self.ratio,
                   minimal_constant=self.minimal_constant)
        return out


def check_fit(grid: AnisotropicGrid, geom: CylinderGeometry, periodic: bool = False) -> None:
    """Raise unless ``Q_{8 rho, 8 theta}`` lies inside the grid's space-time domain.

    On a periodic box only the time direction can fail.
    """
    big = geom.scaled(8.0, 8.0)
    tol = 1e-9 * max(grid.tau, abs(grid.t_end))
    if big.t_lo < grid.t_origin - tol or big.center_t > grid.t_end + tol:
        raise GeometryError(
            f"dilated cylinder time span [{big.t_lo}, {big.center_t}] leaves "
            f"[{grid.t_origin}, {grid.t_end}]")
    if periodic:
        return
    for i in range(grid.N):
        x = grid.axis(i)
        t = 1e-9 * max(grid.spacings[i], np.abs(x).max())
        if big.lo[i] < x[0] - t or big.hi[i] > x[-1] + t:
            raise GeometryError(f"dilated cylinder leaves the grid along axis {i}")


def _weight(u, w, e):
    """``u^e`` on ``{w > 0}``, zero elsewhere."""
    out = np.zeros_like(u)
    pos = w > 0
    if e == 0:
        out[pos] = 1.0
    else:
        out[pos] = u[pos] ** e
    return out


def caccioppoli_ledger(field: SpaceTimeField, config: ExponentConfig, k: float,
                       cutoff: CutoffField, geom: CylinderGeometry,
                       periodic: bool = False, fit: bool = True) -> EnergyLedger:
    if not k > 0:
        raise DomainError(f"levels must be positive, got k={k}")
    grid = field.grid
    if grid.N != config.N:
        raise ValidationError("field and config dimensions differ")
    if fit:
        check_fit(grid, geom, periodic)
    d = derive_indices(config)
    m = d.m
    q = d.q if cutoff.exponent is None else cutoff.exponent
    win = cylinder_window(grid, geom, pad=1)
    u = win.take(field.samples)
    um, km = u ** m, k ** m
    w = np.maximum(um - km, 0.0)
    g = g_plus(um, km, m)
    zeta = cutoff.dense(win)
    zq = zeta ** q

    per_slice = win.integrate_space(g * zq)
    times = win.times(grid)
    t_lo, t_hi = geom.t_lo, geom.center_t
    ttol = 1e-9 * grid.tau
    inside = (times >= t_lo - ttol) & (times <= t_hi + ttol)
    lhs_sup = float(per_slice[inside].max()) if inside.any() else 0.0
    rhs_initial = float(np.interp(t_lo, times, per_slice))

    rhs_time = win.integrate(g * np.abs(cutoff.dt(win)))
    lhs_grad, rhs_p, rhs_q = [], [], []
    for i in range(d.N):
        pi, qi = config.p[i], config.q[i]
        Dw = _diff(w, grid.spacings[i], i + 1)
        cp = _weight(u, w, (config.m[i] - m) * (pi - 1.0))
        cq = _weight(u, w, (config.n[i] - m) * (qi - 1.0))
        lhs_grad.append(win.integrate(cp * np.abs(Dw) ** pi * zq))
        Dz = np.abs(cutoff.grad(i, win))
        rhs_p.append(win.integrate(cp * w ** pi * Dz ** pi))
        rhs_q.append(win.integrate(cq * w ** qi * Dz ** qi))
    return EnergyLedger(float(k), float(q), lhs_sup, tuple(lhs_grad), rhs_initial, rhs_time,
                        tuple(rhs_p), tuple(rhs_q))


def standard_cutoff(grid: AnisotropicGrid, geom: CylinderGeometry,
                    q_exp: float | None = None) -> CutoffField:
    """Cutoff between ``Q_{rho, theta}`` and ``Q_{rho/2, theta/2}``."""
    return build_cutoff(grid, geom, geom.scaled(0.5, 0.5), q_exp=q_exp)


@dataclass(frozen=True)
class MembershipReport:
    constant: float
    ledgers: tuple[EnergyLedger, ...]
    levels: tuple[float, ...]
    geoms: tuple[CylinderGeometry, ...]

    def passes(self, C0: float) -> bool:
        return self.constant <= C0

    def to_dict(self):
        return {"C": self.constant,
                "tests": [{"k": L.k, "geom": g.to_dict(), "ledger": L.to_dict()}
                          for L, g in zip(self.ledgers, self._geom_per_test())]}

    def _geom_per_test(self):
        return [g for g in self.geoms for _ in self.levels]


def membership_report(field: SpaceTimeField, config: ExponentConfig, levels: Sequence[float],
                      geoms: Sequence[CylinderGeometry],
                      cutoff_for: Callable[[AnisotropicGrid, CylinderGeometry], CutoffField] = standard_cutoff,
                      periodic: bool = False, fit: bool = True, threads: int = 1) -> MembershipReport:
    if not levels or not geoms:
        raise ValidationError("membership needs at least one level and one geometry")
    cutoffs = [cutoff_for(field.grid, g) for g in geoms]
    tasks = [(geo, cut, k) for geo, cut in zip(geoms, cutoffs) for k in levels]

    def run(task):
        geo, cut, k = task
        return caccioppoli_ledger(field, config, k, cut, geo, periodic=periodic, fit=fit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ledgers = list(pool.map(run, tasks))
    else:
        ledgers = [run(t) for t in tasks]
    C = max([1.0] + [L.ratio for L in ledgers])
    return MembershipReport(C, tuple(ledgers), tuple(float(k) for k in levels), tuple(geoms))


def membership_constant(field: SpaceTimeField, config: ExponentConfig, levels: Sequence[float],
                        geoms: Sequence[CylinderGeometry], **kwargs) -> float:
    """Smallest tested ``C >= 1`` (ratio form) over all level / cylinder pairs."""
    return membership_report(field, config, levels, geoms, **kwargs).constant


def space_membership(field: SpaceTimeField, config: ExponentConfig) -> dict:
    """Whole-domain integrals behind the energy-space requirements.

    The growth term ``u^{(n_i(q_i-1)+m)/p_i}`` is reported against both an
    ``L^{p_i}`` and an ``L^{q_i}`` norm; which pairing is intended is left open.
    """
    grid = field.grid
    d = derive_indices(config)
    geom = CylinderGeometry(
        [0.5 * (grid.axis(i)[0] + grid.axis(i)[-1]) for i in range(grid.N)], grid.t_end,
        [0.5 * (grid.axis(i)[-1] - grid.axis(i)[0]) for i in range(grid.N)],
        grid.t_end - grid.t_origin if grid.t_steps > 1 else grid.tau)
    win = cylinder_window(grid, geom, pad=0, clip=True)
    u = win.take(field.samples)
    out = {"p_variant": [], "q_variant": [], "gradient": []}
    for i in range(d.N):
        base_p = u ** ((d.lambda_i[i] + d.m) / config.p[i])
        base_q = u ** ((d.Lambda_i[i] + d.m) / config.p[i])
        out["p_variant"].append(win.integrate(base_p ** config.p[i]))
        out["q_variant"].append(win.integrate(base_q ** config.q[i]))
        out["gradient"].append(win.integrate(
            np.abs(_diff(base_p, grid.spacings[i], i + 1)) ** config.p[i]))
    out["finite"] = {key: bool(np.all(np.isfinite(val))) for key, val in out.items()}
    return out


def embedding_ratio(samples, spacings: Sequence[float], alphas: Sequence[float],
                    ps: Sequence[float], support_tol: float = 0.0) -> float:
    """Measured ratio of the two sides of the anisotropic embedding on one slice.

    ``samples`` is an N-d array vanishing on the boundary of its box.
    Returns 0 for the zero slice and ``inf`` when the gradient side vanishes
    while the Lebesgue side does not.
    """
    u = np.abs(np.asarray(samples, dtype=float))
    N = u.ndim
    alphas, ps = np.asarray(alphas, float), np.asarray(ps, float)
    if len(spacings) != N or alphas.size != N or ps.size != N:
        raise ValidationError("spacings, alphas and ps need one entry per axis")
    for ax in range(N):
        edge = np.take(u, [0, u.shape[ax] - 1], axis=ax)
        if edge.max() > support_tol:
            raise GeometryError(f"slice does not vanish on the boundary (axis {ax})")
    p = N / np.sum(1.0 / ps)
    if not p < N:
        raise DomainError(f"embedding needs p < N, got p={p}, N={N}")
    if not u.any():
        return 0.0
    alpha = alphas.mean()
    pbar = N * alpha * p / (N - p)
    weights = [interval_weights(n, h, 0.0, 0.0, h * (n - 1)) for n, h in zip(u.shape, spacings)]

    def integral(arr):
        acc = arr
        for w in reversed(weights):
            acc = (acc * w).sum(axis=-1)
        return float(acc)

    numerator = integral(u ** pbar) ** ((N - p) / N)
    denominator = 1.0
    for i in range(N):
        Di = _diff(u ** alphas[i], spacings[i], i)
        denominator *= integral(np.abs(Di) ** ps[i]) ** (p / (N * ps[i]))
    if denominator == 0.0:
        return math.inf
    return numerator / denominator
