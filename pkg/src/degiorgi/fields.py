"""Space-time fields on uniform anisotropic grids.

Samples are stored time-outermost: ``samples[t, x_1, ..., x_N]``. Integrals
over cylinders use the tensor-product trapezoidal rule of the piecewise
(multi)linear interpolant, so a cylinder face falling inside a cell receives
the exact partial-cell weight. Reductions are plain ``numpy.sum`` calls in a
fixed axis order and never go through BLAS, which keeps results bit-identical
whatever the thread configuration.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bounds import CylinderGeometry
from .errors import CutoffBoundError, GeometryError, ValidationError

MAGIC = b"PDGF"
VERSION = 1
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class AnisotropicGrid:
    """Uniform grid ``origin_i + j h_i`` per axis, times ``t_origin + n tau``."""

    extents: tuple[int, ...]
    spacings: tuple[float, ...]
    t_steps: int
    tau: float
    origin: tuple[float, ...] | None = None
    t_origin: float = 0.0

    def __post_init__(self):
        ext = tuple(int(e) for e in np.atleast_1d(self.extents))
        h = tuple(float(v) for v in np.atleast_1d(self.spacings))
        origin = (0.0,) * len(ext) if self.origin is None else tuple(
            float(v) for v in np.atleast_1d(self.origin))
        if not (len(ext) == len(h) == len(origin)) or not ext:
            raise ValidationError("extents, spacings and origin must share one length N >= 1")
        if min(ext) < 2 or min(h) <= 0 or int(self.t_steps) < 1 or not self.tau > 0:
            raise ValidationError("grid counts must be >= 2 (space), >= 1 (time); steps positive")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "spacings", h)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "t_steps", int(self.t_steps))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "t_origin", float(self.t_origin))

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], extents: Sequence[int],
            T: float, t_steps: int, periodic: bool = False) -> "AnisotropicGrid":
        """Grid on ``[lo, hi)`` (periodic) or ``[lo, hi]`` with ``t_steps`` samples on ``[0, T]``."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        ext = np.asarray(extents, int)
        h = (hi - lo) / (ext if periodic else ext - 1)
        return cls(tuple(ext), tuple(h), t_steps, T / max(t_steps - 1, 1), tuple(lo), 0.0)

    @property
    def N(self):
        return len(self.extents)

    @property
    def shape(self):
        return (self.t_steps,) + self.extents

    def axis(self, i):
        return self.origin[i] + self.spacings[i] * np.arange(self.extents[i])

    @property
    def times(self):
        return self.t_origin + self.tau * np.arange(self.t_steps)

    @property
    def t_end(self):
        return self.t_origin + self.tau * (self.t_steps - 1)

    def space_mesh(self):
        return np.meshgrid(*(self.axis(i) for i in range(self.N)), indexing="ij")

    def with_time(self, t_steps: int, tau: float, t_origin: float = 0.0) -> "AnisotropicGrid":
        return AnisotropicGrid(self.extents, self.spacings, t_steps, tau, self.origin, t_origin)

    def to_dict(self):
        return {"extents": list(self.extents), "spacings": list(self.spacings),
                "t_steps": self.t_steps, "tau": self.tau, "origin": list(self.origin),
                "t_origin": self.t_origin}


class GridField:
    """Samples on a grid; either space-time (``grid.shape``) or space only."""

    def __init__(self, grid: AnisotropicGrid, samples):
        samples = np.asarray(samples, dtype=float)
        if samples.shape not in (grid.shape, grid.extents):
            raise ValidationError(f"samples shape {samples.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.samples = samples

    @property
    def has_time(self):
        return self.samples.ndim == self.grid.N + 1

    def _axis_offset(self):
        return 1 if self.has_time else 0


class SpaceTimeField(GridField):
    """Nonnegative samples, one per space-time node."""

    def __init__(self, grid: AnisotropicGrid, samples, metadata: dict | None = None):
        super().__init__(grid, samples)
        if not self.has_time:
            raise ValidationError("a space-time field needs a time axis")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("field samples must be finite")
        if np.any(self.samples < 0):
            raise ValidationError("field samples must be nonnegative")
        self.metadata = dict(metadata or {})

    def slice(self, n: int) -> np.ndarray:
        return self.samples[n]


def partial_i(field: GridField, i: int) -> GridField:
    """Centred difference along axis ``i``, one-sided at the two ends."""
    if not 0 <= i < field.grid.N:
        raise ValidationError(f"axis {i} out of range for N={field.grid.N}")
    ax = i + field._axis_offset()
    return GridField(field.grid, _diff(field.samples, field.grid.spacings[i], ax))


def partial_t(field: GridField) -> GridField:
    if not field.has_time:
        raise ValidationError("field has no time axis")
    return GridField(field.grid, _diff(field.samples, field.grid.tau, 0))


def _diff(arr, h, axis):
    if arr.shape[axis] < 2:
        return np.zeros_like(arr)
    return np.gradient(arr, h, axis=axis, edge_order=1)


# -- quadrature --------------------------------------------------------------

def interval_weights(n: int, h: float, origin: float, a: float, b: float,
                     clip: bool = False) -> np.ndarray:
    """Weights ``w`` with ``sum(w f) = int_a^b`` of the linear interpolant of ``f``."""
    x_last = origin + h * (n - 1)
    tol = _EDGE_TOL * max(h, abs(origin), abs(x_last))
    if clip:
        a, b = max(a, origin), min(b, x_last)
    elif a < origin - tol or b > x_last + tol:
        raise GeometryError(f"interval [{a}, {b}] escapes grid span [{origin}, {x_last}]")
    a, b = max(a, origin), min(b, x_last)
    w = np.zeros(n)
    if n == 1 or b <= a:
        return w
    cells = np.arange(n - 1)
    x0 = origin + h * cells
    s = np.clip((a - x0) / h, 0.0, 1.0)
    e = np.clip((b - x0) / h, 0.0, 1.0)
    span = e - s
    right = 0.5 * (e * e - s * s)
    w[:-1] += h * (span - right)
    w[1:] += h * right
    return w


def _window(n, h, origin, a, b, pad):
    lo = int(np.floor((a - origin) / h + _EDGE_TOL)) - pad
    hi = int(np.ceil((b - origin) / h - _EDGE_TOL)) + pad + 1
    return slice(max(lo, 0), min(hi, n))


@dataclass(frozen=True)
class CylinderWindow:
    """Index window of a cylinder on a grid, with per-axis quadrature weights.

    ``slices`` is ``(time, x_1, ..., x_N)``; every node carrying nonzero
    weight lies at least ``pad`` nodes from the window edge unless it sits on
    the grid boundary.
    """

    slices: tuple[slice, ...]
    t_weights: np.ndarray
    x_weights: tuple[np.ndarray, ...]

    def take(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.slices]

    def integrate(self, arr: np.ndarray) -> float:
        """Space-time integral of window-shaped ``arr``."""
        acc = arr
        for w in reversed(self.x_weights):
            acc = (acc * w).sum(axis=-1)
        return float((acc * self.t_weights).sum())

    def integrate_space(self, arr: np.ndarray) -> np.ndarray:
        """Spatial integral of every time slice of window-shaped ``arr``."""
        acc = arr
        for w in reversed(self.x_weights):
            acc = (acc * w).sum(axis=-1)
        return acc

    def times(self, grid: AnisotropicGrid) -> np.ndarray:
        return grid.times[self.slices[0]]


def cylinder_window(grid: AnisotropicGrid, geom: CylinderGeometry, pad: int = 1,
                    clip: bool = False) -> CylinderWindow:
    if geom.N != grid.N:
        raise ValidationError(f"geometry has N={geom.N}, grid has N={grid.N}")
    t0, t1 = geom.t_lo, geom.center_t
    ts = _window(grid.t_steps, grid.tau, grid.t_origin, t0, t1, pad)
    tw = interval_weights(grid.t_steps, grid.tau, grid.t_origin, t0, t1, clip)[ts]
    slices, weights = [ts], []
    for i in range(grid.N):
        a, b = geom.lo[i], geom.hi[i]
        sl = _window(grid.extents[i], grid.spacings[i], grid.origin[i], a, b, pad)
        w = interval_weights(grid.extents[i], grid.spacings[i], grid.origin[i], a, b, clip)
        slices.append(sl)
        weights.append(w[sl])
    return CylinderWindow(tuple(slices), tw, tuple(weights))


def integrate_cylinder(field: GridField | np.ndarray, geom: CylinderGeometry,
                       grid: AnisotropicGrid | None = None, clip: bool = False) -> float:
    """Trapezoidal integral over ``Q``; ``clip=True`` intersects ``Q`` with the grid first."""
    grid, samples = _unpack(field, grid)
    win = cylinder_window(grid, geom, pad=0, clip=clip)
    return win.integrate(win.take(samples))


def _unpack(field, grid):
    if isinstance(field, GridField):
        return field.grid, field.samples
    if grid is None:
        raise ValidationError("raw sample arrays need an explicit grid")
    return grid, np.asarray(field, dtype=float)


def _node_mask_1d(coords, a, b, scale):
    tol = _EDGE_TOL * scale
    return (coords >= a - tol) & (coords <= b + tol)


def node_mask(grid: AnisotropicGrid, geom: CylinderGeometry):
    """Per-axis boolean masks ``(time, x_1, ...)`` of nodes in the closed cylinder."""
    masks = [_node_mask_1d(grid.times, geom.t_lo, geom.center_t, max(grid.tau, abs(grid.t_end)))]
    for i in range(grid.N):
        x = grid.axis(i)
        masks.append(_node_mask_1d(x, geom.lo[i], geom.hi[i], max(grid.spacings[i], np.abs(x).max())))
    return masks


def _check_inside(grid, geom):
    cylinder_window(grid, geom, pad=0)  # raises when the cylinder escapes


def sup_sub_cylinder(field: GridField, geom: CylinderGeometry) -> float:
    """Max over grid nodes of the closed cylinder."""
    _check_inside(field.grid, geom)
    masks = node_mask(field.grid, geom)
    if not all(m.any() for m in masks):
        raise GeometryError("cylinder contains no grid node")
    sub = field.samples[np.ix_(*masks)]
    return float(sub.max())


def level_set_measure(field: GridField, k: float, geom: CylinderGeometry) -> float:
    """Quadrature measure of ``{u >= k}`` inside ``Q``."""
    win = cylinder_window(field.grid, geom, pad=0)
    return win.integrate((win.take(field.samples) >= k).astype(float))


# -- cutoffs -----------------------------------------------------------------

class CutoffField:
    """Separable cutoff ``zeta(x, t) = prod_i phi_i(x_i) * psi(t)``.

    The factors are stored as 1-d profiles; dense samples (or their discrete
    derivatives) are materialised on demand, optionally on a window only.
    Because the discrete derivative of a product of 1-d profiles along axis
    ``i`` only touches ``phi_i``, the declared derivative bounds are checked
    exactly on the profiles.
    """

    def __init__(self, grid, factors, time_factor, grad_bounds, t_bound, exponent=None,
                 step=None):
        self.grid = grid
        self.factors = tuple(np.asarray(f, float) for f in factors)
        self.time_factor = np.asarray(time_factor, float)
        self.grad_bounds = tuple(float(g) for g in grad_bounds)
        self.t_bound = float(t_bound)
        self.exponent = None if exponent is None else float(exponent)
        self.step = step
        self._check()

    def _check(self):
        rel = 1.0 + 1e-9
        for i, f in enumerate(self.factors):
            if f.min() < 0.0 or f.max() > 1.0:
                raise CutoffBoundError(f"cutoff factor {i} leaves [0, 1]")
            slope = np.abs(_diff(f, self.grid.spacings[i], 0)).max()
            if slope > self.grad_bounds[i] * rel:
                raise CutoffBoundError(
                    f"axis {i}: discrete |D_i zeta| = {slope} exceeds declared {self.grad_bounds[i]}")
        tf = self.time_factor
        if tf.min() < 0.0 or tf.max() > 1.0:
            raise CutoffBoundError("time factor leaves [0, 1]")
        tslope = np.abs(_diff(tf, self.grid.tau, 0)).max()
        if tslope > self.t_bound * rel:
            raise CutoffBoundError(f"discrete |zeta_t| = {tslope} exceeds declared {self.t_bound}")

    def _factors(self, window):
        if window is None:
            return self.time_factor, self.factors
        sl = window.slices
        return self.time_factor[sl[0]], tuple(f[s] for f, s in zip(self.factors, sl[1:]))

    @staticmethod
    def _outer(t, xs):
        out = t.reshape((-1,) + (1,) * len(xs))
        for i, f in enumerate(xs):
            shape = [1] * (len(xs) + 1)
            shape[i + 1] = -1
            out = out * f.reshape(shape)
        return out

    def dense(self, window: CylinderWindow | None = None) -> np.ndarray:
        t, xs = self._factors(window)
        return self._outer(t, xs)

    @property
    def samples(self):
        return self.dense()

    def grad(self, i: int, window: CylinderWindow | None = None) -> np.ndarray:
        """Discrete ``D_i zeta`` (computed on the whole axis, then windowed)."""
        t, xs = self._factors(window)
        d = _diff(self.factors[i], self.grid.spacings[i], 0)
        if window is not None:
            d = d[window.slices[i + 1]]
        xs = xs[:i] + (d,) + xs[i + 1:]
        return self._outer(t, xs)

    def dt(self, window: CylinderWindow | None = None) -> np.ndarray:
        t, xs = self._factors(window)
        d = _diff(self.time_factor, self.grid.tau, 0)
        if window is not None:
            d = d[window.slices[0]]
        return self._outer(d, xs)

    def spatial_support_ok(self) -> bool:
        """Zero at the first and last node of every axis it decays on."""
        return all(f[0] == 0.0 and f[-1] == 0.0 for f in self.factors)


def _ramp(x, center, r_in, r_out):
    return np.clip((r_out - np.abs(x - center)) / (r_out - r_in), 0.0, 1.0)


def build_cutoff(grid: AnisotropicGrid, geom_outer: CylinderGeometry,
                 geom_inner: CylinderGeometry, j: int | None = None,
                 q_exp: float | None = None) -> CutoffField:
    """Piecewise-linear cutoff: 1 on the inner cylinder, 0 off the outer cube.

    In time it ramps from 0 at ``t0 - theta_outer`` to 1 at ``t0 - theta_inner``.
    ``q_exp`` is the power applied to the cutoff inside energy integrands;
    ``None`` defers to ``max q_i`` of whatever configuration consumes it.
    """
    if geom_outer.N != grid.N or geom_inner.N != grid.N:
        raise ValidationError("cutoff geometries must match the grid dimension")
    same_centre = (np.allclose(geom_outer.center_x, geom_inner.center_x, rtol=0, atol=1e-12)
                   and abs(geom_outer.center_t - geom_inner.center_t) <= 1e-12)
    shrink = (all(ri < ro for ri, ro in zip(geom_inner.rho, geom_outer.rho))
              and geom_inner.theta < geom_outer.theta)
    if not (same_centre and shrink):
        raise GeometryError("inner cylinder must sit strictly inside the outer one, same top centre")
    factors, bounds = [], []
    for i in range(grid.N):
        r_in, r_out = geom_inner.rho[i], geom_outer.rho[i]
        factors.append(_ramp(grid.axis(i), geom_outer.center_x[i], r_in, r_out))
        bounds.append(1.0 / (r_out - r_in))
    t_start = geom_outer.center_t - geom_outer.theta
    t_full = geom_outer.center_t - geom_inner.theta
    tf = np.clip((grid.times - t_start) / (t_full - t_start), 0.0, 1.0)
    return CutoffField(grid, factors, tf, bounds, 1.0 / (t_full - t_start), q_exp, step=j)


# -- file formats ------------------------------------------------------------

def write_field(path, field: SpaceTimeField) -> None:
    """Binary layout: header then row-major little-endian f64, time outermost."""
    g = field.grid
    N = g.N
    header = MAGIC + struct.pack("<II", VERSION, N)
    header += struct.pack(f"<{N}I", *g.extents)
    header += struct.pack(f"<{N}d", *g.spacings)
    header += struct.pack("<Id", g.t_steps, g.tau)
    header += struct.pack(f"<{N + 1}d", *g.origin, g.t_origin)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.samples, dtype="<f8").tobytes())


def read_field(path) -> SpaceTimeField:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValidationError(f"{path}: not a field file (bad magic)")
    version, N = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported field version {version}")
    off = 12
    extents = struct.unpack_from(f"<{N}I", raw, off); off += 4 * N
    spacings = struct.unpack_from(f"<{N}d", raw, off); off += 8 * N
    t_steps, tau = struct.unpack_from("<Id", raw, off); off += 12
    origin = struct.unpack_from(f"<{N + 1}d", raw, off); off += 8 * (N + 1)
    grid = AnisotropicGrid(extents, spacings, t_steps, tau, origin[:N], origin[N])
    count = int(np.prod(grid.shape))
    if len(raw) != off + 8 * count:
        raise ValidationError(f"{path}: payload size does not match header")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    return SpaceTimeField(grid, data.reshape(grid.shape).astype(float))


def export_csv(path, field: GridField) -> None:
    """One row per node: ``t, x_1, ..., x_N, u``."""
    g = field.grid
    coords = np.meshgrid(g.times, *(g.axis(i) for i in range(g.N)), indexing="ij")
    cols = [c.ravel() for c in coords] + [field.samples.ravel()]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(g.N)] + ["u"])
        writer.writerows(zip(*(c.tolist() for c in cols)))
