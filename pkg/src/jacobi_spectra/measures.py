"""Empirical spectral measures and their potential-theory diagnostics.

The central objects are atom sets with uniform weight 1/n, their
logarithmic potentials sampled on rectangular grids, and discrete
Laplacians of those grids interpreted as densities (stencil mass
h^2 * Delta / (2*pi) per interior cell).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_TWO_PI = 2.0 * math.pi

GAMMA_FIELD = "gamma_field"
POTENTIAL_FIELD = "p_n_field"


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted atoms (weight 1/n each)."""

    atoms: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(np.atleast_1d(self.atoms), dtype=np.complex128)
        if w.size == 0:
            raise ValueError("measure needs at least one atom")
        object.__setattr__(self, "atoms", w)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / self.n


def counting_measure(eigenvalues) -> EmpiricalMeasure:
    """Normalized counting measure of an eigenvalue multiset (accepts a
    SpectralSample or a plain array)."""
    atoms = getattr(eigenvalues, "eigenvalues", eigenvalues)
    return EmpiricalMeasure(atoms=np.asarray(atoms))


def log_potential(measure: EmpiricalMeasure, z) -> np.ndarray:
    """(1/n) sum log|w - z|; -inf exactly on an atom.  Vectorized over z."""
    zs = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    out = np.empty(zs.shape[0], dtype=np.float64)
    atoms = measure.atoms
    chunk = max(1, (1 << 22) // atoms.size)
    with np.errstate(divide="ignore"):
        for lo in range(0, zs.shape[0], chunk):
            d = np.abs(atoms[None, :] - zs[lo : lo + chunk, None])
            out[lo : lo + chunk] = np.mean(np.log(d), axis=1)
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return float(out[0])
    return out


@dataclass(frozen=True)
class PotentialGrid:
    """Scalar field sampled on a rectangular node grid.

    values[iy, ix] is the field at (xs[ix], ys[iy]); kind records whether
    the field is an exact log-potential (p_n_field) or a Monte Carlo
    exponent field (gamma_field).  Cells may hold -inf where the field
    diverged (atom collisions).
    """

    re0: float
    re1: float
    im0: float
    im1: float
    nx: int
    ny: int
    values: np.ndarray
    kind: str
    offset: float = 0.0  # node origin shift in units of the spacing

    def __post_init__(self):
        if self.kind not in (GAMMA_FIELD, POTENTIAL_FIELD):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.nx < 3 or self.ny < 3:
            raise ValueError("grid needs at least 3 nodes per side")
        if not (self.re1 > self.re0 and self.im1 > self.im0):
            raise ValueError("degenerate rectangle")
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (self.ny, self.nx):
            raise ValueError("values must have shape (ny, nx)")
        if np.any(np.isnan(v)):
            raise ValueError("field contains NaN")
        object.__setattr__(self, "values", v)

    @property
    def hx(self) -> float:
        return (self.re1 - self.re0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.im1 - self.im0) / (self.ny - 1)

    @property
    def spacing(self) -> float:
        if abs(self.hx - self.hy) > 1e-12 * max(self.hx, self.hy):
            raise ValueError("grid is anisotropic; use hx/hy")
        return self.hx

    def xs(self) -> np.ndarray:
        return self.re0 + (np.arange(self.nx) + self.offset) * self.hx

    def ys(self) -> np.ndarray:
        return self.im0 + (np.arange(self.ny) + self.offset) * self.hy

    def nodes(self) -> np.ndarray:
        x = self.xs()
        y = self.ys()
        return x[None, :] + 1j * y[:, None]

    def interpolate(self, points) -> np.ndarray:
        """Bilinear interpolation; nan outside the grid or next to a -inf
        node."""
        pts = np.atleast_1d(np.asarray(points, dtype=np.complex128))
        x = (pts.real - self.re0) / self.hx - self.offset
        y = (pts.imag - self.im0) / self.hy - self.offset
        out = np.full(pts.shape, np.nan)
        ix = np.floor(x).astype(int)
        iy = np.floor(y).astype(int)
        ok = (ix >= 0) & (ix < self.nx - 1) & (iy >= 0) & (iy < self.ny - 1)
        if np.any(ok):
            fx = x[ok] - ix[ok]
            fy = y[ok] - iy[ok]
            v00 = self.values[iy[ok], ix[ok]]
            v01 = self.values[iy[ok], ix[ok] + 1]
            v10 = self.values[iy[ok] + 1, ix[ok]]
            v11 = self.values[iy[ok] + 1, ix[ok] + 1]
            val = (
                v00 * (1 - fx) * (1 - fy)
                + v01 * fx * (1 - fy)
                + v10 * (1 - fx) * fy
                + v11 * fx * fy
            )
            corners = np.stack([v00, v01, v10, v11])
            val[~np.all(np.isfinite(corners), axis=0)] = np.nan
            out[ok] = val
        return out


def potential_grid(
    measure: EmpiricalMeasure,
    re0: float,
    re1: float,
    im0: float,
    im1: float,
    nx: int,
    ny: int,
    jitter: bool = False,
) -> PotentialGrid:
    """Sample the log-potential of a measure on a node grid.

    jitter=True shifts the node origin by one seventh of a cell, the
    standard dodge when atoms land exactly on nodes.
    """
    offset = 1.0 / 7.0 if jitter else 0.0
    hx = (re1 - re0) / (nx - 1)
    hy = (im1 - im0) / (ny - 1)
    x = re0 + (np.arange(nx) + offset) * hx
    y = im0 + (np.arange(ny) + offset) * hy
    zs = (x[None, :] + 1j * y[:, None]).ravel()
    vals = log_potential(measure, zs).reshape(ny, nx)
    return PotentialGrid(
        re0=re0, re1=re1, im0=im0, im1=im1, nx=nx, ny=ny,
        values=vals, kind=POTENTIAL_FIELD, offset=offset,
    )


@dataclass(frozen=True)
class DensityGrid:
    """Per-cell masses from the five-point Laplacian of a potential field.

    Covers the interior nodes of the source grid.  For exact potential
    fields tiny negative stencil noise (>= -1e-9) is clamped to zero and
    counted; Monte Carlo gamma fields keep their raw signed values, where
    cell noise is real but cancels in the total.
    """

    masses: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    hx: float
    hy: float
    source_kind: str
    clamped_cells: int
    negative_cells: int
    invalid_cells: int

    @property
    def total_mass(self) -> float:
        return float(np.nansum(self.masses))


def laplacian_density(grid: PotentialGrid, collision_limit: float = 0.01) -> DensityGrid:
    """Five-point stencil mass per interior cell: h^2 * Delta / (2*pi).

    Cells touching a non-finite node are dropped; more than
    `collision_limit` of them is an error suggesting a jittered grid
    (offset h/7).
    """
    v = grid.values
    hx, hy = grid.hx, grid.hy
    center = v[1:-1, 1:-1]
    east = v[1:-1, 2:]
    west = v[1:-1, :-2]
    north = v[2:, 1:-1]
    south = v[:-2, 1:-1]
    finite = (
        np.isfinite(center)
        & np.isfinite(east)
        & np.isfinite(west)
        & np.isfinite(north)
        & np.isfinite(south)
    )
    invalid = int(finite.size - np.count_nonzero(finite))
    if invalid > collision_limit * finite.size:
        raise ValueError(
            f"{invalid} of {finite.size} stencil cells touch a diverged node; "
            "rebuild the field on a jittered grid (offset h/7)"
        )
    with np.errstate(invalid="ignore"):
        lap = (east - 2 * center + west) / hx**2 + (north - 2 * center + south) / hy**2
    masses = lap * (hx * hy) / _TWO_PI
    masses[~finite] = np.nan
    clamped = 0
    negative = 0
    if grid.kind == POTENTIAL_FIELD:
        tiny = (masses < 0) & (masses >= -1e-9)
        clamped = int(np.count_nonzero(tiny))
        masses[tiny] = 0.0
        negative = int(np.count_nonzero(masses < 0))
    return DensityGrid(
        masses=masses,
        xs=grid.xs()[1:-1],
        ys=grid.ys()[1:-1],
        hx=hx,
        hy=hy,
        source_kind=grid.kind,
        clamped_cells=clamped,
        negative_cells=negative,
        invalid_cells=invalid,
    )


@dataclass(frozen=True)
class ThoulessReport:
    points: np.ndarray
    gamma_values: np.ndarray
    potential_values: np.ndarray
    residuals: np.ndarray
    skipped: np.ndarray

    @property
    def max_abs_residual(self) -> float:
        live = self.residuals[~self.skipped]
        return float(np.max(np.abs(live)))

    @property
    def skipped_count(self) -> int:
        return int(np.count_nonzero(self.skipped))


def thouless_residual_values(
    gamma_values, measure: EmpiricalMeasure, e_log_c: float, points, skipped=None
) -> ThoulessReport:
    """Residual gamma(z) - (potential(z) - E log|c|) at explicit points."""
    pts = np.atleast_1d(np.asarray(points, dtype=np.complex128))
    gv = np.broadcast_to(np.asarray(gamma_values, dtype=np.float64), pts.shape).copy()
    if skipped is None:
        skipped = np.zeros(pts.shape, dtype=bool)
    else:
        skipped = np.asarray(skipped, dtype=bool).copy()
    skipped |= ~np.isfinite(gv)
    if np.all(skipped):
        raise ValueError("every test point was skipped")
    pot = log_potential(measure, pts)
    res = np.where(skipped, np.nan, gv - (pot - e_log_c))
    return ThoulessReport(
        points=pts,
        gamma_values=gv,
        potential_values=pot,
        residuals=res,
        skipped=skipped,
    )


def thouless_residual(
    gamma_field: PotentialGrid,
    measure: EmpiricalMeasure,
    e_log_c: float,
    test_points,
) -> ThoulessReport:
    """Grid variant: gamma is interpolated from a sampled exponent field.

    Points closer than two grid cells to an atom (where the potential is
    too singular for the stencil spacing) are skipped and flagged, not
    evaluated.
    """
    pts = np.atleast_1d(np.asarray(test_points, dtype=np.complex128))
    min_gap = 2.0 * max(gamma_field.hx, gamma_field.hy)
    d = np.min(np.abs(pts[:, None] - measure.atoms[None, :]), axis=1)
    too_close = d < min_gap
    gv = gamma_field.interpolate(pts)
    return thouless_residual_values(gv, measure, e_log_c, pts, skipped=too_close)


def tail_functional(measures: Iterable[EmpiricalMeasure], R: float) -> float:
    """Largest mass of log|w| beyond radius R over a family of measures
    (the finite-sample stand-in for the limsup tail functional)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    worst = -math.inf
    count = 0
    for m in measures:
        w = np.abs(m.atoms)
        sel = w >= R
        val = float(np.sum(np.log(w[sel]))) / m.n if np.any(sel) else 0.0
        worst = max(worst, val)
        count += 1
    if count == 0:
        raise ValueError("need at least one measure")
    return worst


@dataclass(frozen=True)
class HolderRow:
    delta: float
    mass: float
    c_value: float
    bound_ok: bool
    atom_hit: bool


@dataclass(frozen=True)
class HolderProfile:
    z0: complex
    rows: tuple

    @property
    def all_bounds_ok(self) -> bool:
        return all(r.bound_ok for r in self.rows)

    @property
    def c_non_increasing(self) -> bool:
        ordered = sorted(self.rows, key=lambda r: -r.delta)
        cs = [r.c_value for r in ordered]
        return all(later <= earlier for earlier, later in zip(cs, cs[1:]))

    @property
    def c_violations(self) -> int:
        """Count of adjacent radius pairs where C increased as the ball
        shrank."""
        ordered = sorted(self.rows, key=lambda r: -r.delta)
        cs = [r.c_value for r in ordered]
        return sum(1 for earlier, later in zip(cs, cs[1:]) if later > earlier)


def log_holder_profile(
    measure: EmpiricalMeasure, z0: complex, deltas: Sequence[float]
) -> HolderProfile:
    """Ball mass versus the local log-energy C(z0, delta) at shrinking
    radii; checks mass <= C / log(1/delta) + 1e-12 for each radius and
    whether C shrinks with the ball."""
    z0 = complex(z0)
    rows = []
    d = np.abs(measure.atoms - z0)
    for delta in deltas:
        if not (0 < delta < 1):
            raise ValueError("radii must lie in (0, 1)")
        inside = d <= delta
        mass = float(np.count_nonzero(inside)) / measure.n
        hit = bool(np.any(d[inside] == 0.0))
        if hit:
            c_value = math.inf
        else:
            with np.errstate(divide="ignore"):
                c_value = float(np.sum(np.abs(np.log(d[inside])))) / measure.n
        bound = c_value / math.log(1.0 / delta) + 1e-12
        rows.append(
            HolderRow(
                delta=float(delta),
                mass=mass,
                c_value=c_value,
                bound_ok=mass <= bound,
                atom_hit=hit,
            )
        )
    return HolderProfile(z0=z0, rows=tuple(rows))


def gaussian_smoothed(
    measure: EmpiricalMeasure, xs: np.ndarray, ys: np.ndarray, sigma: float
) -> np.ndarray:
    """Isotropic Gaussian kernel density of the atoms on a node grid."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    grid = xs[None, :] + 1j * ys[:, None]
    out = np.zeros(grid.shape)
    norm = 1.0 / (_TWO_PI * sigma * sigma * measure.n)
    chunk = max(1, (1 << 21) // grid.size)
    flat = grid.ravel()
    acc = np.zeros(flat.size)
    for lo in range(0, measure.n, chunk):
        w = measure.atoms[lo : lo + chunk]
        d2 = np.abs(flat[None, :] - w[:, None]) ** 2
        acc += np.sum(np.exp(-d2 / (2 * sigma * sigma)), axis=0)
    out = (acc * norm).reshape(grid.shape)
    return out


def grid_rows(grid: PotentialGrid):
    """Row-major node records for NDJSON export; -inf travels as null."""
    xs = grid.xs()
    ys = grid.ys()
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            v = grid.values[iy, ix]
            yield {
                "re": float(xs[ix]),
                "im": float(ys[iy]),
                "value": float(v) if math.isfinite(v) else None,
            }


def grid_from_rows(rows, kind: str, offset: float = 0.0) -> PotentialGrid:
    """Rebuild a grid from {re, im, value} records (null meaning -inf)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no grid rows")
    xs = np.array(sorted({r["re"] for r in rows}))
    ys = np.array(sorted({r["im"] for r in rows}))
    nx, ny = xs.size, ys.size
    if nx * ny != len(rows):
        raise ValueError("rows do not form a full rectangular grid")
    values = np.full((ny, nx), np.nan)
    xi = {x: i for i, x in enumerate(xs)}
    yi = {y: i for i, y in enumerate(ys)}
    for r in rows:
        v = r["value"]
        values[yi[r["im"]], xi[r["re"]]] = -math.inf if v is None else v
    hx = (xs[-1] - xs[0]) / (nx - 1)
    hy = (ys[-1] - ys[0]) / (ny - 1)
    re0 = xs[0] - offset * hx
    im0 = ys[0] - offset * hy
    return PotentialGrid(
        re0=re0,
        re1=re0 + (nx - 1) * hx,
        im0=im0,
        im1=im0 + (ny - 1) * hy,
        nx=nx,
        ny=ny,
        values=values,
        kind=kind,
        offset=offset,
    )


@dataclass(frozen=True)
class PairDistance:
    n_small: int
    n_large: int
    sigma: float
    l1_distance: float


def convergence_diagnostic(
    measures: Sequence[EmpiricalMeasure], grid_n: int = 96
) -> list:
    """L1 distances between Gaussian-smoothed consecutive measures.

    The bandwidth for a pair is min(n)^(-1/4) times the diameter of the
    joint support box, so it shrinks as samples grow; distances between
    successive sizes should trend down as the measures converge.
    """
    if len(measures) < 2:
        raise ValueError("need at least two measures")
    out = []
    for m1, m2 in zip(measures, measures[1:]):
        allatoms = np.concatenate([m1.atoms, m2.atoms])
        re0, re1 = float(np.min(allatoms.real)), float(np.max(allatoms.real))
        im0, im1 = float(np.min(allatoms.imag)), float(np.max(allatoms.imag))
        diam = math.hypot(re1 - re0, im1 - im0)
        if diam == 0.0:
            diam = 1.0
        sigma = min(m1.n, m2.n) ** -0.25 * diam
        pad = 4.0 * sigma
        xs = np.linspace(re0 - pad, re1 + pad, grid_n)
        ys = np.linspace(im0 - pad, im1 + pad, grid_n)
        hx = xs[1] - xs[0]
        hy = ys[1] - ys[0]
        d1 = gaussian_smoothed(m1, xs, ys, sigma)
        d2 = gaussian_smoothed(m2, xs, ys, sigma)
        out.append(
            PairDistance(
                n_small=min(m1.n, m2.n),
                n_large=max(m1.n, m2.n),
                sigma=sigma,
                l1_distance=float(np.sum(np.abs(d1 - d2)) * hx * hy),
            )
        )
    return out
