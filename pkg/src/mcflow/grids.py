"""Two-patch surface representation and the overlap machinery between patches.

The tip region is a graph z(x, y) over a square centred on the axis; the far
region is a graph r(z, theta) on a periodic cylinder grid. Each patch's
boundary values come from interpolation in the other patch's interior.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline

from . import _kernels as kern
from .errors import DomainError, GeometryError, OverlapViolation, RegridError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class CartesianPatch:
    """Height field z[i, k] at (x_i, y_k) on a square of side L centred at the origin."""

    L: float
    z: FloatArray
    t: float = 0.0

    def __post_init__(self) -> None:
        z = np.ascontiguousarray(self.z, dtype=np.float64)
        object.__setattr__(self, "z", z)
        if z.ndim != 2 or min(z.shape) < 5:
            raise ValueError(f"Cartesian patch needs at least 5x5 nodes, got shape {z.shape}")
        if not (math.isfinite(self.L) and self.L > 0.0):
            raise ValueError(f"side length must be positive and finite, got {self.L!r}")
        if kern.first_nonfinite(z) >= 0:
            raise ValueError("Cartesian patch contains non-finite heights")

    @property
    def Nx(self) -> int:
        return self.z.shape[0]

    @property
    def Ny(self) -> int:
        return self.z.shape[1]

    @property
    def dx(self) -> float:
        return self.L / (self.Nx - 1)

    @property
    def dy(self) -> float:
        return self.L / (self.Ny - 1)

    @property
    def x(self) -> FloatArray:
        return np.linspace(-0.5 * self.L, 0.5 * self.L, self.Nx)

    @property
    def y(self) -> FloatArray:
        return np.linspace(-0.5 * self.L, 0.5 * self.L, self.Ny)

    def mesh(self) -> tuple[FloatArray, FloatArray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def with_values(self, z: FloatArray, t: float | None = None) -> "CartesianPatch":
        return replace(self, z=z, t=self.t if t is None else t)


@dataclass(frozen=True, eq=False)
class CylindricalPatch:
    """Radius field r[i, k] at (z_i, theta_k) on [z_min, z_max] x [0, 2 pi)."""

    z_min: float
    z_max: float
    r: FloatArray
    t: float = 0.0

    def __post_init__(self) -> None:
        r = np.ascontiguousarray(self.r, dtype=np.float64)
        object.__setattr__(self, "r", r)
        if r.ndim != 2 or r.shape[0] < 3 or r.shape[1] < 4:
            raise ValueError(f"cylindrical patch needs Nz >= 3 and Ntheta >= 4, got shape {r.shape}")
        if r.shape[1] % 2:
            raise ValueError(f"Ntheta must be even, got {r.shape[1]}")
        if not self.z_min < self.z_max:
            raise ValueError(f"need z_min < z_max, got [{self.z_min}, {self.z_max}]")
        if kern.first_nonfinite(r) >= 0:
            raise ValueError("cylindrical patch contains non-finite radii")
        if r.min() <= 0.0:
            raise ValueError("cylindrical patch radii must be positive")

    @property
    def Nz(self) -> int:
        return self.r.shape[0]

    @property
    def Ntheta(self) -> int:
        return self.r.shape[1]

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.Nz - 1)

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.Ntheta

    @property
    def z(self) -> FloatArray:
        return np.linspace(self.z_min, self.z_max, self.Nz)

    @property
    def theta(self) -> FloatArray:
        return np.arange(self.Ntheta) * self.dtheta

    def with_values(self, r: FloatArray, t: float | None = None) -> "CylindricalPatch":
        return replace(self, r=r, t=self.t if t is None else t)


@dataclass
class OverlapState:
    """Regrid policy knobs plus the last measured overlap discrepancy.

    The z_min circle must sit at radii within [margin, 1 - margin] * L/2, and the
    square's perimeter must map at least ``min_gap_cells`` axial cells above z_min.
    """

    margin_fraction: float = 0.25
    last_mismatch: float = math.nan
    shrink_factor: float = 0.9
    min_gap_cells: float = 4.0
    n_regrids: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.margin_fraction < 0.5:
            raise ValueError(f"margin_fraction must lie in (0, 1/2), got {self.margin_fraction}")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError(f"shrink_factor must lie in (0, 1), got {self.shrink_factor}")


def _ftol_cart(patch: CartesianPatch) -> float:
    return 1e-13 * patch.L


def _ftol_cyl(patch: CylindricalPatch) -> float:
    return 1e-13 * (patch.z_max - patch.z_min)


def sample_cartesian(patch: CartesianPatch, x: float, y: float) -> float:
    """Bilinear height at (x, y); the point must be at least one cell inside the square."""
    lim_x = 0.5 * patch.L - patch.dx
    lim_y = 0.5 * patch.L - patch.dy
    if not (abs(x) <= lim_x * (1 + 1e-14) and abs(y) <= lim_y * (1 + 1e-14)):
        raise DomainError(
            f"point ({x:.6g}, {y:.6g}) is outside the Cartesian patch interior "
            f"(L={patch.L:.6g}, one-cell margin {patch.dx:.3g})"
        )
    return float(kern.cart_sample(patch.z, -0.5 * patch.L, patch.dx, -0.5 * patch.L, patch.dy, x, y))


def sample_cylindrical(patch: CylindricalPatch, z: float, theta: float) -> float:
    """Bilinear radius at (z, theta), theta taken modulo 2 pi."""
    dz = patch.dz
    if not (patch.z_min + dz * (1 - 1e-12) <= z <= patch.z_max - dz * (1 - 1e-12)):
        raise DomainError(
            f"z={z:.6g} is outside the cylindrical patch interior "
            f"[{patch.z_min + dz:.6g}, {patch.z_max - dz:.6g}]"
        )
    return float(kern.cyl_sample(patch.r, patch.z_min, dz, z, theta))


def _raise_for_status(status: int, what: str) -> None:
    if status == kern.NO_BRACKET:
        raise OverlapViolation(f"no bracket found for {what}")
    if status == kern.NON_MONOTONE:
        raise GeometryError(f"samples are not monotone around the root for {what}")


def radial_root(patch: CartesianPatch, theta: float, z_target: float) -> float:
    """Distance s along the ray at angle theta where the height equals z_target."""
    s, status = kern.ray_root(
        patch.z, -0.5 * patch.L, patch.dx, -0.5 * patch.L, patch.dy, theta, z_target, _ftol_cart(patch)
    )
    _raise_for_status(int(status), f"z={z_target:.6g} along theta={theta:.6g}")
    return float(s)


def axial_root(patch: CylindricalPatch, theta: float, r_target: float) -> float:
    """Height z at angle theta where the radius first reaches r_target (searching up from z_min)."""
    zr, status = kern.axial_root(patch.r, patch.z_min, patch.dz, theta, r_target, _ftol_cyl(patch))
    _raise_for_status(int(status), f"r={r_target:.6g} at theta={theta:.6g}")
    return float(zr)


@lru_cache(maxsize=32)
def perimeter_indices(nx: int, ny: int) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Node indices of the square's boundary ring, each node once."""
    ii = []
    kk = []
    for i in range(nx):
        ii += [i, i]
        kk += [0, ny - 1]
    for k in range(1, ny - 1):
        ii += [0, nx - 1]
        kk += [k, k]
    return np.array(ii, dtype=np.int64), np.array(kk, dtype=np.int64)


@dataclass
class ExchangeReport:
    """Root-search results from one boundary exchange."""

    circle_radii: FloatArray
    circle_status: NDArray[np.int64]
    perimeter_z: FloatArray
    perimeter_status: NDArray[np.int64]

    @property
    def ok(self) -> bool:
        return not (self.circle_status.any() or self.perimeter_status.any())


def _exchange(cart: CartesianPatch, cyl: CylindricalPatch) -> tuple[FloatArray, FloatArray, ExchangeReport]:
    x0 = -0.5 * cart.L
    radii, c_status = kern.ray_roots(
        cart.z, x0, cart.dx, x0, cart.dy, cyl.theta, cyl.z_min, _ftol_cart(cart)
    )
    ii, kk = perimeter_indices(cart.Nx, cart.Ny)
    xs = cart.x[ii]
    ys = cart.y[kk]
    rho = np.hypot(xs, ys)
    phi = np.arctan2(ys, xs)
    pz, p_status = kern.axial_roots(cyl.r, cyl.z_min, cyl.dz, phi, rho, _ftol_cyl(cyl))
    report = ExchangeReport(radii, c_status, pz, p_status)
    z_new = cart.z.copy()
    r_new = cyl.r.copy()
    if report.ok:
        z_new[ii, kk] = pz
        r_new[0, :] = radii
    return z_new, r_new, report


def exchange_boundaries(
    cart: CartesianPatch, cyl: CylindricalPatch
) -> tuple[CartesianPatch, CylindricalPatch]:
    """Set each patch's boundary values by interpolation in the other patch.

    The z_min circle of the cylinder gets its radii from ray roots in the square,
    and the square's perimeter gets heights from axial roots in the cylinder.
    Interior values are untouched. Raises OverlapViolation if any root is missing.
    """
    if cart.t != cyl.t:
        raise ValueError(f"patches are at different times ({cart.t} vs {cyl.t})")
    z_new, r_new, report = _exchange(cart, cyl)
    if not report.ok:
        if (report.circle_status == kern.NON_MONOTONE).any() or (
            report.perimeter_status == kern.NON_MONOTONE
        ).any():
            raise GeometryError("non-monotone samples during boundary exchange")
        raise OverlapViolation(
            f"{int((report.circle_status != 0).sum())} circle and "
            f"{int((report.perimeter_status != 0).sum())} perimeter roots have no bracket"
        )
    return cart.with_values(z_new), cyl.with_values(r_new)


def overlap_problems(
    cart: CartesianPatch, cyl: CylindricalPatch, report: ExchangeReport, overlap: OverlapState
) -> list[str]:
    """Human-readable reasons the overlap condition fails (empty list when it holds)."""
    problems = []
    half = 0.5 * cart.L
    if report.circle_status.any():
        problems.append("z_min circle not found in the square")
    else:
        lo = overlap.margin_fraction * half
        hi = (1.0 - overlap.margin_fraction) * half
        if report.circle_radii.min() < lo or report.circle_radii.max() > hi:
            problems.append(
                f"z_min circle radii [{report.circle_radii.min():.4g}, {report.circle_radii.max():.4g}] "
                f"outside [{lo:.4g}, {hi:.4g}]"
            )
    if report.perimeter_status.any():
        problems.append("square perimeter not covered by the cylinder")
    else:
        gap = report.perimeter_z.min() - cyl.z_min
        if gap < overlap.min_gap_cells * cyl.dz:
            problems.append(f"perimeter only {gap / cyl.dz:.2f} cells above z_min")
    return problems


def check_overlap(cart: CartesianPatch, cyl: CylindricalPatch, overlap: OverlapState | None = None) -> list[str]:
    overlap = overlap or OverlapState()
    _, _, report = _exchange(cart, cyl)
    return overlap_problems(cart, cyl, report, overlap)


def _probe_band(cart: CartesianPatch, cyl: CylindricalPatch) -> tuple[float, float]:
    """Axial band of the cylinder whose points all project inside the square's interior."""
    lim = 0.5 * cart.L - max(cart.dx, cart.dy)
    rmax = cyl.r.max(axis=1)
    z = cyl.z
    hi_idx = 0
    for i in range(1, cyl.Nz - 1):
        if rmax[i] > lim:
            break
        hi_idx = i
    return z[1], z[hi_idx]


def measure_overlap_mismatch(cart: CartesianPatch, cyl: CylindricalPatch, n_samples: int = 64) -> float:
    """Max height discrepancy between the two patches over probes in the overlap annulus.

    Each probe is a cylinder point (z, theta); its radius is read from the
    cylinder, projected into the square, and compared against the square's height.
    """
    z_lo, z_hi = _probe_band(cart, cyl)
    if not z_hi > z_lo:
        return math.inf
    j = np.arange(n_samples)
    thetas = 2.0 * math.pi * j / n_samples
    frac = (j * 0.6180339887498949) % 1.0
    zs = z_lo + frac * (z_hi - z_lo)
    rs = kern.cyl_sample_many(cyl.r, cyl.z_min, cyl.dz, zs, thetas)
    xs = rs * np.cos(thetas)
    ys = rs * np.sin(thetas)
    lim = 0.5 * cart.L - max(cart.dx, cart.dy)
    if (np.abs(xs) > lim).any() or (np.abs(ys) > lim).any():
        return math.inf
    x0 = -0.5 * cart.L
    zc = kern.cart_sample_many(cart.z, x0, cart.dx, x0, cart.dy, xs, ys)
    return float(np.max(np.abs(zc - zs)))


def regrid(
    cart: CartesianPatch, cyl: CylindricalPatch, new_L: float, new_z_min: float
) -> tuple[CartesianPatch, CylindricalPatch]:
    """Resample both patches onto new domains with unchanged node counts.

    Square nodes inside the old square come from the old square, others from
    the old cylinder; cylinder rows above the old z_min come from the old
    cylinder, rows below it from ray roots in the old square.
    """
    if not new_z_min < cyl.z_max:
        raise RegridError(f"new z_min={new_z_min:.6g} is not below z_max={cyl.z_max:.6g}")
    # Cartesian
    x_new = np.linspace(-0.5 * new_L, 0.5 * new_L, cart.Nx)
    y_new = np.linspace(-0.5 * new_L, 0.5 * new_L, cart.Ny)
    X, Y = np.meshgrid(x_new, y_new, indexing="ij")
    xs = X.ravel()
    ys = Y.ravel()
    half_old = 0.5 * cart.L * (1.0 + 1e-14)
    inside = (np.abs(xs) <= half_old) & (np.abs(ys) <= half_old)
    z_vals = np.empty(xs.shape)
    x0 = -0.5 * cart.L
    if inside.all() and new_L == cart.L:
        z_vals[:] = cart.z.ravel()
    else:
        z_vals[inside] = kern.cart_sample_many(cart.z, x0, cart.dx, x0, cart.dy, xs[inside], ys[inside])
        out = ~inside
        if out.any():
            rho = np.hypot(xs[out], ys[out])
            phi = np.arctan2(ys[out], xs[out])
            zz, status = kern.axial_roots(cyl.r, cyl.z_min, cyl.dz, phi, rho, _ftol_cyl(cyl))
            if status.any():
                raise RegridError(f"new square of side {new_L:.6g} reaches beyond the old patch pair")
            z_vals[out] = zz
    new_cart = CartesianPatch(new_L, z_vals.reshape(cart.Nx, cart.Ny), cart.t)
    # cylindrical
    z_rows = np.linspace(new_z_min, cyl.z_max, cyl.Nz)
    th = cyl.theta
    r_vals = np.empty((cyl.Nz, cyl.Ntheta))
    if new_z_min == cyl.z_min:
        r_vals[:] = cyl.r
    else:
        above = z_rows >= cyl.z_min
        # theta nodes are unchanged, so rows are resampled along z only; a cubic
        # spline keeps the small angular modes from being disturbed at each regrid
        spline = CubicSpline(cyl.z, cyl.r, axis=0)
        r_vals[above] = spline(np.minimum(z_rows[above], cyl.z_max))
        for i in np.nonzero(~above)[0]:
            s, status = kern.ray_roots(cart.z, x0, cart.dx, x0, cart.dy, th, z_rows[i], _ftol_cart(cart))
            if status.any():
                raise RegridError(f"cylinder row z={z_rows[i]:.6g} is not covered by the old square")
            r_vals[i] = s
    new_cyl = CylindricalPatch(new_z_min, cyl.z_max, r_vals, cyl.t)
    return new_cart, new_cyl


def _circle_height(cart: CartesianPatch, radius: float, thetas: FloatArray) -> float:
    x0 = -0.5 * cart.L
    zs = kern.cart_sample_many(
        cart.z, x0, cart.dx, x0, cart.dy, radius * np.cos(thetas), radius * np.sin(thetas)
    )
    return float(np.mean(zs))


def auto_regrid(
    cart: CartesianPatch, cyl: CylindricalPatch, overlap: OverlapState, max_attempts: int = 60
) -> tuple[CartesianPatch, CylindricalPatch]:
    """Choose new (L, z_min) that restore the overlap condition, then regrid.

    The z_min circle is recentred at half the square's half-width; the square
    shrinks by ``overlap.shrink_factor`` while its perimeter is not covered by
    the cylinder or sits too close to z_min.
    """
    th = cyl.theta
    L = cart.L
    for _ in range(max_attempts):
        z_min_new = _circle_height(cart, 0.25 * L, th)
        if not z_min_new < cyl.z_max:
            raise RegridError("recentred z_min circle lies beyond z_max")
        dz_new = (cyl.z_max - z_min_new) / (cyl.Nz - 1)
        ii, kk = perimeter_indices(cart.Nx, cart.Ny)
        xs = np.linspace(-0.5 * L, 0.5 * L, cart.Nx)[ii]
        ys = np.linspace(-0.5 * L, 0.5 * L, cart.Ny)[kk]
        pz, status = kern.axial_roots(
            cyl.r, cyl.z_min, cyl.dz, np.arctan2(ys, xs), np.hypot(xs, ys), _ftol_cyl(cyl)
        )
        if not status.any() and pz.min() - z_min_new >= overlap.min_gap_cells * dz_new:
            break
        L *= overlap.shrink_factor
    else:
        raise RegridError(f"no square size restores the overlap (last tried L={L:.6g})")
    new_cart, new_cyl = regrid(cart, cyl, L, z_min_new)
    overlap.n_regrids += 1
    logger.info(
        "regrid at t=%.6g: L %.6g -> %.6g, z_min %.6g -> %.6g", cart.t, cart.L, L, cyl.z_min, z_min_new
    )
    return new_cart, new_cyl


def settle_overlap(
    cart: CartesianPatch, cyl: CylindricalPatch, overlap: OverlapState
) -> tuple[CartesianPatch, CylindricalPatch, bool]:
    """Exchange boundaries, regridding first if the overlap condition fails.

    Returns the updated pair and whether a regrid happened.
    """
    z_new, r_new, report = _exchange(cart, cyl)
    if report.ok and not overlap_problems(cart, cyl, report, overlap):
        return cart.with_values(z_new), cyl.with_values(r_new), False
    cart, cyl = auto_regrid(cart, cyl, overlap)
    z_new, r_new, report = _exchange(cart, cyl)
    if not report.ok:
        raise OverlapViolation("boundary exchange still fails after regrid")
    problems = overlap_problems(cart, cyl, report, overlap)
    if problems:
        raise OverlapViolation("overlap condition still violated after regrid: " + "; ".join(problems))
    return cart.with_values(z_new), cyl.with_values(r_new), True
