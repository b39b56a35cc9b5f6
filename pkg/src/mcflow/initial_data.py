"""Unperturbed and perturbed initial surfaces.

The unperturbed surface is a bowl-soliton cap for r < r1 joined continuously to
the analytic asymptotic tail for r >= r1. Near-class perturbations dent the
square patch around the tip; far-class perturbations pinch the cylinder patch
with an angular cos(n theta) modulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, IntegrationError, UnsupportedCase
from .grids import CartesianPatch, CylindricalPatch

# Default construction constants used throughout the numerical study.
GAMMA = 0.75
C = 1.0
TAU0 = 4.0


@dataclass(frozen=True)
class FlowParams:
    gamma: float
    c: float
    tau0: float
    R1: float
    beta: float
    r1: float
    r0: float
    T: float

    @property
    def tail_base(self) -> float:
        """2 exp(-tau0), the squared radius of the enveloping cylinder."""
        return 2.0 * math.exp(-self.tau0)


def derive_params(gamma: float = GAMMA, c: float = C, tau0: float = TAU0, R1: float | None = None) -> FlowParams:
    """Translation speed, matching radius, cylinder radius and vanishing time.

    R1 defaults to exp(gamma * tau0 / 2). The matching radius in unscaled
    coordinates is r1 = R1 * exp(-(gamma + 1/2) * tau0).
    """
    if gamma <= 0.5:
        raise UnsupportedCase(
            f"gamma={gamma} is not supported: only gamma > 1/2 is handled "
            "(the critical case gamma = 1/2 uses a different profile)"
        )
    if c <= 0.0:
        raise ValueError(f"c must be positive, got {c}")
    if R1 is None:
        R1 = math.exp(gamma * tau0 / 2.0)
    if R1 <= 0.0:
        raise ValueError(f"R1 must be positive, got {R1}")
    beta = (gamma - 0.5) * 2.0 ** (-(gamma - 0.5)) * math.exp(-(gamma + 0.5) * tau0) / c
    r1 = R1 * math.exp(-(gamma + 0.5) * tau0)
    r0 = math.sqrt(2.0) * math.exp(-tau0 / 2.0)
    T = math.exp(-tau0)
    if not r1 < r0:
        raise ValueError(f"matching radius r1={r1:.6g} must lie inside the cylinder radius r0={r0:.6g}")
    return FlowParams(gamma=gamma, c=c, tau0=tau0, R1=R1, beta=beta, r1=r1, r0=r0, T=T)


@dataclass(frozen=True, eq=False)
class BowlProfile:
    """Tabulated bowl-soliton profile z(r), z_r(r) on [0, r1] at uniform spacing."""

    dr_ode: float
    r: np.ndarray
    z_of_r: np.ndarray
    slope_of_r: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.r, self.z_of_r, self.slope_of_r))

    def z_at(self, r):
        return self._spline(r)

    def slope_at(self, r):
        return self._spline(r, 1)


def _bowl_rhs(r: float, z: float, p: float, beta: float) -> tuple[float, float]:
    return p, (1.0 + p * p) * (beta - p / r)


def integrate_bowl(params: FlowParams, dr_ode: float | None = None) -> BowlProfile:
    """Integrate z_rr = (1 + z_r^2)(beta - z_r / r) outward from the tip with RK4.

    The first step uses the regular series z = beta r^2/4 + beta^3 r^4/128.
    """
    r1 = params.r1
    if dr_ode is None:
        dr_ode = r1 / 2048.0
    n = int(round(r1 / dr_ode))
    if dr_ode > r1 / 100.0 or n < 100:
        raise ValueError(f"dr_ode={dr_ode:.3g} too coarse; need at most r1/100 = {r1 / 100:.3g}")
    h = r1 / n
    beta = params.beta
    r = np.linspace(0.0, r1, n + 1)
    z = np.zeros(n + 1)
    p = np.zeros(n + 1)
    z[1] = beta * h**2 / 4.0 + beta**3 * h**4 / 128.0
    p[1] = beta * h / 2.0 + beta**3 * h**3 / 32.0
    zc, pc = z[1], p[1]
    for j in range(1, n):
        rj = r[j]
        k1z, k1p = _bowl_rhs(rj, zc, pc, beta)
        k2z, k2p = _bowl_rhs(rj + 0.5 * h, zc + 0.5 * h * k1z, pc + 0.5 * h * k1p, beta)
        k3z, k3p = _bowl_rhs(rj + 0.5 * h, zc + 0.5 * h * k2z, pc + 0.5 * h * k2p, beta)
        k4z, k4p = _bowl_rhs(rj + h, zc + h * k3z, pc + h * k3p, beta)
        zc = zc + h * (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0
        pc = pc + h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        z[j + 1] = zc
        p[j + 1] = pc
    if not (np.all(np.isfinite(z)) and np.all(np.diff(p) > 0.0)):
        raise IntegrationError(f"bowl slope is not monotone with step {h:.3g}")
    return BowlProfile(dr_ode=h, r=r, z_of_r=z, slope_of_r=p)


def tail_z(r, params: FlowParams, z_r1: float):
    """Height of the asymptotic tail at radius r (r1 <= r < r0)."""
    r = np.asarray(r, dtype=float)
    if np.any(r >= params.r0):
        raise DomainError(f"tail height undefined at r >= r0 = {params.r0:.6g}")
    if np.any(r < params.r1 * (1.0 - 1e-12)):
        raise DomainError(f"tail formula applies only for r >= r1 = {params.r1:.6g}")
    e = 0.5 - params.gamma
    a = params.tail_base
    out = z_r1 + ((a - r * r) ** e - (a - params.r1**2) ** e) / params.c
    return out[()] if out.ndim == 0 else out


def tail_slope(r, params: FlowParams):
    """dz/dr of the tail."""
    r = np.asarray(r, dtype=float)
    a = params.tail_base
    return (params.gamma - 0.5) * 2.0 * r * (a - r * r) ** (-0.5 - params.gamma) / params.c


def tail_r(z, params: FlowParams, z_r1: float):
    """Radius of the tail at height z (z >= z(r1)); inverse of tail_z."""
    z = np.asarray(z, dtype=float)
    if np.any(z < z_r1):
        raise DomainError(f"tail radius undefined below z(r1) = {z_r1:.6g}")
    e = 0.5 - params.gamma
    a = params.tail_base
    K = (a - params.r1**2) ** e + params.c * (z - z_r1)
    out = np.sqrt(a - K ** (1.0 / e))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class NearPerturbation:
    a0: float
    a1: float
    r_m: float

    def __post_init__(self) -> None:
        if not self.r_m > 0.0:
            raise ValueError(f"r_m must be positive, got {self.r_m}")


@dataclass(frozen=True)
class FarPerturbation:
    a0: float
    z_a: float
    z_b: float
    n: int

    def __post_init__(self) -> None:
        if self.n != int(self.n) or self.n < 2 or self.n % 2:
            raise ValueError(
                f"angular mode n={self.n} must be an even integer >= 2: an odd n would give rise "
                "to an off-center neck pinch, a coordinate singularity when the surface meets r = 0"
            )
        if not 0.0 < self.a0 < 1.0:
            raise ValueError(f"amplitude a0 must lie in (0, 1), got {self.a0}")
        if not self.z_a < self.z_b:
            raise ValueError(f"need z_a < z_b, got ({self.z_a}, {self.z_b})")


@dataclass(frozen=True)
class InitialSurface:
    """Everything build_patches produced, kept together for later reference."""

    params: FlowParams
    bowl: BowlProfile
    z_r1: float
    cart: CartesianPatch
    cyl: CylindricalPatch


def unperturbed_height(rho, params: FlowParams, bowl: BowlProfile, corner_cap: float | None = 0.98):
    """Radial profile z(rho) of the unperturbed surface, including the corner extension."""
    rho = np.asarray(rho, dtype=float)
    z_r1 = float(bowl.z_at(params.r1))
    out = np.empty_like(rho)
    core = rho < params.r1
    out[core] = bowl.z_at(rho[core])
    r_cap = params.r0 if corner_cap is None else corner_cap * params.r0
    mid = ~core & (rho < r_cap)
    out[mid] = tail_z(rho[mid], params, z_r1)
    far = ~core & ~mid
    if far.any():
        if corner_cap is None:
            raise DomainError(
                f"{int(far.sum())} nodes lie at r >= r0 = {params.r0:.6g} where the tail is undefined"
            )
        out[far] = tail_z(r_cap, params, z_r1) + tail_slope(r_cap, params) * (rho[far] - r_cap)
    return out


def build_patches(
    params: FlowParams,
    Nx: int = 64,
    Ny: int = 64,
    Nz: int = 128,
    Ntheta: int = 64,
    z_max: float | None = None,
    z_min: float | None = None,
    L: float | None = None,
    corner_cap: float | None = 0.98,
    bowl: BowlProfile | None = None,
) -> InitialSurface:
    """Sample the unperturbed surface onto a square of side 10 r1 and a cylinder patch.

    Square corners that reach past the capped radius ``corner_cap * r0`` are
    filled by continuing the tail linearly along each ray. The cylinder's z_min
    defaults to the height at radius 0.35 L/2, and z_max to the height at 0.95 r0.
    """
    bowl = bowl or integrate_bowl(params)
    z_r1 = float(bowl.z_at(params.r1))
    L = 10.0 * params.r1 if L is None else L
    x = np.linspace(-0.5 * L, 0.5 * L, Nx)
    y = np.linspace(-0.5 * L, 0.5 * L, Ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    Z = unperturbed_height(np.hypot(X, Y), params, bowl, corner_cap)
    cart = CartesianPatch(L, Z, 0.0)

    if z_min is None:
        z_min = float(tail_z(0.35 * 0.5 * L, params, z_r1))
    if z_max is None:
        z_max = float(tail_z(0.95 * params.r0, params, z_r1))
    if z_min < z_r1:
        raise DomainError(f"z_min={z_min:.6g} lies below the tail start z(r1)={z_r1:.6g}")
    zs = np.linspace(z_min, z_max, Nz)
    r_col = tail_r(zs, params, z_r1)
    cyl = CylindricalPatch(z_min, z_max, np.repeat(r_col[:, None], Ntheta, axis=1), 0.0)
    return InitialSurface(params=params, bowl=bowl, z_r1=z_r1, cart=cart, cyl=cyl)


def apply_near(cart: CartesianPatch, p: NearPerturbation) -> CartesianPatch:
    """z -> z + a0 (1 + a1 x y)(r^2 - r_m^2) inside r < r_m."""
    if not p.r_m < 0.5 * cart.L:
        raise ValueError(f"r_m={p.r_m:.6g} must be smaller than L/2={0.5 * cart.L:.6g}")
    X, Y = cart.mesh()
    R2 = X * X + Y * Y
    inside = R2 < p.r_m**2
    z = cart.z.copy()
    z[inside] += p.a0 * (1.0 + p.a1 * X[inside] * Y[inside]) * (R2[inside] - p.r_m**2)
    return cart.with_values(z)


def far_factor(z, theta, p: FarPerturbation):
    """F = (1 + cos(n theta)/4) sin(pi (z - z_b) / (z_a - z_b))."""
    return (1.0 + 0.25 * np.cos(p.n * theta)) * np.sin(math.pi * (z - p.z_b) / (p.z_a - p.z_b))


def apply_far(cyl: CylindricalPatch, p: FarPerturbation) -> CylindricalPatch:
    """r -> r (1 - a0 F^2) on rows with z_a < z < z_b."""
    if not (cyl.z_min < p.z_a and p.z_b < cyl.z_max):
        raise ValueError(
            f"perturbation interval ({p.z_a}, {p.z_b}) must lie inside ({cyl.z_min:.6g}, {cyl.z_max:.6g})"
        )
    zs = cyl.z
    rows = (zs > p.z_a) & (zs < p.z_b)
    Zg, Th = np.meshgrid(zs[rows], cyl.theta, indexing="ij")
    F = far_factor(Zg, Th, p)
    r = cyl.r.copy()
    r[rows] = r[rows] * (1.0 - p.a0 * F * F)
    if r.min() <= 0.0:
        raise ValueError(f"a0={p.a0} drives the radius non-positive")
    return cyl.with_values(r)
