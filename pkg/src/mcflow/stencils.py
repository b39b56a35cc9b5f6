"""Second-order centred differences on both patch types.

Derivatives are evaluated per node on demand; nothing is cached. Boundary
rows of either patch are never differenced.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grids import CartesianPatch, CylindricalPatch


@dataclass(frozen=True)
class CylDerivs:
    r_z: float
    r_theta: float
    r_zz: float
    r_thetatheta: float
    r_ztheta: float


@dataclass(frozen=True)
class CartDerivs:
    z_x: float
    z_y: float
    z_xx: float
    z_yy: float
    z_xy: float


def cyl_derivs(patch: CylindricalPatch, i: int, k: int) -> CylDerivs:
    """Centred differences of r at node (i, k); k wraps modulo Ntheta."""
    nz, nth = patch.r.shape
    if not 1 <= i <= nz - 2:
        raise IndexError(f"axial index {i} is on or beyond the boundary (valid 1..{nz - 2})")
    r = patch.r
    dz = patch.dz
    dth = patch.dtheta
    k = k % nth
    kp = (k + 1) % nth
    km = (k - 1) % nth
    return CylDerivs(
        r_z=(r[i + 1, k] - r[i - 1, k]) / (2.0 * dz),
        r_theta=(r[i, kp] - r[i, km]) / (2.0 * dth),
        r_zz=(r[i + 1, k] + r[i - 1, k] - 2.0 * r[i, k]) / (dz * dz),
        r_thetatheta=(r[i, kp] + r[i, km] - 2.0 * r[i, k]) / (dth * dth),
        r_ztheta=((r[i + 1, kp] + r[i - 1, km]) - (r[i + 1, km] + r[i - 1, kp])) / (4.0 * dz * dth),
    )


def cart_derivs(patch: CartesianPatch, i: int, k: int) -> CartDerivs:
    """Centred differences of z at interior node (i, k)."""
    nx, ny = patch.z.shape
    if not (1 <= i <= nx - 2 and 1 <= k <= ny - 2):
        raise IndexError(f"node ({i}, {k}) is on or beyond the square's boundary")
    z = patch.z
    dx = patch.dx
    dy = patch.dy
    return CartDerivs(
        z_x=(z[i + 1, k] - z[i - 1, k]) / (2.0 * dx),
        z_y=(z[i, k + 1] - z[i, k - 1]) / (2.0 * dy),
        z_xx=(z[i + 1, k] + z[i - 1, k] - 2.0 * z[i, k]) / (dx * dx),
        z_yy=(z[i, k + 1] + z[i, k - 1] - 2.0 * z[i, k]) / (dy * dy),
        z_xy=((z[i + 1, k + 1] + z[i - 1, k - 1]) - (z[i + 1, k - 1] + z[i - 1, k + 1])) / (4.0 * dx * dy),
    )
