"""Mean curvature flow right-hand sides and the explicit time stepper.

Both patches advance together by forward Euler with a CFL-limited step. The
far end of the cylinder follows the round-cylinder law dr/dt = -1/r; the
inner boundaries are refreshed by boundary exchange after every step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from . import _kernels as kern
from .errors import GeometryError, NumericalBlowup, OverlapViolation, RegridError, SingularityReached
from .grids import CartesianPatch, CylindricalPatch, OverlapState, perimeter_indices, settle_overlap
from .stencils import cart_derivs, cyl_derivs

logger = logging.getLogger(__name__)

DEFAULT_SAFETY = 0.1
R_SINGULAR_FLOOR = 1e-8

CartBoundary = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
Hook = Callable[["FlowState"], None]


@dataclass(frozen=True)
class FlowState:
    """Both patches at a common time. Either patch may be absent for single-patch runs."""

    cart: Optional[CartesianPatch]
    cyl: Optional[CylindricalPatch]
    t: float = 0.0
    step_count: int = 0
    dt_last: float = math.nan
    overlap: OverlapState = field(default_factory=OverlapState)

    def __post_init__(self) -> None:
        if self.cart is None and self.cyl is None:
            raise ValueError("a flow state needs at least one patch")
        for p in (self.cart, self.cyl):
            if p is not None and p.t != self.t:
                raise ValueError(f"patch time {p.t} differs from state time {self.t}")


@dataclass(frozen=True)
class StopCriteria:
    r_min_floor: float = 0.0
    curvature_ceiling: float = math.inf
    t_max: float = math.inf
    max_steps: int = 10**9

    def __post_init__(self) -> None:
        if self.r_min_floor < 0.0 or not self.curvature_ceiling > 0.0 or not self.t_max > 0.0:
            raise ValueError("stop thresholds must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")


@dataclass
class RunResult:
    state: FlowState
    reason: str
    message: str = ""
    wall_time: float = 0.0


def rhs_cylindrical(patch: CylindricalPatch, i: int, k: int, r_floor: float = R_SINGULAR_FLOOR) -> float:
    """dr/dt at interior node (i, k) of the cylinder patch."""
    r = float(patch.r[i, k % patch.Ntheta])
    if r <= r_floor:
        raise SingularityReached(f"r={r:.3g} at node ({i}, {k}) is at or below the floor {r_floor:.3g}")
    d = cyl_derivs(patch, i, k)
    num = ((1.0 + d.r_z**2) * d.r_thetatheta + (r * r + d.r_theta**2) * d.r_zz
           - 2.0 * d.r_theta * d.r_z * d.r_ztheta - d.r_theta**2 / r)
    den = d.r_theta**2 + r * r * (1.0 + d.r_z**2)
    return float(num / den - 1.0 / r)


def rhs_cartesian(patch: CartesianPatch, i: int, k: int) -> float:
    """dz/dt at interior node (i, k) of the square patch."""
    d = cart_derivs(patch, i, k)
    num = (1.0 + d.z_y**2) * d.z_xx + (1.0 + d.z_x**2) * d.z_yy - 2.0 * d.z_x * d.z_y * d.z_xy
    return float(num / (1.0 + d.z_x**2 + d.z_y**2))


def rhs_cylindrical_field(patch: CylindricalPatch, r_floor: float = R_SINGULAR_FLOOR) -> np.ndarray:
    """dr/dt on every interior row (boundary rows left as NaN)."""
    out = np.full(patch.r.shape, np.nan)
    bad = kern.cyl_rhs_all(patch.r, patch.dz, patch.dtheta, r_floor, out)
    if bad >= 0:
        i, k = divmod(bad, patch.Ntheta)
        raise SingularityReached(f"r at node ({i}, {k}) is at or below the floor {r_floor:.3g}")
    return out


def rhs_cartesian_field(patch: CartesianPatch) -> np.ndarray:
    """dz/dt on every interior node (perimeter left as NaN)."""
    out = np.full(patch.z.shape, np.nan)
    kern.cart_rhs_all(patch.z, patch.dx, patch.dy, out)
    return out


def cfl_dt(state: FlowState, safety: float = DEFAULT_SAFETY) -> float:
    """safety * min(dx^2, dy^2, dz^2, (r_min dtheta)^2) over the patches present."""
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    bounds = []
    if state.cart is not None:
        bounds += [state.cart.dx**2, state.cart.dy**2]
    if state.cyl is not None:
        r_min = float(state.cyl.r.min())
        if r_min <= 0.0:
            raise SingularityReached(f"minimum radius {r_min:.3g} is not positive")
        bounds += [state.cyl.dz**2, (r_min * state.cyl.dtheta) ** 2]
    return safety * min(bounds)


def _check_finite(a: np.ndarray, name: str, t: float) -> None:
    j = kern.first_nonfinite(a)
    if j >= 0:
        raise NumericalBlowup(name, tuple(int(v) for v in np.unravel_index(j, a.shape)), t)


def step(
    state: FlowState,
    safety: float = DEFAULT_SAFETY,
    *,
    dt_max: float = math.inf,
    cart_boundary: CartBoundary | None = None,
    r_floor: float = R_SINGULAR_FLOOR,
) -> FlowState:
    """Advance both patches by one forward-Euler step.

    With both patches present the square's perimeter and the cylinder's z_min
    row come from boundary exchange (regridding when the overlap degrades). A
    lone cylinder evolves both end rows by dr/dt = -1/r; a lone square keeps
    its perimeter fixed unless ``cart_boundary(t, x, y)`` supplies values.
    """
    dt = min(cfl_dt(state, safety), dt_max)
    t_new = state.t + dt
    cart = state.cart
    cyl = state.cyl

    if cyl is not None:
        r_old = cyl.r
        r_new = r_old.copy()
        bad = kern.euler_cyl(r_old, cyl.dz, cyl.dtheta, r_floor, dt, r_new)
        if bad >= 0:
            i, k = divmod(bad, cyl.Ntheta)
            raise SingularityReached(f"r={r_old[i, k]:.3g} at node ({i}, {k}) reached the floor")
        ends = [-1] if cart is not None else [0, -1]
        for row in ends:
            r_new[row] = r_old[row] - dt / r_old[row]
        _check_finite(r_new, "cylindrical", t_new)
        if r_new.min() <= r_floor:
            raise SingularityReached(f"minimum radius {r_new.min():.3g} reached the floor after the step")

    if cart is not None:
        z_new = cart.z.copy()
        kern.euler_cart(cart.z, cart.dx, cart.dy, dt, z_new)
        if cyl is None and cart_boundary is not None:
            ii, kk = perimeter_indices(cart.Nx, cart.Ny)
            z_new[ii, kk] = cart_boundary(t_new, cart.x[ii], cart.y[kk])
        _check_finite(z_new, "Cartesian", t_new)

    new_cart = cart.with_values(z_new, t_new) if cart is not None else None
    new_cyl = cyl.with_values(r_new, t_new) if cyl is not None else None
    if new_cart is not None and new_cyl is not None:
        new_cart, new_cyl, _ = settle_overlap(new_cart, new_cyl, state.overlap)
    return replace(state, cart=new_cart, cyl=new_cyl, t=t_new, step_count=state.step_count + 1, dt_last=dt)


def settle(state: FlowState) -> FlowState:
    """Make the boundary values of a two-patch state consistent before stepping."""
    if state.cart is None or state.cyl is None:
        return state
    cart, cyl, _ = settle_overlap(state.cart, state.cyl, state.overlap)
    return replace(state, cart=cart, cyl=cyl)


def tip_curvature_value(cart: CartesianPatch) -> float:
    H = np.zeros(cart.z.shape)
    K = np.zeros(cart.z.shape)
    A = np.zeros(cart.z.shape)
    kern.cart_curvature_fields(cart.z, cart.dx, cart.dy, H, K, A)
    return float(A.max())


def run(
    state: FlowState,
    stop: StopCriteria,
    hooks: Iterable[Hook] = (),
    *,
    hook_every: int = 1,
    safety: float = DEFAULT_SAFETY,
    cart_boundary: CartBoundary | None = None,
    r_floor: float = R_SINGULAR_FLOOR,
    progress_every: float = 0.0,
) -> RunResult:
    """Step until a stop criterion fires or a step fails.

    Hooks run on the initial state, every ``hook_every`` steps, and on the
    final state. The result's reason is one of: max_steps, t_max,
    r_min_floor, curvature_ceiling, singularity, numerical_blowup,
    overlap_failure.
    """
    hooks = list(hooks)
    wall0 = time.perf_counter()
    last_log = wall0
    try:
        state = settle(state)
    except (OverlapViolation, RegridError, GeometryError) as exc:
        return RunResult(state, "overlap_failure", str(exc), time.perf_counter() - wall0)
    for h in hooks:
        h(state)
    last_hooked = state.step_count
    reason = ""
    message = ""
    while True:
        if state.step_count >= stop.max_steps:
            reason = "max_steps"
        elif state.t >= stop.t_max:
            reason = "t_max"
        elif state.cyl is not None and state.cyl.r.min() <= stop.r_min_floor:
            reason = "r_min_floor"
        elif (
            state.cart is not None
            and math.isfinite(stop.curvature_ceiling)
            and tip_curvature_value(state.cart) >= stop.curvature_ceiling
        ):
            reason = "curvature_ceiling"
        if reason:
            break
        try:
            state = step(
                state, safety, dt_max=stop.t_max - state.t, cart_boundary=cart_boundary, r_floor=r_floor
            )
        except SingularityReached as exc:
            reason, message = "singularity", str(exc)
            break
        except NumericalBlowup as exc:
            reason, message = "numerical_blowup", str(exc)
            break
        except (OverlapViolation, RegridError, GeometryError) as exc:
            reason, message = "overlap_failure", str(exc)
            break
        if state.step_count % hook_every == 0:
            for h in hooks:
                h(state)
            last_hooked = state.step_count
        if progress_every > 0.0:
            now = time.perf_counter()
            if now - last_log > progress_every:
                logger.info("step %d t=%.8g dt=%.3g", state.step_count, state.t, state.dt_last)
                last_log = now
    if last_hooked != state.step_count:
        for h in hooks:
            h(state)
    return RunResult(state, reason, message, time.perf_counter() - wall0)
