"""Curvature, neck and angular-mode diagnostics, plus blowup-rate fits.

Tip curvature is the norm of the second fundamental form |A| on the square
patch. The neck is the smallest radius on the cylinder patch. Blowup fits
estimate the singular time T and the power p in |A| ~ (T - t)^-p or
r_min ~ (T - t)^p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .errors import FitRejected
from .grids import CartesianPatch, CylindricalPatch, measure_overlap_mismatch
from .stencils import cart_derivs

TYPE_I = "type-I"
TYPE_II = "type-II"
INCONCLUSIVE = "inconclusive"

# Final-window slope bands of log((T - t) sup|A|) against log(T - t).
TYPE_I_MIN_SLOPE = -0.05
TYPE_II_MAX_SLOPE = -0.2


@dataclass(frozen=True)
class CurvatureSample:
    H: float
    K_gauss: float
    A_norm: float


def curvature_cartesian(patch: CartesianPatch, i: int, k: int) -> CurvatureSample:
    """Mean curvature, Gauss curvature and |A| of the graph at an interior node.

    Sign convention: a sphere cap z = -sqrt(R^2 - rho^2) has H = 2/R > 0.
    """
    d = cart_derivs(patch, i, k)
    w2 = 1.0 + d.z_x**2 + d.z_y**2
    H = ((1.0 + d.z_y**2) * d.z_xx - 2.0 * d.z_x * d.z_y * d.z_xy + (1.0 + d.z_x**2) * d.z_yy) / w2**1.5
    K = (d.z_xx * d.z_yy - d.z_xy**2) / (w2 * w2)
    return CurvatureSample(float(H), float(K), math.sqrt(max(H * H - 2.0 * K, 0.0)))


def curvature_fields(patch: CartesianPatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """H, K and |A| on all interior nodes (perimeter entries are zero)."""
    H = np.zeros(patch.z.shape)
    K = np.zeros(patch.z.shape)
    A = np.zeros(patch.z.shape)
    kern.cart_curvature_fields(patch.z, patch.dx, patch.dy, H, K, A)
    return H, K, A


@dataclass(frozen=True)
class TipCurvature:
    value: float
    i: int
    k: int
    x: float
    y: float


def tip_curvature(patch: CartesianPatch) -> TipCurvature:
    """Largest |A| over the square's interior, with its location."""
    _, _, A = curvature_fields(patch)
    j = int(np.argmax(A))
    i, k = divmod(j, patch.Ny)
    return TipCurvature(float(A[i, k]), i, k, float(patch.x[i]), float(patch.y[k]))


@dataclass(frozen=True)
class NeckInfo:
    z_neck: float
    r_min: float
    i: int
    k: int


def neck_scan(patch: CylindricalPatch, z_range: tuple[float, float] | None = None) -> NeckInfo:
    """Smallest radius on the patch (optionally within an axial window); ties go to smaller z."""
    zs = patch.z
    rows = np.arange(patch.Nz)
    if z_range is not None:
        rows = rows[(zs >= z_range[0]) & (zs <= z_range[1])]
        if rows.size == 0:
            raise ValueError(f"no cylinder rows inside z window {z_range}")
    sub = patch.r[rows]
    j = int(np.argmin(sub))
    i_local, k = divmod(j, patch.Ntheta)
    i = int(rows[i_local])
    return NeckInfo(float(zs[i]), float(patch.r[i, k]), i, k)


@dataclass(frozen=True)
class ModeAmplitudes:
    """Fourier coefficients of r on one circle: r ~ a0 + sum a_m cos(m theta) + b_m sin(m theta)."""

    z: float
    a: np.ndarray
    b: np.ndarray

    def ratio(self, m: int) -> float:
        return math.hypot(self.a[m], self.b[m]) / abs(self.a[0])


def mode_amplitudes(patch: CylindricalPatch, z: float, M: int) -> ModeAmplitudes:
    """Discrete Fourier amplitudes a_m, b_m (m = 0..M) on the row nearest z; a_0 is the mean."""
    n = patch.Ntheta
    if M < 0 or n < 2 * M + 2:
        raise ValueError(f"M={M} needs Ntheta >= {2 * M + 2}, have {n}")
    i = int(np.clip(np.rint((z - patch.z_min) / patch.dz), 0, patch.Nz - 1))
    spec = np.fft.rfft(patch.r[i])
    a = 2.0 * spec.real[: M + 1] / n
    b = -2.0 * spec.imag[: M + 1] / n
    a[0] *= 0.5
    b[0] = 0.0
    return ModeAmplitudes(float(patch.z[i]), a, b)


@dataclass
class DiagnosticsSeries:
    """Per-hook records of the scalar diagnostics; mode columns are a0, a1, b1, ..., aM, bM."""

    M: int = 4
    t: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    tip_A: list[float] = field(default_factory=list)
    r_min: list[float] = field(default_factory=list)
    z_neck: list[float] = field(default_factory=list)
    mismatch: list[float] = field(default_factory=list)
    modes: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def append(self, t, dt, tip_A, r_min, z_neck, mismatch, modes=None) -> None:
        if self.t and not t > self.t[-1]:
            raise ValueError(f"series times must increase strictly ({t} after {self.t[-1]})")
        if modes is None:
            modes = np.full(2 * self.M + 1, np.nan)
        modes = np.asarray(modes, dtype=float)
        if modes.shape != (2 * self.M + 1,):
            raise ValueError(f"expected {2 * self.M + 1} mode columns, got {modes.shape}")
        self.t.append(float(t))
        self.dt.append(float(dt))
        self.tip_A.append(float(tip_A))
        self.r_min.append(float(r_min))
        self.z_neck.append(float(z_neck))
        self.mismatch.append(float(mismatch))
        self.modes.append(modes)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def mode_matrix(self) -> np.ndarray:
        if not self.modes:
            return np.zeros((0, 2 * self.M + 1))
        return np.vstack(self.modes)

    def mode_ratio(self, m: int) -> np.ndarray:
        """|(a_m, b_m)| / |a_0| per row."""
        mm = self.mode_matrix()
        return np.hypot(mm[:, 2 * m - 1], mm[:, 2 * m]) / np.abs(mm[:, 0])


def pack_modes(amps: ModeAmplitudes) -> np.ndarray:
    out = [amps.a[0]]
    for m in range(1, len(amps.a)):
        out += [amps.a[m], amps.b[m]]
    return np.array(out)


class DiagnosticsRecorder:
    """Run hook appending one series row per call.

    ``neck_window`` restricts the neck search to an axial band (used for
    far-class runs so that the z_min circle near the tip is not mistaken for the
    neck). Mode amplitudes are taken on the circle at z_neck.
    """

    def __init__(self, M: int = 4, neck_window: tuple[float, float] | None = None, mismatch_samples: int = 64):
        self.series = DiagnosticsSeries(M=M)
        self.neck_window = neck_window
        self.mismatch_samples = mismatch_samples

    def __call__(self, state) -> None:
        tip = tip_curvature(state.cart).value if state.cart is not None else math.nan
        if state.cyl is not None:
            window = self.neck_window
            if window is not None and not (window[0] >= state.cyl.z_min and window[1] <= state.cyl.z_max):
                window = (max(window[0], state.cyl.z_min), min(window[1], state.cyl.z_max))
            neck = neck_scan(state.cyl, window)
            modes = pack_modes(mode_amplitudes(state.cyl, neck.z_neck, self.series.M))
            r_min, z_neck = neck.r_min, neck.z_neck
        else:
            modes, r_min, z_neck = None, math.nan, math.nan
        if state.cart is not None and state.cyl is not None:
            mismatch = measure_overlap_mismatch(state.cart, state.cyl, self.mismatch_samples)
            state.overlap.last_mismatch = mismatch
        else:
            mismatch = math.nan
        self.series.append(state.t, state.dt_last, tip, r_min, z_neck, mismatch, modes)


@dataclass(frozen=True)
class BlowupFit:
    channel: str
    exponent: float
    T_est: float
    residual: float
    window: tuple[float, float]
    n_rows: int

    def __post_init__(self) -> None:
        if not self.window[0] < self.window[1] <= self.T_est:
            raise ValueError(f"fit window {self.window} inconsistent with T_est={self.T_est}")


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares y = a + b x; returns (a, b, rms residual)."""
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res * res)))


def _golden_min(f, lo: float, hi: float, rtol: float = 1e-13, max_iter: int = 300) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= rtol * (abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _check_trend(values: np.ndarray, increasing: bool, tol: float = 0.1) -> None:
    """Reject data that reverses its trend by more than ``tol`` relative."""
    v = values if increasing else -values
    running = np.maximum.accumulate(v)
    if np.any(v < running - tol * np.abs(running)):
        raise FitRejected("channel data is not monotone in the fit window")


def _series_arrays(series: DiagnosticsSeries, channel: str) -> tuple[np.ndarray, np.ndarray]:
    if channel not in ("tip", "neck"):
        raise ValueError(f"channel must be 'tip' or 'neck', got {channel!r}")
    t = series.column("t")
    y = series.column("tip_A" if channel == "tip" else "r_min")
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    good = np.isfinite(y) & (y > 0)
    return t[good], y[good]


def _decade_window(t: np.ndarray, T: float, decades: float = 1.0) -> np.ndarray:
    """Rows spanning at least ``decades`` of (T - t) back from the last row."""
    s = T - t
    sel = s <= s[-1] * 10.0**decades
    first = int(np.argmax(sel))
    if first > 0:
        sel[first - 1] = True  # one row past the boundary so the span is never short
    return sel


def fit_blowup(
    series: DiagnosticsSeries,
    channel: str,
    T_hint: float | None = None,
    *,
    window: tuple[float, float] | None = None,
    drop_last: int = 5,
    min_rows: int = 20,
) -> BlowupFit:
    """Fit a power-law blowup to the tip-curvature or neck-radius history.

    neck: r_min^2 is fitted linearly in t, T_est is its zero, and the exponent is
    the slope of log r_min against log(T_est - t).
    tip: T_est minimises the residual of a straight-line fit of log |A| against
    log(T_est - t) (golden-section search near T_hint); exponent = -slope.
    Without an explicit window the last decade of (T_est - t) is used, with the
    final ``drop_last`` rows excluded.
    """
    t_all, y_all = _series_arrays(series, channel)
    if window is not None:
        keep = (t_all >= window[0]) & (t_all <= window[1])
        t_all, y_all = t_all[keep], y_all[keep]
    elif drop_last and len(t_all) > drop_last + min_rows:
        t_all, y_all = t_all[:-drop_last], y_all[:-drop_last]
    if len(t_all) < min_rows:
        raise FitRejected(f"need at least {min_rows} rows to fit, have {len(t_all)}")

    if channel == "neck":
        def fit_T(t, y):
            a, b, _ = _linfit(t, y * y)
            if not b < 0.0:
                raise FitRejected("r_min^2 is not decreasing in the fit window")
            return -a / b
        half = len(t_all) // 2
        T_est = fit_T(t_all[half:], y_all[half:])
        t, y = t_all, y_all
        if window is None:
            for _ in range(3):
                sel = _decade_window(t_all, T_est)
                if sel.sum() < min_rows:
                    sel = np.zeros_like(sel)
                    sel[-min_rows:] = True
                t, y = t_all[sel], y_all[sel]
                T_est = fit_T(t, y)
        _check_trend(y, increasing=False)
        s = T_est - t
        if np.any(s <= 0.0):
            raise FitRejected("estimated singular time precedes fitted data")
        _, slope, resid = _linfit(np.log(s), np.log(y))
        exponent = slope
    else:
        if window is None:
            # drop the early transient: keep the final rise after the last minimum
            start = int(np.argmin(y_all))
            if len(t_all) - start >= min_rows:
                t_all, y_all = t_all[start:], y_all[start:]
        t_hi = t_all[-1]
        span = t_hi - t_all[0]

        def residual_at(T, t, y):
            return _linfit(np.log(T - t), np.log(y))[2]

        def optimise(t, y, centre):
            ahead = centre - t[-1] if centre is not None and centre > t[-1] else span
            lo = t[-1] + 1e-9 * ahead
            hi = t[-1] + 4.0 * ahead
            return _golden_min(lambda T: residual_at(T, t, y), lo, hi)

        T_est = optimise(t_all, y_all, T_hint)
        t, y = t_all, y_all
        if window is None:
            for _ in range(3):
                sel = _decade_window(t_all, T_est)
                if sel.sum() < min_rows:
                    sel = np.zeros_like(sel)
                    sel[-min_rows:] = True
                t, y = t_all[sel], y_all[sel]
                T_est = optimise(t, y, T_est)
            sel = _decade_window(t_all, T_est)
            if sel.sum() >= min_rows:
                t, y = t_all[sel], y_all[sel]
        _check_trend(y, increasing=True)
        _, slope, resid = _linfit(np.log(T_est - t), np.log(y))
        exponent = -slope
    return BlowupFit(channel, float(exponent), float(T_est), float(resid), (float(t[0]), float(t[-1])), len(t))


def q_slope(series: DiagnosticsSeries, fit: BlowupFit) -> float:
    """Slope of log((T_est - t) sup|A|) against log(T_est - t) over the fit window."""
    t, y = _series_arrays(series, fit.channel)
    sel = (t >= fit.window[0]) & (t <= fit.window[1]) & (t < fit.T_est)
    t, y = t[sel], y[sel]
    proxy = y if fit.channel == "tip" else 1.0 / y
    s = fit.T_est - t
    return _linfit(np.log(s), np.log(s * proxy))[1]


def classify(series: DiagnosticsSeries, fit: BlowupFit) -> str:
    """type-I if (T - t) sup|A| stays bounded, type-II if it grows, else inconclusive.

    The neck channel uses 1/r_min as the sup|A| proxy (exact on a round cylinder).
    """
    slope = q_slope(series, fit)
    if slope >= TYPE_I_MIN_SLOPE:
        return TYPE_I
    if slope <= TYPE_II_MAX_SLOPE:
        return TYPE_II
    return INCONCLUSIVE
