"""CSV snapshots of both patches and the diagnostics time series.

Numbers are written with 17 significant digits so every double survives a
write/read round trip exactly.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsSeries
from .grids import CartesianPatch, CylindricalPatch

FMT = "%.17g"
CART_HEADER = "t,x,y,z"
CYL_HEADER = "t,z,theta,r"


def _write(path: Path, header: str, table: np.ndarray) -> Path:
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(header + "\n")
            if table.size:
                np.savetxt(fh, table, fmt=FMT, delimiter=",")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc.strerror or exc}") from exc
    return path


def _read(path: Path, header: str) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        first = fh.readline().strip()
        if first != header:
            raise ValueError(f"{path}: expected header {header!r}, found {first!r}")
        data = _load_rows(fh, len(header.split(",")))
    return data


def _load_rows(fh, ncols: int) -> np.ndarray:
    rows = fh.read()
    if not rows.strip():
        return np.zeros((0, ncols))
    return np.loadtxt(io.StringIO(rows), delimiter=",", ndmin=2)


def cart_table(patch: CartesianPatch) -> np.ndarray:
    X, Y = patch.mesh()
    return np.column_stack([np.full(X.size, patch.t), X.ravel(), Y.ravel(), patch.z.ravel()])


def cyl_table(patch: CylindricalPatch) -> np.ndarray:
    Z, TH = np.meshgrid(patch.z, patch.theta, indexing="ij")
    return np.column_stack([np.full(Z.size, patch.t), Z.ravel(), TH.ravel(), patch.r.ravel()])


def write_snapshot(state, directory, index: int) -> list[Path]:
    """Write cart_<index>.csv and cyl_<index>.csv (whichever patches exist)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    if state.cart is not None:
        paths.append(_write(directory / f"cart_{index}.csv", CART_HEADER, cart_table(state.cart)))
    if state.cyl is not None:
        paths.append(_write(directory / f"cyl_{index}.csv", CYL_HEADER, cyl_table(state.cyl)))
    return paths


def _leading_run(col: np.ndarray) -> int:
    """Length of the initial run of equal values in a row-major coordinate column."""
    change = np.nonzero(col != col[0])[0]
    return int(change[0]) if change.size else col.size


def read_cart_snapshot(path) -> CartesianPatch:
    data = _read(path, CART_HEADER)
    ny = _leading_run(data[:, 1])
    nx = data.shape[0] // ny
    if nx * ny != data.shape[0]:
        raise ValueError(f"{path}: row count {data.shape[0]} is not a full grid")
    L = -2.0 * data[0, 1]
    return CartesianPatch(L, data[:, 3].reshape(nx, ny), float(data[0, 0]))


def read_cyl_snapshot(path) -> CylindricalPatch:
    data = _read(path, CYL_HEADER)
    nth = _leading_run(data[:, 1])
    nz = data.shape[0] // nth
    if nz * nth != data.shape[0]:
        raise ValueError(f"{path}: row count {data.shape[0]} is not a full grid")
    return CylindricalPatch(float(data[0, 1]), float(data[-1, 1]), data[:, 3].reshape(nz, nth), float(data[0, 0]))


def series_header(M: int) -> str:
    cols = ["t", "dt", "tip_A", "r_min", "z_neck", "mismatch", "a0"]
    for m in range(1, M + 1):
        cols += [f"a{m}", f"b{m}"]
    return ",".join(cols)


def write_series(series: DiagnosticsSeries, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = len(series)
    table = np.column_stack(
        [series.column(c) for c in ("t", "dt", "tip_A", "r_min", "z_neck", "mismatch")]
        + [series.mode_matrix()]
    ) if n else np.zeros((0, 7 + 2 * series.M))
    return _write(directory / "series.csv", series_header(series.M), table)


def read_series(path) -> DiagnosticsSeries:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        n_modes = len(header) - 6
        if n_modes < 1 or n_modes % 2 == 0:
            raise ValueError(f"{path}: malformed series header")
        M = (n_modes - 1) // 2
        if header != series_header(M).split(","):
            raise ValueError(f"{path}: unexpected series header {','.join(header)}")
        data = _load_rows(fh, len(header))
    series = DiagnosticsSeries(M=M)
    for row in data:
        series.append(*row[:6], modes=row[6:])
    return series
