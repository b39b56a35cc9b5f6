import math

import numpy as np
import pytest

from mcflow.grids import CartesianPatch, CylindricalPatch

PARAB_A = 10.0


def paraboloid_pair(nx=65, nz=129, ntheta=64, L=0.4, z_min=0.04, z_max=2.0, a=PARAB_A):
    """Square and cylinder patches sampled from z = a * rho^2 (so r = sqrt(z / a))."""
    x = np.linspace(-L / 2, L / 2, nx)
    X, Y = np.meshgrid(x, x, indexing="ij")
    cart = CartesianPatch(L, a * (X * X + Y * Y))
    zs = np.linspace(z_min, z_max, nz)
    cyl = CylindricalPatch(z_min, z_max, np.repeat(np.sqrt(zs / a)[:, None], ntheta, axis=1))
    return cart, cyl


def cart_from(f, L, n, t=0.0):
    x = np.linspace(-L / 2, L / 2, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return CartesianPatch(L, f(X, Y), t)


def cyl_from(f, z_min, z_max, nz, ntheta, t=0.0):
    zs = np.linspace(z_min, z_max, nz)
    th = np.arange(ntheta) * (2 * math.pi / ntheta)
    Z, TH = np.meshgrid(zs, th, indexing="ij")
    return CylindricalPatch(z_min, z_max, f(Z, TH), t)


@pytest.fixture(scope="session")
def default_params():
    from mcflow.initial_data import derive_params

    return derive_params()


@pytest.fixture(scope="session")
def default_surface(default_params):
    from mcflow.initial_data import build_patches

    return build_patches(default_params)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
