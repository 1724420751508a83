import numpy as np
import pytest

from majorant.kernels import inverse_square_kernel, tabulated_kernel
from majorant.lattice import LatticeGeometry, single_mode

# Independent reference values, computed once with mpmath at 30 digits
# from Gamma-function closed forms and frozen here.
RIESZ_N2_A12 = 27.4844928468641413  # |xi|^-1.2 * |xi|^-1.2 in R^2 at |xi| = 1
PI_CUBED = 31.0062766802998202  # |xi|^-2 * |xi|^-2 in R^3 at |xi| = 1
RIESZ_N2_A15 = 27.5007432720814913  # |xi|^-1.5 * |xi|^-1.5 in R^2 at |xi| = 1
INV_SQ_M = 0.126987271868481940  # 2 (2 pi)^-3/2
INV_SQ_SPLIT_LIMIT = 0.0727839191225717677  # 4 pi^-7/2
GAUSS_BESOV_P2_N3 = 0.870490357106960637  # sup_t t^(a/2) (pi/(2(1+t)))^(3/4), a in {0.5, 1}
EMBED_C_N3_T05 = 2.76119135858722657


@pytest.fixture(scope="session")
def isq():
    return inverse_square_kernel()


@pytest.fixture(scope="session")
def small_geometry():
    return LatticeGeometry(3, 1.0, 4.0)


@pytest.fixture(scope="session")
def packet(isq):
    g = LatticeGeometry(3, 1.0, 8.0)
    return single_mode(g, isq, (0, 1, 2), 0.5)


def log_singular_candidate(n, theta, c=1.0):
    """log h = c/r^2 - theta log r: |xi|^theta h blows up at the origin."""
    r = np.logspace(-6, 3, 2000)
    return tabulated_kernel(n, r, theta, log_values=c / r**2 - theta * np.log(r))


def broken_power_candidate(a_in=1.1, a_out=3.0, dim=2, theta=1.0):
    r = np.logspace(-6, 3, 2000)
    lv = np.where(r <= 1, -a_in * np.log(r), -a_out * np.log(r))
    return tabulated_kernel(dim, r, theta, log_values=lv)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.TITLES):
        if num not in mod.RESULTS:
            continue
        status = "PASS" if mod.RESULTS[num] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {status}  {mod.TITLES[num]}")
