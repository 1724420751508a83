import math
from fractions import Fraction

import numpy as np
import pytest

from majorant.errors import PreconditionError
from majorant.kernels import exp_damped_kernel, inverse_square_kernel, power_law_kernel, tabulated_kernel
from majorant.probe import (LevelProfile, ball_integral, blowup_certificate, chain_C, chain_constants,
                            chain_sequence, origin_classify, rho)

from conftest import broken_power_candidate, log_singular_candidate


def dense_scan_rho(level, x, r):
    """Reference level radius: last grid radius before the running minimum drops to x."""
    run = np.minimum.accumulate(level(r))
    bad = np.flatnonzero(run <= x)
    if bad.size == 0:
        return math.inf
    return 0.0 if bad[0] == 0 else r[bad[0] - 1]


def test_rho_power_law_closed_form():
    assert rho(power_law_kernel(3, 2.0, 1.0), 1.0, 10) == pytest.approx(0.1, rel=1e-9)


@pytest.mark.parametrize("x", [0.01, 0.05, 0.1])
def test_rho_exponential_against_dense_scan(x):
    h = exp_damped_kernel()
    r = np.logspace(-9, 3, 1_000_000)
    ref = dense_scan_rho(lambda s: s * h.profile(s), x, r)
    got = rho(h, 1.0, x)
    assert got == pytest.approx(ref, rel=1e-4)
    assert got == pytest.approx(math.log(1 / (2 * math.pi * x)), rel=1e-9)


def test_rho_edge_cases():
    h = power_law_kernel(2, 1.0, 1.0)  # |xi| h = 1
    assert rho(h, 1.0, 0.5) == math.inf
    assert rho(h, 1.0, 2) == 0.0
    with pytest.raises(PreconditionError):
        rho(h, 1.0, 0)


def test_rho_accepts_huge_integers():
    h = log_singular_candidate(2, 1.0)
    prof = LevelProfile.build(h, 1.0)
    big = 2**4000
    # |xi| h = exp(1/r^2): rho(x) = (log x)^-1/2, up to the table's log-linear interpolation
    assert prof.rho(big) == pytest.approx((4000 * math.log(2)) ** -0.5, rel=1e-4)


def test_chain_constant_values():
    assert chain_C(3, 1.0) == pytest.approx(math.pi / 4, rel=1e-14)
    assert chain_C(2, 1.0) == pytest.approx(math.pi / 2, rel=1e-14)
    c = chain_constants(3, 1.5)
    assert c.C_prime == pytest.approx(2**1.5 * c.C)
    assert c.ball_integral_ratio == pytest.approx(2.0, rel=1e-10)
    assert ball_integral(3, 1.5) == pytest.approx(2 * c.C, rel=1e-10)


def test_chain_constants_precondition():
    with pytest.raises(PreconditionError):
        chain_constants(3, 1.0)
    with pytest.raises(PreconditionError):
        chain_C(2, 2.0)


@pytest.mark.parametrize("n,theta", [(2, 1.0), (2, 1.2), (3, 1.5), (3, 2.0)])
def test_chain_double_exponential_growth(n, theta):
    trace = chain_sequence(n, theta, log_singular_candidate(n, theta), 10)
    assert len(trace.entries) == 11
    for e in trace.entries:
        assert isinstance(e.x, Fraction)
        assert e.x >= 2 ** (2**e.k)
        assert e.double_exp_holds and e.bound_holds
    assert trace.x_increasing
    assert trace.rho_nonincreasing


def test_chain_premise_failure():
    with pytest.raises(PreconditionError, match="premise fails"):
        chain_sequence(2, 1.0, power_law_kernel(2, 1.0, 1.0), 4)


@pytest.mark.parametrize("a_in,a_out", [(1.05, 3.0), (1.1, 3.0), (1.3, 2.5), (1.5, 4.0)])
def test_broken_power_candidates_are_certified(a_in, a_out):
    cert = blowup_certificate(broken_power_candidate(a_in, a_out), 1.0, [1.0, 0.0], K=6)
    assert cert.verdict == "certificate_of_violation"
    assert cert.k is not None and cert.k <= 6


@pytest.mark.parametrize("xi0", [[1.0, 0, 0], [0, 0.1, 0], [3.0, 4.0, 0], [0, 0, 50.0]])
def test_inverse_square_is_never_certified(xi0):
    assert blowup_certificate(inverse_square_kernel(), 1.0, xi0, K=6).verdict == "inconclusive"


def test_divergent_candidate_certified_immediately():
    cert = blowup_certificate(power_law_kernel(2, 2.0, 2.0), 2.0, [1.0, 0.0])
    assert cert.verdict == "certificate_of_violation"
    assert cert.route == "divergent_convolution"


def test_origin_classification():
    r = np.logspace(-9, 2, 400)
    finite = tabulated_kernel(2, r, 1.0, values=r**-1.0)
    rep = origin_classify(finite, 1.0)
    assert rep.cls == "finite_positive"
    assert rep.estimate == pytest.approx(1.0, rel=1e-6)
    assert "cannot satisfy" in rep.note
    # |xi| h = pi^-3 / |xi| for the inverse-square kernel
    assert origin_classify(inverse_square_kernel(), 1.0).cls == "infinite"
    assert origin_classify(inverse_square_kernel(), 2.0).cls == "finite_positive"
    assert origin_classify(power_law_kernel(3, 1.0, 1.5), 1.5).cls == "zero"
    assert origin_classify(power_law_kernel(3, 2.5, 1.5), 1.5).cls == "infinite"


def test_halving_fails_when_rate_exceeds_square():
    # exp(1/r^2) r^-2.5 in R^3: lambda(2) = C log 2 > 4, so rho(x1) < rho(x0) / 2
    trace = chain_sequence(3, 2.5, log_singular_candidate(3, 2.5), 3)
    e = trace.entries
    assert e[1].rho < e[0].rho / 2
    assert not e[1].bound_holds
    assert e[1].double_exp_holds
