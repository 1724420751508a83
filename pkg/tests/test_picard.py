import numpy as np
import pytest

from majorant.errors import GeometryError, OverflowGuardError, PreconditionError
from majorant.kernels import inverse_square_kernel
from majorant.lattice import LatticeField, LatticeGeometry, random_small
from majorant.picard import (bilinear_gain, bilinear_term, bilinear_term_direct, contraction_report,
                             fh_norm, fht_norm, interpolate_trajectory, picard_iterate, site_of)


@pytest.fixture(scope="module")
def fields():
    g = LatticeGeometry(3, 1.0, 3.0)
    h = inverse_square_kernel()
    return random_small(g, h, 0.3, seed=1), random_small(g, h, 0.2, seed=2, real=False)


def test_bilinear_fft_matches_direct_sum(fields):
    u, v = fields
    fast = bilinear_term(u, v).values
    slow = bilinear_term_direct(u, v).values
    assert np.abs(fast - slow).max() <= 1e-12 * np.abs(slow).max()
    same = bilinear_term(u, u).values
    assert np.abs(same - bilinear_term_direct(u, u).values).max() <= 1e-12 * np.abs(same).max()


def test_bilinear_is_bilinear_and_divergence_free(fields):
    u, v = fields
    a = bilinear_term(u * 2.5, v).values
    assert np.allclose(a, 2.5 * bilinear_term(u, v).values, rtol=1e-12, atol=1e-15)
    assert bilinear_term(u, v).divergence_residual() < 1e-12


def test_single_exact_mode_has_no_self_interaction():
    g = LatticeGeometry(3, 1.0, 3.0)
    vals = np.zeros(g.shape + (3,), dtype=complex)
    M = g.M
    vals[M, M + 1, M + 2] = [1.0, 0, 0]
    vals[M, M - 1, M - 2] = [1.0, 0, 0]
    u = LatticeField(g, vals)
    assert np.abs(bilinear_term(u, u).values).max() < 1e-14


def test_bilinear_rejects_mixed_lattices(fields):
    u, _ = fields
    w = LatticeField.zeros(LatticeGeometry(3, 0.5, 3.0))
    with pytest.raises(GeometryError):
        bilinear_term(u, w)


def test_linear_heat_with_forcing_is_exact():
    g = LatticeGeometry(3, 1.0, 3.0)
    h = inverse_square_kernel()
    u0 = random_small(g, h, 0.2, seed=3)
    gf = random_small(g, h, 0.1, seed=4)
    res = picard_iterate(u0, gf, nu=0.7, T=0.3, K=2, n_steps=8, bilinear=False)
    lam = 0.7 * np.sum(g.site_coords**2, axis=1)
    t = 0.3
    keep = lam > 0
    lam = lam[keep]
    expect = (np.exp(-lam * t)[:, None] * u0.site_values()[keep]
              + (-np.expm1(-lam * t) / lam)[:, None] * gf.site_values()[keep])
    got = res.iterates[-1].site_values[-1][keep]
    assert np.allclose(got, expect, rtol=1e-12, atol=1e-15)
    assert res.differences.max() == 0


def test_picard_converges_on_small_packet(packet, isq):
    res = picard_iterate(packet, nu=1.0, T=0.1, K=8, kernel=isq)
    assert res.residual < 1e-8
    rep = contraction_report(res.iterates, isq, 1.0)
    assert rep.contracting
    assert rep.datum_norm < rep.small_data_threshold


def test_duhamel_second_order_in_time(isq):
    g = LatticeGeometry(3, 1.0, 3.0)
    u0 = random_small(g, isq, 2.0, seed=6)
    finals = [picard_iterate(u0, nu=1.0, T=0.2, K=1, kernel=isq, n_steps=m).iterates[1].site_values[-1]
              for m in (8, 16, 32)]
    e1 = np.abs(finals[0] - finals[2]).max()
    e2 = np.abs(finals[1] - finals[2]).max()
    assert e1 / e2 > 3.5


def test_overflow_guard(isq):
    g = LatticeGeometry(3, 1.0, 3.0)
    u0 = random_small(g, isq, 1e4, seed=6)
    with pytest.raises(OverflowGuardError):
        picard_iterate(u0, nu=1.0, T=1.0, K=6, kernel=isq, n_steps=8, overflow_guard=1e6)


def test_picard_preconditions(isq):
    g = LatticeGeometry(3, 1.0, 3.0)
    bad = LatticeField.from_function(g, lambda xi: xi.astype(complex))
    with pytest.raises(PreconditionError):
        picard_iterate(bad)
    with pytest.raises(PreconditionError):
        picard_iterate(random_small(g, isq), K=0)


def test_norms_and_site_lookup(packet, isq):
    assert fh_norm(packet * 3.0, isq) == pytest.approx(3 * fh_norm(packet, isq), rel=1e-14)
    res = picard_iterate(packet, nu=1.0, T=0.1, K=2, kernel=isq, n_steps=8)
    assert fht_norm(res.iterates[0], isq) == pytest.approx(fh_norm(packet, isq), rel=1e-14)
    s = site_of(packet.geometry, (0, 1, 2))
    assert np.array_equal(interpolate_trajectory(res.iterates[0], s, 0.0), packet.site_values()[s])
    with pytest.raises(GeometryError):
        site_of(packet.geometry, (0.5, 0, 0))
    with pytest.raises(PreconditionError):
        interpolate_trajectory(res.iterates[0], s, 1.0)


def test_bilinear_gain_scaling(isq):
    # theta = 1 is scale-critical: the gain does not depend on T
    assert bilinear_gain(isq, 1.0, 1.0) == pytest.approx(bilinear_gain(isq, 1.0, 0.1), rel=1e-12)
    assert bilinear_gain(isq, 2.0, 0.1) == pytest.approx(bilinear_gain(isq, 1.0, 0.1) / 2, rel=1e-12)
