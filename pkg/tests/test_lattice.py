import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from majorant.errors import GeometryError, PreconditionError
from majorant.lattice import (LatticeField, LatticeGeometry, check_same_geometry, h_shaped, random_small,
                              single_mode)


def test_geometry_counts():
    g = LatticeGeometry(3, 1.0, 2.0)
    assert g.M == 2 and g.shape == (5, 5, 5)
    # integer points with |m| <= 2 in Z^3
    assert g.site_count == 33
    assert g.origin_site() is not None
    with pytest.raises(PreconditionError):
        LatticeGeometry(3, 1.0, 0.5)
    with pytest.raises(PreconditionError):
        LatticeGeometry(2, 1.0, 2.0, offset=(0.1,))


def test_field_zeroes_origin_and_outside_ball():
    g = LatticeGeometry(2, 1.0, 2.0)
    f = LatticeField(g, np.ones(g.shape + (2,)))
    assert np.all(f.values[2, 2] == 0)
    assert np.all(f.values[0, 0] == 0)  # corner |xi| = 2 sqrt 2
    assert np.all(f.values[0, 2] == 1)


def test_presets_are_divergence_free_and_real(small_geometry, isq):
    for f in (single_mode(small_geometry, isq, (0, 1, 2), 0.3), random_small(small_geometry, isq, 0.1, seed=2),
              h_shaped(small_geometry, isq, 0.2)):
        assert f.divergence_residual() < 1e-12
        assert f.reality_residual() < 1e-12


def test_random_small_normalization(small_geometry, isq):
    f = random_small(small_geometry, isq, 0.07, seed=5)
    h = small_geometry.kernel_values(isq)
    ratio = np.where(h > 0, f.magnitude() / np.where(h > 0, h, 1), 0)
    assert ratio.max() == pytest.approx(0.07, rel=1e-12)


def test_binary_header_layout(small_geometry, isq):
    f = single_mode(small_geometry, isq, (0, 1, 2), 0.3)
    data = f.to_bytes()
    n, dxi, xi_max, count = struct.unpack("<4d", data[:32])
    assert (n, dxi, xi_max, count) == (3, 1.0, 4.0, small_geometry.site_count)
    assert len(data) == 32 + 16 * 3 * small_geometry.site_count
    first = np.frombuffer(data[32:80], dtype="<c16")
    assert np.array_equal(first, f.site_values()[0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 0.5, 2.0), (3, 1.0, 3.0), (4, 1.0, 1.0)]))
def test_binary_round_trip(seed, geo):
    g = LatticeGeometry(*geo)
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(g.shape + (g.dim,)) + 1j * rng.standard_normal(g.shape + (g.dim,))
    f = LatticeField(g, vals)
    back = LatticeField.from_bytes(f.to_bytes())
    assert back.geometry == g
    assert np.array_equal(back.values, f.values)


def test_binary_rejects_corruption(small_geometry, isq, tmp_path):
    f = single_mode(small_geometry, isq, (0, 1, 2), 0.3)
    data = f.to_bytes()
    with pytest.raises(GeometryError):
        LatticeField.from_bytes(data[:-16])
    with pytest.raises(GeometryError):
        LatticeField.from_bytes(data[:20])
    bad = struct.pack("<4d", 3, 1.0, 4.0, 7) + data[32:]
    with pytest.raises(GeometryError):
        LatticeField.from_bytes(bad)
    shifted = LatticeField.zeros(LatticeGeometry(2, 1.0, 2.0, offset=(0.5, 0.0)))
    with pytest.raises(GeometryError):
        shifted.to_bytes()
    path = tmp_path / "f.bin"
    f.save(path)
    assert np.array_equal(LatticeField.load(path).values, f.values)


def test_scaling_and_geometry_checks():
    g = LatticeGeometry(2, 1.0, 3.0)
    f = LatticeField(g, np.ones(g.shape + (2,)))
    s = f.scaled(2.0)
    assert s.geometry.dxi == 2.0 and s.geometry.xi_max == 6.0
    keep = f.geometry.mask & (f.geometry.radius > 0)
    assert np.allclose(s.values[keep], 0.25)
    with pytest.raises(GeometryError):
        check_same_geometry(f, s)
    with pytest.raises(GeometryError):
        f + s


def test_projection_removes_longitudinal_part():
    g = LatticeGeometry(3, 1.0, 3.0)
    f = LatticeField.from_function(g, lambda xi: xi.astype(complex))
    assert f.divergence_residual() == pytest.approx(1.0)
    assert np.abs(f.project().values).max() < 1e-12
