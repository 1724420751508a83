import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from majorant.cascade import (ContinuousProblem, LatticeProblem, SplittingLaw, estimate_solution,
                              leray_project, multiplier_m, otimes, realize_tree, sample_lifetime,
                              sample_values, splitting_normalization)
from majorant.errors import DomainError, ResourceBudgetError
from majorant.kernels import Kernel, exp_damped_kernel
from majorant.lattice import LatticeGeometry, single_mode
from majorant.picard import interpolate_trajectory, picard_iterate, site_of

from conftest import INV_SQ_M

vec = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


@settings(max_examples=40, deadline=None)
@given(vec.filter(lambda v: np.linalg.norm(v) > 1e-3), vec)
def test_leray_is_an_orthogonal_projection(xi, z):
    p = leray_project(xi, z)
    assert abs(p @ xi) <= 1e-9 * (1 + np.linalg.norm(z)) * np.linalg.norm(xi)
    assert np.allclose(leray_project(xi, p), p, atol=1e-9)
    assert np.linalg.norm(p) <= np.linalg.norm(z) + 1e-9


@settings(max_examples=40, deadline=None)
@given(vec.filter(lambda v: np.linalg.norm(v) > 1e-3), vec, vec)
def test_product_is_divergence_free_and_bounded(xi, z, w):
    out = otimes(z, w, xi)
    assert abs(out @ xi) <= 1e-9 * (1 + np.linalg.norm(z) * np.linalg.norm(w)) * np.linalg.norm(xi)
    assert np.linalg.norm(out) <= np.linalg.norm(z) * np.linalg.norm(w) + 1e-9


def test_product_is_bilinear_without_conjugation():
    xi = np.array([0.0, 0.0, 1.0])
    z = np.array([0.0, 0.0, 1j])
    w = np.array([1.0, 0.0, 0.0])
    # -i (z.e) P w = -i * i * w = w
    assert np.allclose(otimes(z, w, xi), w)
    assert np.allclose(otimes(2 * z, w, xi), 2 * otimes(z, w, xi))


def test_zero_frequency_is_rejected():
    with pytest.raises(DomainError):
        leray_project([0, 0, 0], [1, 0, 0])
    with pytest.raises(DomainError):
        sample_lifetime([0, 0, 0], 1.0, np.random.default_rng(0))


def test_lifetime_mean():
    xi = np.array([1.0, 2.0, 0.5])
    s = sample_lifetime(xi, 0.7, np.random.default_rng(1), size=200_000)
    expected = 1 / (0.7 * xi @ xi)
    assert s.mean() == pytest.approx(expected, rel=4 * s.std() / expected / math.sqrt(s.size))


@pytest.mark.parametrize("xi", [[0, 0, 1.0], [3.0, -1.0, 2.0]])
def test_inverse_square_multiplier_is_constant(isq, xi):
    assert multiplier_m(isq, xi, 1.0) == pytest.approx(INV_SQ_M, rel=5e-3)
    assert multiplier_m(isq, xi, 2.0) == pytest.approx(INV_SQ_M / 2, rel=5e-3)


@pytest.mark.parametrize("kernel", [None, exp_damped_kernel()])
def test_splitting_density_integrates_to_one(isq, kernel):
    rep = splitting_normalization(kernel or isq, [0.0, 0.0, 1.5])
    assert rep["total"] == pytest.approx(1.0, abs=5e-3)


@pytest.mark.parametrize("kernel", [None, exp_damped_kernel()])
def test_children_sum_exactly_to_the_parent(isq, kernel):
    law = SplittingLaw(kernel or isq)
    rng = np.random.default_rng(2)
    # non-power kernels build one table per parent radius
    count = 5000 if kernel is None else 100
    parents = rng.standard_normal((count, 3)) * 3
    parents = np.rint(parents * 2.0**32) / 2.0**32
    a, b = law.sample(parents, rng)
    assert np.array_equal(a + b, parents)
    assert np.all(np.any(a != 0, axis=1)) and np.all(np.any(b != 0, axis=1))


def test_inverse_square_children_are_symmetric_in_distribution(isq):
    law = SplittingLaw(isq)
    rng = np.random.default_rng(4)
    xi = np.tile([0.0, 0.0, 1.0], (40_000, 1))
    a, _ = law.sample(xi, rng)
    # eta and xi - eta have the same law, so eta_3 is symmetric about 1/2
    med = np.median(a[:, 2])
    assert med == pytest.approx(0.5, abs=0.02)
    # proposal and target are both normalized, so acceptance is 1 / bound
    assert law.acceptance_rate == pytest.approx(math.pi / 20, rel=0.03)


def _heat_problem(kernel, amp, e, branching):
    chi0 = lambda types: amp * leray_project(types, np.broadcast_to(e, types.shape))
    return ContinuousProblem(kernel, 1.0, chi0, branching=branching)


@pytest.mark.parametrize("xi,t", [([0, 0, 1.0], 0.1), ([1.0, 1.0, 0], 0.5)])
def test_no_branching_reproduces_heat_decay(isq, xi, t):
    e = np.array([1.0, 0.0, 0.0])
    prob = _heat_problem(isq, 1.0, e, branching=False)
    est = estimate_solution(prob, xi, t, 40_000, seed=3)
    xi = np.asarray(xi)
    exact = math.exp(-(xi @ xi) * t) * prob.h(xi) * leray_project(xi, e)
    assert np.all(np.abs(est.mean - exact) <= 4 * est.stderr + 1e-15)


def test_depth_zero_is_the_heat_term(isq):
    e = np.array([0.0, 1.0, 0.0])
    prob = _heat_problem(isq, 1.0, e, branching=True)
    est = estimate_solution(prob, [0.0, 0.0, 1.0], 0.2, 20_000, seed=5, depth_cap=0)
    exact = math.exp(-0.2) * prob.h([0, 0, 1.0]) * e
    assert np.all(np.abs(est.mean - exact) <= 4 * est.stderr + 1e-15)
    assert est.truncation_fraction > 0


def test_depth_one_lattice_cascade_matches_first_iterate(isq):
    g = LatticeGeometry(3, 1.0, 3.0)
    u0 = single_mode(g, isq, (0, 1, 2), 0.5)
    res = picard_iterate(u0, nu=1.0, T=0.2, K=1, kernel=isq, n_steps=256)
    prob = LatticeProblem(isq, 1.0, u0)
    for site in ([0, 1, 2], [0, 0, 1]):
        pic = interpolate_trajectory(res.iterates[1], site_of(g, site), 0.2)
        est = estimate_solution(prob, site, 0.2, 20_000, seed=7, depth_cap=1)
        tol = 4 * est.stderr + 1e-3 * np.abs(pic) + 1e-12
        assert np.all(np.abs(est.mean - pic) <= tol)


def test_realized_tree_kinds(isq):
    prob = _heat_problem(isq, 0.1, np.array([1.0, 0, 0]), branching=True)
    tree = realize_tree(prob, [0, 0, 3.0], 1.0, np.random.default_rng(0), depth_cap=5)
    for gen, nxt in zip(tree.generations, tree.generations[1:]):
        assert len(nxt["types"]) == 2 * int(gen["kind"].sum())


def test_node_budget(isq):
    prob = _heat_problem(isq, 0.1, np.array([1.0, 0, 0]), branching=True)
    with pytest.raises(ResourceBudgetError):
        estimate_solution(prob, [0, 0, 3.0], 5.0, 2000, seed=0, node_budget=100)


def test_zero_type_rejected(isq):
    prob = _heat_problem(isq, 0.1, np.array([1.0, 0, 0]), branching=True)
    with pytest.raises(DomainError):
        estimate_solution(prob, [0, 0, 0], 1.0, 10, seed=0)


def test_results_do_not_depend_on_workers(packet, isq):
    prob = LatticeProblem(isq, 1.0, packet)
    a, ta = sample_values(prob, [0, 1, 2], 0.3, 3000, seed=11, depth_cap=3, workers=1, block=512)
    b, tb = sample_values(prob, [0, 1, 2], 0.3, 3000, seed=11, depth_cap=3, workers=2, block=512)
    assert np.array_equal(a, b) and np.array_equal(ta, tb)


def test_seed_changes_samples(packet, isq):
    prob = LatticeProblem(isq, 1.0, packet)
    a, _ = sample_values(prob, [0, 1, 2], 0.3, 500, seed=1, depth_cap=3)
    b, _ = sample_values(prob, [0, 1, 2], 0.3, 500, seed=2, depth_cap=3)
    assert not np.array_equal(a, b)


def test_lattice_splitting_pairs_sum_to_parent(packet, isq):
    prob = LatticeProblem(isq, 1.0, packet)
    g = packet.geometry
    root = site_of(g, [1, 1, 2])
    types = np.full(2000, root)
    c1, c2 = prob.split(types, np.random.default_rng(0))
    assert np.array_equal(g.site_multi_index[c1] + g.site_multi_index[c2], g.site_multi_index[types])


def test_radial_table_kernel_sampler_runs():
    k = Kernel(3, "truncated_power", {"a_in": 1, "a_out": 3, "R": 1.0}, 1.0)
    law = SplittingLaw(k)
    assert law.strategy == "radial_table"
    a, b = law.sample(np.array([[0.0, 0.0, 2.0]] * 100), np.random.default_rng(0))
    assert np.array_equal(a + b, np.array([[0.0, 0.0, 2.0]] * 100))
