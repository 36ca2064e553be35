"""
Test Angle Diagnostics and Error Bounds
"""
import numpy as np
import pytest

from modcomb.combination.diagnostics import (
    a_posteriori_bound,
    a_priori_bound,
    closed_form_c_nu,
    complement_product_norm,
    distance_to_sum_space,
    joint_projection_oracle,
    min_angle,
    optimal_parameter,
    orthonormalize,
    subspace_from_feature_map,
    subspace_from_learner,
)
from modcomb.errors import DegenerateAngleError, InvalidParameterError
from modcomb.learning.hypothesis import (
    DataSet,
    InnerProductContext,
    ProjectionLearner,
    linear_feature_map,
    stencil_feature_map,
)

B1 = [1.0, 1.0, -2.0, 0.0, 0.0]
B2 = [0.0, 0.0, -2.0, 1.0, 1.0]


def _unit_rows(dim=5):
    """Identity design rows, so <.,.>_D is a scaled Euclidean product of weight vectors"""
    return DataSet(inputs=np.eye(dim), targets=np.zeros(dim))


def test_stencil_spaces_cosine():
    """Test the cosine 4/6 between the two stencil lines"""
    data = _unit_rows()
    G = subspace_from_feature_map(stencil_feature_map([B1], 1.0), data)
    H = subspace_from_feature_map(stencil_feature_map([B2], 1.0), data)

    report = min_angle(G, H)

    assert report.c0 == pytest.approx(2.0 / 3.0)
    assert report.c == pytest.approx(2.0 / 3.0)
    assert report.intersection_dimension == 0
    assert report.rate_per_iteration == pytest.approx(4.0 / 9.0)
    assert closed_form_c_nu(0.0) == pytest.approx(2.0 / 3.0)


def test_closed_form_matches_measured_cosine():
    """Test c(nu) for the family nu * b1 + b2"""
    data = _unit_rows()
    G = subspace_from_feature_map(stencil_feature_map([B1], 1.0), data)
    for nu in (-1.0, 0.5, 2.0):
        stencil = nu * np.array(B1) + np.array(B2)
        H = subspace_from_feature_map(stencil_feature_map([stencil], 1.0), data)
        assert min_angle(G, H).c == pytest.approx(closed_form_c_nu(nu), abs=1e-10)
    assert closed_form_c_nu(-2.0 / 3.0) == pytest.approx(0.0, abs=1e-7)


def test_shared_direction_is_removed():
    """Test that c ignores the intersection while c0 reports it"""
    data = DataSet(inputs=np.eye(3), targets=np.zeros(3))
    G = subspace_from_learner(ProjectionLearner(linear_feature_map(3, [0, 1])), data)
    H = subspace_from_learner(ProjectionLearner(linear_feature_map(3, [1, 2])), data)

    report = min_angle(G, H)

    assert report.c0 == pytest.approx(1.0)
    assert report.intersection_dimension == 1
    assert report.c == pytest.approx(0.0, abs=1e-12)


def test_orthogonal_spaces():
    """Test a zero cosine for orthogonal spaces"""
    data = DataSet(inputs=np.eye(2), targets=np.zeros(2))
    G = subspace_from_feature_map(linear_feature_map(2, [0]), data)
    H = subspace_from_feature_map(linear_feature_map(2, [1]), data)

    assert min_angle(G, H).c == pytest.approx(0.0, abs=1e-15)


def test_complement_product_norm_equals_cosine():
    """Test the product-of-complements characterization of c"""
    rng = np.random.default_rng(5)
    data = DataSet(inputs=rng.standard_normal((30, 5)), targets=np.zeros(30))
    G = subspace_from_feature_map(linear_feature_map(5, [0, 1]), data)
    H = subspace_from_feature_map(linear_feature_map(5, [2, 3, 4]), data)

    assert complement_product_norm(G, H) == pytest.approx(min_angle(G, H).c, abs=1e-10)


def test_orthonormal_basis_uses_empirical_product():
    """Test that basis columns are orthonormal and rank-revealing"""
    features = np.column_stack([np.ones(4), np.arange(4.0), 2.0 * np.arange(4.0)])

    basis = orthonormalize(features)

    assert basis.rank == 2
    np.testing.assert_allclose(basis.gram(), np.eye(2), atol=1e-12)


def test_a_priori_bound_values():
    """Test the trajectory bound for a few inputs"""
    assert a_priori_bound(0.5, 0.0, 1.0, 1, 1).value == pytest.approx(0.5)
    assert a_priori_bound(0.5, 0.0, 2.0, 1, 2).value == pytest.approx(2.5)
    assert a_priori_bound(0.0, 0.1, 1.0, 3, 1).value == pytest.approx(0.1)
    with pytest.raises(InvalidParameterError):
        a_priori_bound(1.5, 0.0, 1.0, 1, 1)


def test_a_posteriori_bound_forms():
    """Test the quadratic form for small steps and the power form otherwise"""
    small = a_posteriori_bound(0.5, 0.03, 1.0, 2)
    large = a_posteriori_bound(0.5, 3.0, 1.0, 2)

    assert small.value == pytest.approx(4.0 * 0.5 / 0.75 * 0.03)
    assert large.inputs['quadratic_form'] is None
    assert large.value == pytest.approx((1.0 + 2.0) ** 2 - 1.0)


def test_a_posteriori_bound_needs_proper_angle():
    """Test that c = 1 makes the bound undefined"""
    with pytest.raises(DegenerateAngleError):
        a_posteriori_bound(1.0, 0.1, 1.0, 1)


def test_distance_to_sum_space():
    """Test eps_F for a target with a component outside G + H"""
    rng = np.random.default_rng(7)
    inputs = rng.standard_normal((50, 3))
    data = DataSet(inputs=inputs, targets=inputs[:, 0] + inputs[:, 1])
    oracle = joint_projection_oracle(data, linear_feature_map(3, [0]), linear_feature_map(3, [1]))
    assert distance_to_sum_space(data, oracle) == pytest.approx(0.0, abs=1e-10)

    outside = data.with_targets(inputs[:, 0] + inputs[:, 2])
    oracle = joint_projection_oracle(outside, linear_feature_map(3, [0]), linear_feature_map(3, [1]))
    assert distance_to_sum_space(outside, oracle) > 0.1


def test_optimal_parameter_finds_closed_form_minimum():
    """Test the BFGS search for the stencil family"""
    data = _unit_rows()
    G = subspace_from_feature_map(stencil_feature_map([B1], 1.0), data)

    def space(nu):
        stencil = nu * np.array(B1) + np.array(B2)
        return subspace_from_feature_map(stencil_feature_map([stencil], 1.0), data)

    result = optimal_parameter(space, G, initial=0.0)

    assert result['nu'] == pytest.approx(-2.0 / 3.0, abs=1e-3)
    assert result['c'] < 1e-2


def test_cosines_ordered_on_random_pairs():
    """Test 0 <= c <= c0 <= 1 for random pairs of spaces"""
    rng = np.random.default_rng(21)
    for _ in range(25):
        dim_G, dim_H = rng.integers(1, 4, size=2)
        G = orthonormalize(rng.standard_normal((12, dim_G)))
        H = orthonormalize(rng.standard_normal((12, dim_H)))

        report = min_angle(G, H)

        assert 0.0 <= report.c <= report.c0 + 1e-12
        assert report.c0 <= 1.0 + 1e-12


def test_space_against_itself():
    """Test that a space meets itself in full, leaving c = 0"""
    rng = np.random.default_rng(4)
    G = orthonormalize(rng.standard_normal((10, 3)))

    report = min_angle(G, G)

    assert report.c0 == pytest.approx(1.0)
    assert report.intersection_dimension == 3
    assert report.c == 0.0


def test_orthonormalize_uses_context_floor():
    """Test that the context regularization drives the rank cutoff"""
    rng = np.random.default_rng(6)
    x = rng.uniform(1.0, 2.0, 20)
    data = DataSet(inputs=x, targets=x)
    features = np.column_stack([x, x + 1e-6 * rng.standard_normal(20)])

    assert orthonormalize(features, InnerProductContext(data)).rank == 2
    assert orthonormalize(features, InnerProductContext(data, regularization=1e-3)).rank == 1
    assert orthonormalize(features, InnerProductContext(data, regularization=1e-3), rcond=1e-10).rank == 2
