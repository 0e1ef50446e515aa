import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probmorph.spaces import (
    Dataset,
    FiniteSpace,
    ProbMeasure,
    ProductSpace,
    SignedMeasure,
    SpaceMismatchError,
    dirac,
    empirical,
    jordan_hahn,
    marginal,
    product,
    tv_norm,
)

AB = FiniteSpace(["a", "b"])
CD = FiniteSpace(["c", "d"])


def signed_measures(max_size=6):
    return st.integers(2, max_size).flatmap(
        lambda n: st.lists(
            st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n
        ).map(lambda w: SignedMeasure(FiniteSpace(list(range(n))), w))
    )


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------
def test_space_requires_distinct_labels():
    with pytest.raises(ValueError):
        FiniteSpace(["a", "a"])


def test_space_structural_equality():
    assert FiniteSpace(["a", "b"]) == AB
    assert FiniteSpace(["a", "b"], coords=[[0.0], [1.0]]) != AB
    assert FiniteSpace(["b", "a"]) != AB


def test_product_space_row_major_order():
    prod = ProductSpace(AB, CD)
    assert prod.labels == (("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"))
    assert prod.size == 4
    assert prod.left == AB and prod.right == CD


def test_product_space_concatenates_coords():
    x = FiniteSpace(["a"], coords=[[1.0, 2.0]])
    y = FiniteSpace(["c"], coords=[[3.0]])
    prod = ProductSpace(x, y)
    assert np.allclose(prod.coords, [[1.0, 2.0, 3.0]])


def test_prob_measure_rejects_bad_sum():
    with pytest.raises(ValueError):
        ProbMeasure(AB, [0.6, 0.6])
    with pytest.raises(ValueError):
        ProbMeasure(AB, [1.2, -0.2])


def test_prob_measure_renormalizes_tiny_drift():
    p = ProbMeasure(AB, [0.5 + 2e-10, 0.5])
    assert math.isclose(p.total_mass(), 1.0, abs_tol=1e-15)


def test_dataset_rejects_unknown_labels():
    prod = ProductSpace(AB, CD)
    with pytest.raises(KeyError):
        Dataset(prod, [("a", "z")])


# ---------------------------------------------------------------------------
# dirac / empirical
# ---------------------------------------------------------------------------
def test_dirac_point_masses():
    assert dirac(AB, "a").weights.tolist() == [1.0, 0.0]
    assert dirac(AB, "b").weights.tolist() == [0.0, 1.0]
    assert dirac(FiniteSpace(["a"]), "a").weights.tolist() == [1.0]
    with pytest.raises(KeyError):
        dirac(AB, "z")


def test_empirical_frequencies():
    # counts by hand: a appears 3 of 4 times
    mu = empirical(["a", "a", "b", "a"], AB)
    assert mu.weights.tolist() == [0.75, 0.25]
    assert empirical(["a"], AB).weights.tolist() == [1.0, 0.0]
    assert empirical(["a", "b"], AB).weights.tolist() == [0.5, 0.5]


def test_empirical_rejects_empty():
    with pytest.raises(ValueError):
        empirical([], AB)


def test_empirical_of_dataset_lives_on_the_product():
    prod = ProductSpace(AB, CD)
    S = Dataset(prod, [("a", "c"), ("a", "c"), ("b", "d")])
    mu = empirical(S)
    assert mu.space == prod
    assert np.allclose(mu.weights, [2 / 3, 0, 0, 1 / 3])


# ---------------------------------------------------------------------------
# tv_norm / jordan_hahn
# ---------------------------------------------------------------------------
def test_tv_norm_values():
    three = FiniteSpace([1, 2, 3])
    assert tv_norm(SignedMeasure(AB, [0.5, -0.5])) == 1.0
    assert tv_norm(SignedMeasure(three, [0.2, -0.3, 0.1])) == pytest.approx(
        0.6, abs=1e-15
    )
    assert tv_norm(ProbMeasure(AB, [0.25, 0.75])) == pytest.approx(1.0, abs=1e-15)


def test_jordan_hahn_split():
    three = FiniteSpace([1, 2, 3])
    pos, neg = jordan_hahn(SignedMeasure(three, [-1.0, 2.0, 0.0]))
    assert pos.weights.tolist() == [0.0, 2.0, 0.0]
    assert neg.weights.tolist() == [1.0, 0.0, 0.0]
    p = ProbMeasure(AB, [0.3, 0.7])
    pos, neg = jordan_hahn(p)
    assert np.allclose(pos.weights, p.weights)
    assert np.all(neg.weights == 0.0)


@given(signed_measures())
def test_jordan_hahn_round_trip_and_minimality(mu):
    pos, neg = jordan_hahn(mu)
    assert np.all(pos.weights >= 0) and np.all(neg.weights >= 0)
    assert np.array_equal(pos.weights - neg.weights, mu.weights)
    assert np.all(pos.weights * neg.weights == 0.0)
    assert tv_norm(mu) == pytest.approx(
        pos.weights.sum() + neg.weights.sum(), abs=1e-12
    )


@given(signed_measures(), signed_measures(4), st.floats(-10, 10, allow_nan=False))
def test_tv_norm_is_a_norm(mu, nu, c):
    assert tv_norm(c * mu) == pytest.approx(abs(c) * tv_norm(mu), abs=1e-12)
    if mu.space == nu.space:
        assert tv_norm(mu + nu) <= tv_norm(mu) + tv_norm(nu) + 1e-12


def test_tv_norm_zero_iff_zero():
    assert tv_norm(SignedMeasure(AB, [0.0, 0.0])) == 0.0
    assert tv_norm(SignedMeasure(AB, [1e-300, 0.0])) > 0.0


# ---------------------------------------------------------------------------
# product / marginal
# ---------------------------------------------------------------------------
def test_product_outer():
    mu = SignedMeasure(AB, [0.3, 0.7])
    nu = SignedMeasure(CD, [1.0, 0.0])
    assert product(mu, nu).weights.tolist() == [0.3, 0.0, 0.7, 0.0]
    d = product(dirac(AB, "a"), dirac(CD, "c"))
    assert d.weights.tolist() == [1.0, 0.0, 0.0, 0.0]
    half = SignedMeasure(AB, [0.5, 0.5])
    assert np.allclose(product(half, SignedMeasure(CD, [0.5, 0.5])).weights, 0.25)


def test_product_space_mismatch():
    prod = ProductSpace(AB, CD)
    with pytest.raises(SpaceMismatchError):
        product(SignedMeasure(CD, [1, 0]), SignedMeasure(AB, [1, 0]), prod)


def test_marginal_hand_example():
    prod = ProductSpace(AB, CD)
    mu = SignedMeasure(prod, [0.2, 0.2, 0.1, 0.5])
    assert marginal(mu, "left").weights.tolist() == [0.4, 0.6]
    assert marginal(mu, "right").weights.tolist() == pytest.approx([0.3, 0.7])


def test_marginal_of_dirac_and_non_product_error():
    d = product(dirac(AB, "a"), dirac(CD, "c"))
    assert marginal(d, "left").weights.tolist() == [1.0, 0.0]
    with pytest.raises(SpaceMismatchError):
        marginal(dirac(AB, "a"), "left")


def test_marginal_preserves_prob_type():
    prod = ProductSpace(AB, CD)
    mu = ProbMeasure(prod, [0.2, 0.2, 0.1, 0.5])
    assert isinstance(marginal(mu, "left"), ProbMeasure)


@given(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=2),
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3),
)
def test_marginal_of_product_scales_by_factor_mass(wx, wy):
    mu = SignedMeasure(AB, wx)
    nu = SignedMeasure(FiniteSpace([1, 2, 3]), wy)
    left = marginal(product(mu, nu), "left")
    assert np.allclose(left.weights, mu.weights * nu.total_mass(), atol=1e-12)


@settings(max_examples=30)
@given(
    st.lists(st.sampled_from(["a", "b"]), min_size=1, max_size=8),
    st.lists(st.sampled_from(["a", "b"]), min_size=1, max_size=8),
)
def test_empirical_concatenation_is_mass_weighted_average(xs, ys):
    both = empirical(xs + ys, AB)
    na, nb = len(xs), len(ys)
    mixed = (na * empirical(xs, AB).weights + nb * empirical(ys, AB).weights) / (
        na + nb
    )
    assert np.allclose(both.weights, mixed, atol=1e-12)


def test_signed_measure_arithmetic():
    mu = SignedMeasure(AB, [1.0, -2.0])
    nu = SignedMeasure(AB, [0.5, 0.5])
    assert (mu + nu).weights.tolist() == [1.5, -1.5]
    assert (mu - nu).weights.tolist() == [0.5, -2.5]
    assert (2.0 * mu).weights.tolist() == [2.0, -4.0]
    assert mu.weight("b") == -2.0
