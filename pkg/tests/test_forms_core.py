import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirrorlab import InvalidInput
from mirrorlab import forms_core as fc
from mirrorlab.forms_core import KForm

from oracles import brute_wedge, skew_matrix


def _as_dict(form: KForm) -> dict:
    return form.terms()


def _from_dict(n: int, k: int, terms: dict) -> KForm:
    return KForm.from_terms(n, k, terms)


def random_form(rng, n, k, scale=1.0):
    return KForm(n, k, rng.uniform(-scale, scale, math.comb(n, k)))


# -- index tables and containers [TRIVIAL] ----------------------------------


def test_index_table_is_lexicographic():
    tab = fc.index_table(5, 2)
    assert tab.indices == tuple(itertools.combinations(range(5), 2))
    assert tab.index((1, 3)) == tab.indices.index((1, 3))


def test_dim_forms_and_degree_lookup():
    assert fc.dim_forms(8, 4) == 70
    assert fc.degree_from_length(6, 20) == 3
    with pytest.raises(InvalidInput):
        fc.degree_from_length(7, 35)  # k = 3 and k = 4 share the length
    with pytest.raises(InvalidInput):
        fc.degree_from_length(7, 36)


def test_kform_rejects_wrong_length_and_is_read_only():
    with pytest.raises(InvalidInput):
        KForm(4, 2, np.zeros(5))
    f = KForm.zeros(4, 2)
    with pytest.raises(ValueError):
        f.coeffs[0] = 1.0


def test_out_of_range_dimension():
    with pytest.raises(InvalidInput):
        KForm.zeros(9, 1)


def test_from_terms_applies_permutation_sign():
    f = KForm.from_terms(4, 2, {(2, 0): 3.0})
    assert f.terms() == {(0, 2): -3.0}
    with pytest.raises(InvalidInput):
        KForm.from_terms(4, 2, {(1, 1): 1.0})


def test_json_round_trip():
    rng = np.random.default_rng(0)
    f = random_form(rng, 6, 3)
    g = KForm.from_json(f.to_json())
    assert g.allclose(f, atol=0.0)


def test_arithmetic_keeps_space():
    a = KForm.basis(4, 0, 1)
    b = KForm.basis(4, 2, 3)
    assert (2 * a - b / 2).terms() == {(0, 1): 2.0, (2, 3): -0.5}
    with pytest.raises(InvalidInput):
        a + KForm.basis(4, 0)


# -- wedge against the permutation oracle [DERIVED] -------------------------


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 8),
    data=st.data(),
)
def test_wedge_matches_brute_force(n, data):
    ka = data.draw(st.integers(0, n))
    kb = data.draw(st.integers(0, n - ka))
    seed = data.draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    a, b = random_form(rng, n, ka), random_form(rng, n, kb)
    got = fc.wedge(a, b)
    want = _from_dict(n, ka + kb, brute_wedge(_as_dict(a), _as_dict(b)))
    assert got.allclose(want, atol=1e-12)


def test_batched_wedge_matches_single():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 3, 21))
    b = rng.normal(size=(3, 35))
    batched = fc.wedge_coeffs(a, b, 7, 2, 3)
    for i, j in itertools.product(range(5), range(3)):
        single = fc.wedge_coeffs(a[i, j], b[j], 7, 2, 3)
        np.testing.assert_allclose(batched[i, j], single, atol=1e-13)


def test_graded_commutativity():
    rng = np.random.default_rng(2)
    a, b = random_form(rng, 7, 3), random_form(rng, 7, 2)
    assert fc.wedge(a, b).allclose(fc.wedge(b, a), atol=1e-13)
    c = random_form(rng, 7, 1)
    assert fc.wedge(a, c).allclose(-fc.wedge(c, a), atol=1e-13)


def test_power_of_two_form():
    rng = np.random.default_rng(3)
    f = random_form(rng, 6, 2)
    assert fc.power(f, 3).allclose(fc.wedge(f, fc.wedge(f, f)), atol=1e-12)


# -- hodge star and interior product [DERIVED] ------------------------------


@pytest.mark.parametrize("n", [4, 6, 7, 8])
def test_hodge_defining_property(n):
    rng = np.random.default_rng(n)
    for k in range(n + 1):
        a, b = random_form(rng, n, k), random_form(rng, n, k)
        top = fc.wedge(a, fc.hodge(b))
        assert top.coeffs[0] == pytest.approx(fc.inner(a, b), abs=1e-12)
        # ** = (-1)^(k(n-k)) in Euclidean signature
        assert fc.hodge(fc.hodge(a)).allclose((-1) ** (k * (n - k)) * a, atol=1e-13)


def test_interior_is_contraction_in_first_slot():
    rng = np.random.default_rng(4)
    v = rng.normal(size=5)
    a = random_form(rng, 5, 3)
    got = fc.interior(v, a)
    want = {}
    for (i, j, k), c in a.terms().items():
        for p, rest in ((i, (j, k)), (j, (i, k)), (k, (i, j))):
            sign = 1 if p == i or p == k else -1
            want[rest] = want.get(rest, 0.0) + sign * v[p] * c
    assert got.allclose(KForm.from_terms(5, 2, want), atol=1e-13)


def test_interior_is_antiderivation():
    rng = np.random.default_rng(5)
    v = rng.normal(size=6)
    a, b = random_form(rng, 6, 2), random_form(rng, 6, 3)
    lhs = fc.interior(v, fc.wedge(a, b))
    rhs = fc.wedge(fc.interior(v, a), b) + fc.wedge(a, fc.interior(v, b))
    assert lhs.allclose(rhs, atol=1e-12)


# -- sharp / flat and determinants ------------------------------------------


def test_sharp_convention_matches_oracle():
    rng = np.random.default_rng(6)
    f = random_form(rng, 6, 2)
    np.testing.assert_array_equal(fc.sharp(f).matrix, skew_matrix(f.coeffs, 6))
    assert fc.flat_skew(fc.sharp(f).matrix).allclose(f, atol=0.0)


def test_flat_skew_rejects_non_skew():
    with pytest.raises(InvalidInput):
        fc.flat_skew(np.eye(3))


@pytest.mark.parametrize("n", [2, 3, 5, 6, 7, 8])
def test_det_formula_against_numpy(n):
    rng = np.random.default_rng(n)
    f = rng.uniform(-2, 2, (200, math.comb(n, 2)))
    want = np.linalg.det(np.eye(n) + skew_matrix(f, n))
    np.testing.assert_allclose(fc.det_formula_coeffs(f, n), want, rtol=1e-11)
    np.testing.assert_allclose(fc.det_lu_coeffs(f, n), want, rtol=1e-11)


@pytest.mark.parametrize("n", [4, 6, 8])
def test_pfaffian_squares_to_determinant(n):
    rng = np.random.default_rng(n)
    f = rng.normal(size=(100, math.comb(n, 2)))
    pf = fc.pfaffian_coeffs(f, n)
    np.testing.assert_allclose(pf**2, np.linalg.det(skew_matrix(f, n)), rtol=1e-10, atol=1e-12)
    # Pf is the coefficient of f^(n/2) / (n/2)!
    top = fc.power_coeffs(f, n, 2, n // 2)[:, 0] / math.factorial(n // 2)
    np.testing.assert_allclose(pf, top, rtol=1e-12, atol=1e-12)


def test_det_one_plus_pair():
    f = KForm.from_terms(4, 2, {(0, 1): 2.0, (2, 3): 3.0})
    pair = fc.det_one_plus(f)
    # [TRIVIAL] block diagonal: (1 + 4)(1 + 9)
    assert pair.formula == pytest.approx(50.0)
    assert pair.oracle == pytest.approx(50.0)


# -- embeddings -------------------------------------------------------------


def test_embed_and_restrict_round_trip():
    rng = np.random.default_rng(7)
    a = random_form(rng, 6, 3)
    big = fc.embed(a, 8, 1)
    assert all(min(idx) >= 1 and max(idx) <= 6 for idx in big.terms())
    np.testing.assert_array_equal(fc.restrict_coeffs(big.coeffs, 8, 3, 6, 1), a.coeffs)
    with pytest.raises(InvalidInput):
        fc.embed(a, 8, 3)
