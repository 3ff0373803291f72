import itertools
import math

import numpy as np
import pytest

from mirrorlab import InvalidInput
from mirrorlab import forms_core as fc
from mirrorlab import holonomy as ho
from mirrorlab.forms_core import KForm


def one_based(n, k, terms):
    return KForm.from_terms(n, k, {tuple(i - 1 for i in idx): v for idx, v in terms.items()})


def full_tensor(form: KForm) -> np.ndarray:
    """Antisymmetric array ``T[i1..ik]`` with the form's coefficients on sorted indices."""
    out = np.zeros((form.n,) * form.k)
    for idx, c in form.terms().items():
        for perm in itertools.permutations(range(form.k)):
            out[tuple(idx[p] for p in perm)] = fc.perm_sign(perm) * c
    return out


# -- canonical forms [PAPER] ------------------------------------------------


def test_phi_and_its_dual_match_published_terms():
    phi = one_based(7, 3, {(1, 2, 3): 1, (1, 4, 5): 1, (1, 6, 7): 1, (2, 4, 6): 1,
                           (2, 5, 7): -1, (3, 4, 7): -1, (3, 5, 6): -1})
    psi = one_based(7, 4, {(4, 5, 6, 7): 1, (2, 3, 6, 7): 1, (2, 3, 4, 5): 1, (1, 3, 5, 7): 1,
                           (1, 3, 4, 6): -1, (1, 2, 5, 6): -1, (1, 2, 4, 7): -1})
    s = ho.make_structure("g2")
    assert s.form("phi").allclose(phi, atol=0.0)
    assert s.form("psi").allclose(psi, atol=0.0)


def test_cayley_form_is_self_dual_and_matches_kahler_description():
    big = ho.make_structure("spin7").form("Phi")
    assert fc.hodge(big).allclose(big, atol=0.0)
    su4 = ho.make_structure("su4")
    assert (0.5 * fc.power(su4.form("omega"), 2) + su4.form("ReOmega")).allclose(big, atol=1e-15)


def test_omega_squared_coefficients():
    om2 = fc.power(ho.make_structure("su4").form("omega"), 2)
    want = KForm.from_terms(8, 4, {idx: 2.0 for idx in [(0, 1, 2, 3), (0, 1, 4, 5), (0, 1, 6, 7),
                                                          (2, 3, 4, 5), (2, 3, 6, 7), (4, 5, 6, 7)]})
    assert om2.allclose(want, atol=0.0)


def test_omega_squared_eigen_examples():
    om2 = fc.power(ho.make_structure("su4").form("omega"), 2)
    beta = KForm.from_terms(8, 2, {(0, 2): 1.0, (1, 3): -1.0})
    beta_p = KForm.from_terms(8, 2, {(0, 1): 1.0, (2, 3): -1.0})
    assert fc.hodge(fc.wedge(om2, beta)).allclose(2 * beta, atol=1e-15)
    assert fc.hodge(fc.wedge(om2, beta_p)).allclose(-2 * beta_p, atol=1e-15)


def test_spin7_two_form_eigenspaces():
    big = ho.make_structure("spin7").form("Phi")
    bundle = ho.projector_bundle("spin7", 2)
    rng = np.random.default_rng(0)
    a = rng.normal(size=28)
    for label, eig in (("7", 3.0), ("21", -1.0)):
        alpha = KForm(8, 2, bundle.apply(label, a))
        assert fc.hodge(fc.wedge(alpha, big)).allclose(eig * alpha, atol=1e-13)


def test_non_associative_example_curvature():
    # E = e^{14} in one-based labels: E^3 = 0 but E ^ *phi = e^{123467}
    e = one_based(7, 2, {(1, 4): 1.0})
    psi = ho.make_structure("g2").form("psi")
    assert fc.power(e, 3).norm() == 0.0
    assert fc.wedge(e, psi).allclose(one_based(7, 6, {(1, 2, 3, 4, 6, 7): 1.0}), atol=0.0)


# -- stabilizer oracle [DERIVED] --------------------------------------------


def _derivation_matrix(form: KForm) -> np.ndarray:
    """Columns: the infinitesimal action of each skew generator E#(e^{ij}) on ``form``."""
    t = full_tensor(form)
    n, k = form.n, form.k
    cols = []
    for p in range(math.comb(n, 2)):
        a = fc.sharp_coeffs(np.eye(math.comb(n, 2))[p], n)
        act = np.zeros_like(t)
        for slot in range(k):
            act -= np.moveaxis(np.tensordot(a, t, axes=([0], [slot])), 0, slot)
        cols.append(act.reshape(-1))
    return np.array(cols).T


@pytest.mark.parametrize("kind, form_name, label", [("g2", "phi", "14"), ("spin7", "Phi", "21")])
def test_lie_algebra_component_is_stabilizer(kind, form_name, label):
    s = ho.make_structure(kind)
    act = _derivation_matrix(s.form(form_name))
    _, sv, vt = np.linalg.svd(act)
    null = vt[np.sum(sv > 1e-10):]
    p = ho.projector_bundle(kind, 2).matrix(label)
    assert null.shape[0] == np.trace(p).round()
    np.testing.assert_allclose(null @ p, null, atol=1e-12)


# -- projector algebra ------------------------------------------------------


@pytest.mark.parametrize("kind, k, total", [("g2", 3, 35), ("spin7", 4, 70), ("su3", 3, 20), ("su4", 4, 70),
                                            ("su3", 1, 6), ("su4", 3, 56)])
def test_bundles_are_orthogonal_partitions(kind, k, total):
    bundle = ho.projector_bundle(kind, k)
    labels = bundle.labels
    if (kind, k) == ("su4", 4):
        labels = ["[[4,0]]", "[[3,1]]", "[2,2]"]  # the other two pieces refine these
    mats = [bundle.matrix(lab) for lab in labels]
    for p in mats:
        np.testing.assert_allclose(p @ p, p, atol=1e-12)
        np.testing.assert_allclose(p, p.T, atol=0.0)
    for p, q in itertools.combinations(mats, 2):
        np.testing.assert_allclose(p @ q, 0.0, atol=1e-12)
    np.testing.assert_allclose(sum(mats), np.eye(total), atol=1e-12)


def test_su3_three_form_ranks():
    # [TRIVIAL] (3,0)+(0,3) is 2-dimensional, (2,1)+(1,2) is 18-dimensional
    assert ho.projector_bundle("su3", 3).ranks() == {"[[3,0]]": 2, "[[2,1]]": 18}


def test_su4_four_form_pieces_sit_inside_types():
    b = ho.projector_bundle("su4", 4)
    p40, p31 = b.matrix("[[4,0]]"), b.matrix("[[3,1]]")
    np.testing.assert_allclose(p40 @ b.matrix("R.ImOmega"), b.matrix("R.ImOmega"), atol=1e-12)
    # omega has type (1,1) and A- type (2,0)+(0,2)
    np.testing.assert_allclose(p31 @ b.matrix("omega^A-"), b.matrix("omega^A-"), atol=1e-12)
    assert b.ranks()["omega^A-"] == 6


def test_proj2_reassembles():
    rng = np.random.default_rng(1)
    for kind in ("g2", "spin7", "su3", "su4"):
        s = ho.make_structure(kind)
        a = KForm(s.n, 2, rng.normal(size=math.comb(s.n, 2)))
        parts = ho.proj2(s, a)
        assert sum(parts.values(), KForm.zeros(s.n, 2)).allclose(a, atol=1e-12)


def test_su_proj_accepts_types_and_aliases():
    s = ho.make_structure("su4")
    rng = np.random.default_rng(2)
    a = KForm(8, 2, rng.normal(size=28))
    assert ho.su_proj(s, a, (0, 2)).allclose(ho.su_proj(s, a, (2, 0)), atol=0.0)
    assert ho.su_proj(s, a, "a+").allclose(ho.su_proj(s, a, "A+"), atol=0.0)
    with pytest.raises(InvalidInput):
        ho.su_proj(s, a, (1, 2))
    with pytest.raises(InvalidInput):
        ho.su_proj(ho.make_structure("g2"), KForm.zeros(7, 2), (1, 1))


def test_proj4_7_agrees_with_lambda_frame():
    rng = np.random.default_rng(3)
    alpha = KForm(7, 1, rng.normal(size=7))
    lam = ho.lambda_map(4, alpha)
    assert ho.proj4_7(ho.make_structure("spin7"), lam).allclose(lam, atol=1e-13)
    assert lam.norm() == pytest.approx(alpha.norm(), rel=1e-13)


def test_lambda_map_input_checks():
    with pytest.raises(InvalidInput):
        ho.lambda_map(2, KForm.basis(8, 0))
    with pytest.raises(InvalidInput):
        ho.lambda_map(2, KForm.zeros(7, 2))
    with pytest.raises(InvalidInput):
        ho.lambda_coeffs(3, np.zeros(8))


def test_unknown_kind_and_degree():
    with pytest.raises(InvalidInput):
        ho.make_structure("su5")
    with pytest.raises(InvalidInput):
        ho.projector_bundle("g2", 4)
    assert ho.normalize_kind("Spin(7)") == "spin7"


def test_complex_structure_is_compatible_with_omega():
    for kind in ("su3", "su4"):
        s = ho.make_structure(kind)
        j = s.complex_structure.matrix
        np.testing.assert_allclose(j @ j, -np.eye(s.n), atol=0.0)
        # omega(u, v) = <J u, v>; full_tensor gives omega[i, j]
        omega = full_tensor(s.form("omega"))
        np.testing.assert_allclose(omega, j.T, atol=0.0)
