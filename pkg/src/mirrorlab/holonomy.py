"""Constant-coefficient G2, Spin(7), SU(3) and SU(4) structures and their projections.

Index conventions (0-based arrays):

* G2 lives on R^7 and array index ``i`` stands for the usual label ``i + 1``,
  so ``phi = e123 + e145 + e167 + e246 - e257 - e347 - e356`` in 1-based labels.
* Spin(7) and SU(4) live on R^8 with labels 0..7 equal to array indices.
  ``Phi = e0 ^ phi + *_7 phi`` with ``phi`` placed on indices 1..7.
* SU(3) lives on R^6 and array index ``i`` stands for label ``i + 2``
  (coordinates e2..e7), matching its role as the transverse factor of R^7.

For SU structures the complex coframe is ``f^j = e^{2j} + i e^{2j+1}``,
``omega = sum_j e^{2j,2j+1}``, ``Omega = f^0 ^ ... ^ f^{m-1}`` and the complex
structure sends ``e_{2j} -> e_{2j+1}``.

Irreducible projectors are assembled from an equivariant structure operator
(for example ``alpha -> *(Phi ^ alpha)``) whose eigenvalues are known in
closed form. The projector on each eigenspace is the Lagrange polynomial of
the operator, so no numerical eigensolver is involved and the entries stay
rational up to rounding.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, sqrt

import numpy as np

from . import forms_core as fc
from .errors import InvalidInput
from .forms_core import Endo, KForm

DIMENSIONS = {"g2": 7, "spin7": 8, "su3": 6, "su4": 8}

_PHI_TERMS = {
    (1, 2, 3): 1.0,
    (1, 4, 5): 1.0,
    (1, 6, 7): 1.0,
    (2, 4, 6): 1.0,
    (2, 5, 7): -1.0,
    (3, 4, 7): -1.0,
    (3, 5, 6): -1.0,
}


def normalize_kind(kind: str) -> str:
    key = str(kind).lower().replace("(", "").replace(")", "").replace("_", "").replace("-", "")
    if key not in DIMENSIONS:
        raise InvalidInput(f"unknown structure kind {kind!r}; expected one of {sorted(DIMENSIONS)}")
    return key


@dataclass(frozen=True, eq=False)
class HolonomyStructure:
    kind: str
    n: int
    forms: dict
    complex_structure: Endo | None = None
    induced: "HolonomyStructure | None" = None

    def form(self, name: str) -> KForm:
        try:
            return self.forms[name]
        except KeyError:
            raise InvalidInput(f"structure {self.kind} has no form named {name!r}") from None

    @property
    def is_su(self) -> bool:
        return self.kind in ("su3", "su4")

    @property
    def complex_dim(self) -> int:
        return self.n // 2


def g2_phi() -> KForm:
    return KForm.from_terms(7, 3, {tuple(i - 1 for i in idx): v for idx, v in _PHI_TERMS.items()})


def _su_forms(m: int):
    n = 2 * m
    omega = KForm.from_terms(n, 2, {(2 * j, 2 * j + 1): 1.0 for j in range(m)})
    big = np.ones(1, dtype=complex)
    for j in range(m):
        f = np.zeros(n, dtype=complex)
        f[2 * j] = 1.0
        f[2 * j + 1] = 1j
        big = fc.wedge_coeffs(big, f, n, j, 1)
    jmat = np.zeros((n, n))
    for j in range(m):
        jmat[2 * j + 1, 2 * j] = 1.0
        jmat[2 * j, 2 * j + 1] = -1.0
    return omega, KForm(n, m, big.real), KForm(n, m, big.imag), Endo(n, jmat)


@lru_cache(maxsize=None)
def make_structure(kind: str) -> HolonomyStructure:
    """Canonical structure forms for ``kind`` in {g2, spin7, su3, su4}."""
    kind = normalize_kind(kind)
    if kind == "g2":
        phi = g2_phi()
        return HolonomyStructure("g2", 7, {"phi": phi, "psi": fc.hodge(phi)})
    if kind == "spin7":
        phi = fc.embed(g2_phi(), 8, 1)
        psi = fc.embed(fc.hodge(g2_phi()), 8, 1)
        big_phi = fc.wedge(KForm.basis(8, 0), phi) + psi
        return HolonomyStructure("spin7", 8, {"Phi": big_phi, "phi7": phi, "psi7": psi})
    m = 3 if kind == "su3" else 4
    omega, re_om, im_om, jmat = _su_forms(m)
    forms = {"omega": omega, "ReOmega": re_om, "ImOmega": im_om}
    induced = None
    if kind == "su4":
        forms["Phi"] = 0.5 * fc.power(omega, 2) + re_om
        induced = make_structure("spin7")
    return HolonomyStructure(kind, 2 * m, forms, jmat, induced)


# --------------------------------------------------------------------------
# projector construction


def operator_matrix(fn, n: int, k_in: int) -> np.ndarray:
    """Matrix of a linear map on k-forms given as a batched coefficient function."""
    basis = np.eye(comb(n, k_in))
    return np.asarray(fn(basis)).T


def lagrange_projectors(op: np.ndarray, eigenvalues) -> list:
    """Spectral projectors of a diagonalizable ``op`` with the given distinct eigenvalues."""
    eye = np.eye(op.shape[0])
    out = []
    for lam in eigenvalues:
        p = eye.copy()
        for mu in eigenvalues:
            if mu != lam:
                p = p @ (op - mu * eye) / (lam - mu)
        out.append(p)
    return out


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=float)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class ProjectorBundle:
    """Orthogonal projectors onto the named components of k-forms."""

    structure: HolonomyStructure
    degree: int
    components: dict = field(default_factory=dict)

    def matrix(self, label: str) -> np.ndarray:
        try:
            return self.components[label]
        except KeyError:
            raise InvalidInput(
                f"no component {label!r} for {self.structure.kind} degree {self.degree}; "
                f"have {sorted(self.components)}"
            ) from None

    @property
    def labels(self) -> list:
        return list(self.components)

    def apply(self, label: str, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.matrix(label).T

    def split(self, coeffs) -> dict:
        return {label: self.apply(label, coeffs) for label in self.components}

    def ranks(self) -> dict:
        return {label: int(round(np.trace(p))) for label, p in self.components.items()}


def _wedge_op(form: KForm, n: int, k: int):
    def fn(x):
        return fc.hodge_coeffs(fc.wedge_coeffs(form.coeffs, x, n, form.k, k), n, form.k + k)

    return fn


@lru_cache(maxsize=None)
def type_projector_complex(m: int, k: int, p: int, q: int) -> np.ndarray:
    """Hermitian projector onto the (p, q) part of complexified k-forms on C^m.

    Built from the orthogonal basis ``f^I ^ conj(f)^J`` with ``|I| = p`` and
    ``|J| = q``, where ``f^j = e^{2j} + i e^{2j+1}``.
    """
    n = 2 * m
    if p + q != k or not (0 <= p <= m and 0 <= q <= m):
        raise InvalidInput(f"type ({p},{q}) does not fit degree {k} in complex dimension {m}")
    f = np.zeros((m, n), dtype=complex)
    fbar = np.zeros((m, n), dtype=complex)
    for j in range(m):
        f[j, 2 * j], f[j, 2 * j + 1] = 1.0, 1j
        fbar[j, 2 * j], fbar[j, 2 * j + 1] = 1.0, -1j
    proj = np.zeros((comb(n, k), comb(n, k)), dtype=complex)
    for hol in itertools.combinations(range(m), p):
        for anti in itertools.combinations(range(m), q):
            b = np.ones(1, dtype=complex)
            deg = 0
            for vec in [f[j] for j in hol] + [fbar[j] for j in anti]:
                b = fc.wedge_coeffs(b, vec, n, deg, 1)
                deg += 1
            proj += np.outer(b, b.conj()) / np.vdot(b, b).real
    return proj


@lru_cache(maxsize=None)
def type_projector(m: int, k: int, p: int, q: int) -> np.ndarray:
    """Real projector onto real forms of type (p,q)+(q,p), or (p,p) when p == q, on C^m."""
    proj = type_projector_complex(m, k, p, q)
    if p != q:
        proj = proj + type_projector_complex(m, k, q, p)
    if np.max(np.abs(proj.imag), initial=0.0) > 1e-12:
        raise AssertionError("type projector failed to be real")
    return _frozen(_symmetrize(proj.real))


def real_type_projector(kind: str, k: int, p: int, q: int) -> np.ndarray:
    s = make_structure(kind)
    if not s.is_su:
        raise InvalidInput("type decompositions need an SU structure")
    return type_projector(s.complex_dim, k, p, q)


def kahler_forms(m: int):
    """(omega, Re Omega, Im Omega, J) on C^m = R^2m for any 1 <= m <= 4."""
    return _su_forms(m)


def _lambda_frames():
    """Rows lambda^k(e^mu), mu = 1..7, for k = 2, 4, 6."""
    eye = np.zeros((7, 8))
    eye[:, 1:] = np.eye(7)
    return {k: lambda_coeffs(k, eye) for k in (2, 4, 6)}


def lambda_coeffs(k: int, alpha) -> np.ndarray:
    """Batched lambda^k maps from 1-forms on the R^7 factor (index 0 must vanish)."""
    s = make_structure("spin7")
    phi, psi, big = s.forms["phi7"].coeffs, s.forms["psi7"].coeffs, s.forms["Phi"].coeffs
    alpha = np.asarray(alpha, dtype=float)
    e0 = np.zeros(8)
    e0[0] = 1.0
    if k == 2:
        return 0.5 * (fc.wedge_coeffs(e0, alpha, 8, 1, 1) + fc.interior_coeffs(alpha, phi, 8, 3))
    if k == 4:
        return (
            fc.wedge_coeffs(e0, fc.interior_coeffs(alpha, psi, 8, 4), 8, 1, 3)
            - fc.wedge_coeffs(alpha, phi, 8, 1, 3)
        ) / sqrt(8.0)
    if k == 6:
        return fc.wedge_coeffs(big, lambda_coeffs(2, alpha), 8, 4, 2) / 3.0
    raise InvalidInput(f"lambda maps exist for k in (2, 4, 6), got {k}")


def lambda_map(k: int, alpha: KForm) -> KForm:
    """Isometric embedding of 1-forms on the R^7 factor into the 7-dim piece of k-forms on R^8.

    A 1-form on R^7 is accepted and placed on indices 1..7; a 1-form on R^8 must
    have a vanishing e^0 component.
    """
    if alpha.k != 1:
        raise InvalidInput("lambda maps take 1-forms")
    if alpha.n == 7:
        alpha = fc.embed(alpha, 8, 1)
    elif alpha.n != 8:
        raise InvalidInput("lambda maps take 1-forms on R^7 or R^8")
    if abs(alpha.coeffs[0]) > 0:
        raise InvalidInput("lambda maps need a 1-form without e^0 component")
    return KForm(8, k, lambda_coeffs(k, alpha.coeffs))


@lru_cache(maxsize=None)
def projector_bundle(kind: str, k: int) -> ProjectorBundle:
    """All implemented irreducible projectors for ``kind`` in degree ``k``."""
    kind = normalize_kind(kind)
    s = make_structure(kind)
    comps: dict = {}
    if kind == "g2" and k == 2:
        op = operator_matrix(_wedge_op(s.forms["phi"], 7, 2), 7, 2)
        p7, p14 = lagrange_projectors(op, [2.0, -1.0])
        comps = {"7": p7, "14": p14}
    elif kind == "g2" and k == 3:
        phi = s.forms["phi"].coeffs
        psi = s.forms["psi"].coeffs
        frame = fc.interior_coeffs(np.eye(7), psi, 7, 4)
        p1 = np.outer(phi, phi) / 7.0
        p7 = frame.T @ frame / 4.0
        comps = {"1": p1, "7": p7, "27": np.eye(35) - p1 - p7}
    elif kind == "spin7" and k == 2:
        op = operator_matrix(_wedge_op(s.forms["Phi"], 8, 2), 8, 2)
        p7, p21 = lagrange_projectors(op, [3.0, -1.0])
        comps = {"7": p7, "21": p21}
    elif kind == "spin7" and k == 4:
        big = s.forms["Phi"].coeffs
        lam4 = _lambda_frames()[4]
        star = operator_matrix(lambda x: fc.hodge_coeffs(x, 8, 4), 8, 4)
        eye = np.eye(70)
        p1 = np.outer(big, big) / 14.0
        p7 = lam4.T @ lam4
        comps = {"1": p1, "7": p7, "27": 0.5 * (eye + star) - p1 - p7, "35": 0.5 * (eye - star)}
    elif kind == "su3" and k == 2:
        op = operator_matrix(_wedge_op(s.forms["omega"], 6, 2), 6, 2)
        p20, p11, pw = lagrange_projectors(op, [1.0, -1.0, 2.0])
        comps = {"[[2,0]]": p20, "[1,1]_0": p11, "R.omega": pw}
    elif kind == "su4" and k == 2:
        om2 = fc.power(s.forms["omega"], 2)
        op = operator_matrix(_wedge_op(om2, 8, 2), 8, 2)
        p20, p11, pw = lagrange_projectors(op, [2.0, -2.0, 6.0])
        re_op = operator_matrix(_wedge_op(s.forms["ReOmega"], 8, 2), 8, 2)
        eye = np.eye(28)
        a_plus = p20 @ (re_op + 2.0 * eye) / 4.0
        a_minus = p20 @ (2.0 * eye - re_op) / 4.0
        comps = {"R.omega": pw, "A+": a_plus, "A-": a_minus, "[1,1]_0": p11, "[[2,0]]": p20}
    elif kind == "su4" and k == 4:
        comps = {
            "[[4,0]]": real_type_projector("su4", 4, 4, 0),
            "[[3,1]]": real_type_projector("su4", 4, 3, 1),
            "[2,2]": real_type_projector("su4", 4, 2, 2),
            "R.ImOmega": np.outer(s.forms["ImOmega"].coeffs, s.forms["ImOmega"].coeffs) / 8.0,
            "omega^A-": _omega_wedge_a_minus(),
        }
    elif s.is_su:
        m = s.complex_dim
        for p in range(max(0, k - m), min(k, m) + 1):
            q = k - p
            if p < q:
                continue
            label = f"[{p},{q}]" if p == q else f"[[{p},{q}]]"
            comps[label] = real_type_projector(kind, k, p, q)
    else:
        raise InvalidInput(f"no projector bundle for {kind} in degree {k}")
    return ProjectorBundle(s, k, {lab: _frozen(_symmetrize(p)) for lab, p in comps.items()})


def _omega_wedge_a_minus() -> np.ndarray:
    """Projector onto omega ^ A- inside 4-forms on R^8.

    On [[2,0]] forms, wedging with omega scales norms by sqrt(2), so the
    projector is (1/2) W P W^T with W the matrix of omega ^ (.).
    """
    s = make_structure("su4")
    w = operator_matrix(lambda x: fc.wedge_coeffs(s.forms["omega"].coeffs, x, 8, 2, 2), 8, 2)
    a_minus = projector_bundle("su4", 2).matrix("A-")
    return 0.5 * w @ a_minus @ w.T


def proj4_7_matrix() -> np.ndarray:
    return projector_bundle("spin7", 4).matrix("7")


# --------------------------------------------------------------------------
# KForm-level wrappers


def _check_form(s: HolonomyStructure, a: KForm, k: int | None = None) -> None:
    if a.n != s.n:
        raise InvalidInput(f"{s.kind} structure lives on R^{s.n}, got a form on R^{a.n}")
    if k is not None and a.k != k:
        raise InvalidInput(f"expected a {k}-form, got degree {a.k}")


def proj2(s: HolonomyStructure, a: KForm) -> dict:
    """Split a 2-form into the irreducible components of the structure.

    For SU(4) the returned pieces are R.omega, A+, A- and [1,1]_0; the
    aggregate [[2,0]] = A+ + A- is omitted so the parts sum to ``a``.
    """
    _check_form(s, a, 2)
    bundle = projector_bundle(s.kind, 2)
    labels = [lab for lab in bundle.labels if not (s.kind == "su4" and lab == "[[2,0]]")]
    return {lab: KForm(s.n, 2, bundle.apply(lab, a.coeffs)) for lab in labels}


def proj4_7(s: HolonomyStructure, xi: KForm) -> KForm:
    """Orthogonal projection onto the 7-dimensional piece of 4-forms on R^8."""
    if s.kind not in ("spin7", "su4"):
        raise InvalidInput("proj4_7 needs a Spin(7) structure (or SU(4) through its induced one)")
    _check_form(s, xi, 4)
    return KForm(8, 4, xi.coeffs @ proj4_7_matrix().T)


_SU_ALIASES = {"a+": "A+", "a-": "A-", "romega": "R.omega", "r.omega": "R.omega", "[1,1]_0": "[1,1]_0"}


def su_projector(s: HolonomyStructure, k: int, target) -> np.ndarray:
    if not s.is_su:
        raise InvalidInput("su_proj needs an SU(3) or SU(4) structure")
    if isinstance(target, tuple):
        p, q = target
        if p + q != k:
            raise InvalidInput(f"type ({p},{q}) does not match degree {k}")
        return real_type_projector(s.kind, k, max(p, q), min(p, q))
    label = _SU_ALIASES.get(str(target).lower().replace(" ", ""), str(target))
    if k != 2:
        raise InvalidInput(f"component {target!r} is defined on 2-forms only")
    return projector_bundle(s.kind, 2).matrix(label)


def su_proj(s: HolonomyStructure, a: KForm, target) -> KForm:
    """Project onto a type component: ``(p, q)`` gives [[p,q]] (or [p,p]); also A+, A-, R.omega, [1,1]_0."""
    _check_form(s, a)
    return KForm(s.n, a.k, a.coeffs @ su_projector(s, a.k, target).T)
