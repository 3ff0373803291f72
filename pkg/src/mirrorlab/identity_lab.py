"""Residual evaluators for the pointwise mirror identities and inequalities.

Everything here is stated for a *real* 2-form ``F`` (the real curvature proxy
``E = -i F_nabla`` of a Hermitian connection). With that convention the
calibrated terms carry minus signs, for example the Cayley term is
``1 - <F^2, Phi>/2 + *F^4/24``. A purely imaginary curvature ``F_nabla = iF``
gives back the same numbers: ``F_nabla^2 = -F^2`` flips the even-degree
pairings and ``F_nabla + *F_nabla^3/6 = i (F - *F^3/6)`` carries the odd ones.
:func:`body_convention_terms` evaluates the Spin(7) terms in that complex form
so the two conventions can be compared directly.

Every evaluator works on a batch of coefficient vectors (shape ``(S, C(n,2))``)
and returns the two sides together with the individual terms, so the relative
residual ``|lhs - rhs| / max(1, |lhs|, |rhs|, max|term|)`` can be formed
uniformly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Callable, NamedTuple

import numpy as np

from . import forms_core as fc
from . import holonomy as ho
from .errors import InvalidInput
from .forms_core import KForm

IDENTITY_TOL = 1e-9
LINEAR_TOL = 1e-12


class Evaluation(NamedTuple):
    lhs: np.ndarray
    rhs: np.ndarray
    terms: np.ndarray  # (S, T) magnitudes entering the scale


@dataclass
class ResidualReport:
    identity_id: str
    samples: int
    max_rel_residual: float
    mean_rel_residual: float
    scale: float
    passed: bool
    tolerance: float
    worst_input: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "identity_id": self.identity_id,
            "samples": self.samples,
            "max_rel_residual": self.max_rel_residual,
            "mean_rel_residual": self.mean_rel_residual,
            "scale": self.scale,
            "pass": self.passed,
            "tolerance": self.tolerance,
            "worst_input": self.worst_input,
            "details": self.details,
        }


def relative_residual(ev: Evaluation) -> tuple[np.ndarray, np.ndarray]:
    scale = np.maximum.reduce(
        [np.ones_like(ev.lhs), np.abs(ev.lhs), np.abs(ev.rhs), np.max(np.abs(ev.terms), axis=-1)]
    )
    return np.abs(ev.lhs - ev.rhs) / scale, scale


def _as_batch(f, n: int, k: int = 2) -> tuple[np.ndarray, bool]:
    if isinstance(f, KForm):
        if f.n != n or f.k != k:
            raise InvalidInput(f"expected a {k}-form on R^{n}, got degree {f.k} on R^{f.n}")
        return f.coeffs[None, :], True
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != comb(n, k):
        raise InvalidInput(f"expected coefficient rows of length {comb(n, k)} (a {k}-form on R^{n})")
    return arr, False


def _serialize(rows, n: int, k: int) -> list:
    return [KForm(n, k, r).to_dict() for r in np.atleast_2d(rows)]


def make_report(identity_id: str, ev: Evaluation, inputs, n: int, tol: float = IDENTITY_TOL, k: int = 2,
                details: dict | None = None) -> ResidualReport:
    rel, scale = relative_residual(ev)
    worst = int(np.argmax(rel)) if rel.size else 0
    mx = float(rel[worst]) if rel.size else 0.0
    return ResidualReport(
        identity_id=identity_id,
        samples=int(rel.size),
        max_rel_residual=mx,
        mean_rel_residual=float(np.mean(rel)) if rel.size else 0.0,
        scale=float(np.max(scale)) if rel.size else 1.0,
        passed=bool(mx <= tol and np.all(np.isfinite(rel))),
        tolerance=tol,
        worst_input=_serialize(inputs[worst], n, k) if rel.size else [],
        details=details or {},
    )


def _sq(x) -> np.ndarray:
    return fc.norm2_coeffs(x)


def _dot(a, b) -> np.ndarray:
    return np.sum(a * b, axis=-1)


# --------------------------------------------------------------------------
# Spin(7)


class CayleyParts(NamedTuple):
    f2: np.ndarray
    f3: np.ndarray
    star_f3: np.ndarray
    star_f4: np.ndarray
    pairing: np.ndarray  # <F^2, Phi>
    calibrated: np.ndarray  # 1 - <F^2,Phi>/2 + *F^4/24
    first: np.ndarray  # pi^2_7(F - *F^3/6)
    second: np.ndarray  # pi^4_7(F^2)


def cayley_parts(f) -> CayleyParts:
    f = np.asarray(f, dtype=float)
    big = ho.make_structure("spin7").forms["Phi"].coeffs
    p7 = ho.projector_bundle("spin7", 2).matrix("7")
    p47 = ho.proj4_7_matrix()
    f2 = fc.wedge_coeffs(f, f, 8, 2, 2)
    f3 = fc.wedge_coeffs(f2, f, 8, 4, 2)
    f4 = fc.wedge_coeffs(f3, f, 8, 6, 2)
    star_f3 = fc.hodge_coeffs(f3, 8, 6)
    star_f4 = f4[..., 0]
    pairing = f2 @ big
    calibrated = 1.0 - 0.5 * pairing + star_f4 / 24.0
    first = (f - star_f3 / 6.0) @ p7.T
    second = f2 @ p47.T
    return CayleyParts(f2, f3, star_f3, star_f4, pairing, calibrated, first, second)


def cayley_eval(f) -> tuple[Evaluation, Evaluation]:
    """Main Cayley equality against the LU determinant and against the wedge formula."""
    c = cayley_parts(f)
    terms = np.stack([c.calibrated**2, 4.0 * _sq(c.first), 2.0 * _sq(c.second)], axis=-1)
    lhs = terms.sum(axis=-1)
    return (
        Evaluation(lhs, fc.det_lu_coeffs(f, 8), terms),
        Evaluation(lhs, fc.det_formula_coeffs(f, 8), terms),
    )


def cayley_degree_eval(f) -> dict:
    f = np.asarray(f, dtype=float)
    c = cayley_parts(f)
    p7 = ho.projector_bundle("spin7", 2).matrix("7")
    pf = f @ p7.T
    pf3 = c.star_f3 @ p7.T
    t2 = np.stack([-c.pairing, 4.0 * _sq(pf)], axis=-1)
    t4 = np.stack(
        [0.25 * c.pairing**2, c.star_f4 / 12.0, -(4.0 / 3.0) * _dot(pf, pf3), 2.0 * _sq(c.second)], axis=-1
    )
    t6 = np.stack([-c.pairing * c.star_f4 / 24.0, _sq(pf3) / 9.0], axis=-1)
    return {
        "cayley_deg2": Evaluation(t2.sum(-1), _sq(f), t2),
        "cayley_deg4": Evaluation(t4.sum(-1), 0.25 * _sq(c.f2), t4),
        "cayley_deg6": Evaluation(t6.sum(-1), _sq(c.f3) / 36.0, t6),
    }


def body_convention_terms(f) -> dict:
    """Spin(7) terms written for the imaginary curvature ``F_nabla = i F``.

    Returns ``|1 + <F_nabla^2,Phi>/2 + *F_nabla^4/24|``,
    ``|pi^2_7(F_nabla + *F_nabla^3/6)|`` and ``|pi^4_7(F_nabla^2)|`` computed
    in complex arithmetic.
    """
    fn = 1j * np.asarray(f, dtype=float)
    big = ho.make_structure("spin7").forms["Phi"].coeffs
    p7 = ho.projector_bundle("spin7", 2).matrix("7")
    p47 = ho.proj4_7_matrix()
    f2 = fc.wedge_coeffs(fn, fn, 8, 2, 2)
    f3 = fc.wedge_coeffs(f2, fn, 8, 4, 2)
    f4 = fc.wedge_coeffs(f3, fn, 8, 6, 2)
    scal = 1.0 + 0.5 * (f2 @ big) + f4[..., 0] / 24.0
    first = (fn + fc.hodge_coeffs(f3, 8, 6) / 6.0) @ p7.T
    second = f2 @ p47.T
    return {
        "calibrated": np.abs(scal),
        "calibrated_imag": np.abs(scal.imag),
        "first": np.sqrt(_sq(first)),
        "second": np.sqrt(_sq(second)),
    }


# --------------------------------------------------------------------------
# G2


class AssociatorParts(NamedTuple):
    f2: np.ndarray
    f3: np.ndarray
    calibrated: np.ndarray  # 1 - <F^2, *phi>/2
    first: np.ndarray  # *phi ^ F - F^3/6
    second: np.ndarray  # phi ^ *F^2


def associator_parts(f) -> AssociatorParts:
    f = np.asarray(f, dtype=float)
    s = ho.make_structure("g2")
    phi, psi = s.forms["phi"].coeffs, s.forms["psi"].coeffs
    f2 = fc.wedge_coeffs(f, f, 7, 2, 2)
    f3 = fc.wedge_coeffs(f2, f, 7, 4, 2)
    calibrated = 1.0 - 0.5 * (f2 @ psi)
    first = fc.wedge_coeffs(psi, f, 7, 4, 2) - f3 / 6.0
    second = fc.wedge_coeffs(phi, fc.hodge_coeffs(f2, 7, 4), 7, 3, 3)
    return AssociatorParts(f2, f3, calibrated, first, second)


def associator_eval(f) -> Evaluation:
    a = associator_parts(f)
    terms = np.stack([a.calibrated**2, _sq(a.first), 0.25 * _sq(a.second)], axis=-1)
    return Evaluation(terms.sum(-1), fc.det_lu_coeffs(f, 7), terms)


# --------------------------------------------------------------------------
# SU(m)


def kahler_powers(f, m: int) -> list:
    """``[(omega + iF)^p / p!  for p = 0..m]`` as complex coefficient arrays."""
    omega = ho.kahler_forms(m)[0].coeffs
    n = 2 * m
    z = omega + 1j * np.asarray(f, dtype=float)
    out = [np.ones(z.shape[:-1] + (1,), dtype=complex), z]
    for p in range(2, m + 1):
        out.append(fc.wedge_coeffs(out[-1], z, n, 2 * (p - 1), 2) / p)
    return out


def top_coefficient(f, m: int) -> np.ndarray:
    """zeta with ``(omega + iF)^m = zeta omega^m``."""
    return kahler_powers(f, m)[m][..., 0]


def sl3_eval(f) -> Evaluation:
    z = kahler_powers(f, 3)
    p31 = ho.type_projector(3, 4, 3, 1)
    terms = np.stack([_sq(z[3]), 2.0 * _sq(z[2] @ p31.T)], axis=-1)
    return Evaluation(terms.sum(-1), fc.det_lu_coeffs(f, 6), terms)


def sl4_eval(f) -> Evaluation:
    z = kahler_powers(f, 4)
    p42 = ho.type_projector(4, 6, 4, 2)
    p40 = ho.type_projector(4, 4, 4, 0)
    terms = np.stack([_sq(z[4]), 2.0 * _sq(z[3] @ p42.T), 8.0 * _sq(z[2] @ p40.T)], axis=-1)
    return Evaluation(terms.sum(-1), fc.det_lu_coeffs(f, 8), terms)


def sl4_degree_eval(f) -> dict:
    f = np.asarray(f, dtype=float)
    s = ho.make_structure("su4")
    om = s.forms["omega"].coeffs
    re_om = s.forms["ReOmega"].coeffs
    b2 = ho.projector_bundle("su4", 2)
    p20, pa, pb = b2.matrix("[[2,0]]"), b2.matrix("A+"), b2.matrix("A-")
    p42 = ho.type_projector(4, 6, 4, 2)
    p40 = ho.type_projector(4, 4, 4, 0)
    om2 = fc.wedge_coeffs(om, om, 8, 2, 2)
    om3 = fc.wedge_coeffs(om2, om, 8, 4, 2)
    f2 = fc.wedge_coeffs(f, f, 8, 2, 2)
    f3 = fc.wedge_coeffs(f2, f, 8, 4, 2)
    f4 = fc.wedge_coeffs(f3, f, 8, 6, 2)[..., 0]
    sf3 = fc.hodge_coeffs(f3, 8, 6)
    a = f2 @ om2  # *(omega^2 ^ F^2)
    b = fc.wedge_coeffs(om3, f, 8, 6, 2)[..., 0]  # *(omega^3 ^ F)
    c = sf3 @ om  # *(omega ^ F^3)
    om_f2 = fc.wedge_coeffs(om, f2, 8, 2, 4)
    pf, psf3 = f @ p20.T, sf3 @ p20.T
    t2 = np.stack([-0.5 * a, b**2 / 36.0, 2.0 * _sq(pf)], axis=-1)
    t4 = np.stack(
        [
            a**2 / 16.0,
            f4 / 12.0,
            -b * c / 18.0,
            0.5 * _sq(om_f2 @ p42.T),
            -(2.0 / 3.0) * _dot(pf, psf3),
            2.0 * _sq(f2 @ p40.T),
        ],
        axis=-1,
    )
    t6 = np.stack([-a * f4 / 48.0, c**2 / 36.0, _sq(psf3) / 18.0], axis=-1)
    star_om_f2 = fc.hodge_coeffs(om_f2, 8, 6)
    rw = np.stack(
        [
            (2.0 / 3.0) * _dot(f @ pa.T, sf3 @ pa.T),
            -(2.0 / 3.0) * _dot(f @ pb.T, sf3 @ pb.T),
            0.5 * _sq(star_om_f2 @ pa.T),
            -0.5 * _sq(star_om_f2 @ pb.T),
        ],
        axis=-1,
    )
    rw_lhs = 0.25 * a * (f2 @ re_om)
    return {
        "sl4_deg2": Evaluation(t2.sum(-1), _sq(f), t2),
        "sl4_deg4": Evaluation(t4.sum(-1), 0.25 * _sq(f2), t4),
        "sl4_deg6": Evaluation(t6.sum(-1), _sq(f3) / 36.0, t6),
        "sl4_deg4_rewrite": Evaluation(rw_lhs, rw.sum(-1), np.concatenate([rw, rw_lhs[..., None]], axis=-1)),
    }


def sln_f02_eval(f, m: int) -> Evaluation:
    z = kahler_powers(f, m)
    top = _sq(z[m])
    return Evaluation(top, fc.det_lu_coeffs(f, 2 * m), top[..., None])


# --------------------------------------------------------------------------
# public checks


def cayley_check(f, tol: float = IDENTITY_TOL) -> ResidualReport:
    arr, _ = _as_batch(f, 8)
    lu, formula = cayley_eval(arr)
    rel_lu, _ = relative_residual(lu)
    rel_formula, _ = relative_residual(formula)
    ev = lu if np.max(rel_lu) >= np.max(rel_formula) else formula
    return make_report(
        "cayley",
        ev,
        arr,
        8,
        tol,
        details={"max_rel_vs_lu": float(np.max(rel_lu)), "max_rel_vs_formula": float(np.max(rel_formula))},
    )


def cayley_degree_check(f, tol: float = IDENTITY_TOL) -> list:
    arr, _ = _as_batch(f, 8)
    return [make_report(name, ev, arr, 8, tol) for name, ev in cayley_degree_eval(arr).items()]


def associator_check(f, tol: float = IDENTITY_TOL) -> ResidualReport:
    arr, _ = _as_batch(f, 7)
    return make_report("associator", associator_eval(arr), arr, 7, tol)


def sl3_check(f, tol: float = IDENTITY_TOL) -> ResidualReport:
    arr, _ = _as_batch(f, 6)
    return make_report("sl3", sl3_eval(arr), arr, 6, tol)


def sl4_check(f, tol: float = IDENTITY_TOL) -> list:
    """Main SL4 equality, the three degree pieces and the degree-4 rewrite."""
    arr, _ = _as_batch(f, 8)
    out = [make_report("sl4", sl4_eval(arr), arr, 8, tol)]
    out += [make_report(name, ev, arr, 8, tol) for name, ev in sl4_degree_eval(arr).items()]
    return out


def sln_f02_check(nc: int, f, tol: float = IDENTITY_TOL, f02_tol: float = 1e-12) -> ResidualReport:
    """``|(omega + iF)^m / m!|^2 = det(I + F#)`` for F without [[2,0]] part."""
    if nc not in (2, 3, 4):
        raise InvalidInput("complex dimension must be 2, 3 or 4")
    arr, _ = _as_batch(f, 2 * nc)
    p20 = ho.type_projector(nc, 2, 2, 0)
    leak = np.sqrt(_sq(arr @ p20.T))
    if np.max(leak) > f02_tol * np.maximum(1.0, np.sqrt(_sq(arr))).max():
        raise InvalidInput(f"input has a [[2,0]] component of size {np.max(leak):.3e}")
    return make_report(f"sl{nc}_f02", sln_f02_eval(arr, nc), arr, 2 * nc, tol)


# --------------------------------------------------------------------------
# inequalities


class BoundEvaluation(NamedTuple):
    calibrated: np.ndarray
    bound: np.ndarray  # sqrt(det(I + F#))
    equality_residuals: dict  # name -> (S,) norms that must vanish at equality


def _bound_report(identity_id: str, be: BoundEvaluation, arr, n: int, tol: float) -> ResidualReport:
    slack = be.bound - np.abs(be.calibrated)
    scale = np.maximum(1.0, be.bound)
    violation = np.maximum(0.0, -slack) / scale
    worst = int(np.argmax(violation))
    eq_max = {name: float(np.max(v)) for name, v in be.equality_residuals.items()}
    details = {
        "min_slack": float(np.min(slack)),
        "max_slack": float(np.max(slack)),
        "equality_residual_max": eq_max,
    }
    if slack.size == 1:
        details["slack"] = float(slack[0])
        details["equality_residuals"] = {k: float(v[0]) for k, v in be.equality_residuals.items()}
    return ResidualReport(
        identity_id=identity_id,
        samples=int(slack.size),
        max_rel_residual=float(violation[worst]),
        mean_rel_residual=float(np.mean(violation)),
        scale=float(np.max(scale)),
        passed=bool(violation[worst] <= tol),
        tolerance=tol,
        worst_input=_serialize(arr[int(np.argmin(slack))], n, 2),
        details=details,
    )


def cayley_to_asso_bound(f) -> BoundEvaluation:
    f = np.asarray(f, dtype=float)
    psi = ho.make_structure("spin7").forms["psi7"].coeffs
    f2 = fc.wedge_coeffs(f, f, 8, 2, 2)
    f3 = fc.wedge_coeffs(f2, f, 8, 4, 2)
    e0 = np.zeros(8)
    e0[0] = 1.0
    return BoundEvaluation(
        1.0 - 0.5 * (f2 @ psi),
        np.sqrt(fc.det_lu_coeffs(f, 8)),
        {
            "i(e0)F": np.sqrt(_sq(fc.interior_coeffs(e0, f, 8, 2))),
            "F^*phi-F^3/6": np.sqrt(_sq(fc.wedge_coeffs(f, psi, 8, 2, 4) - f3 / 6.0)),
        },
    )


def asso_to_sl3_bound(f) -> BoundEvaluation:
    f = np.asarray(f, dtype=float)
    om = fc.embed_coeffs(ho.make_structure("su3").forms["omega"].coeffs, 6, 2, 7, 1)
    om2 = fc.wedge_coeffs(om, om, 7, 2, 2)
    f2 = fc.wedge_coeffs(f, f, 7, 2, 2)
    e1 = np.zeros(7)
    e1[0] = 1.0
    f6 = fc.restrict_coeffs(f, 7, 2, 6, 1)
    z = kahler_powers(f6, 3)
    p20 = ho.type_projector(3, 2, 2, 0)
    return BoundEvaluation(
        1.0 - 0.25 * (f2 @ om2),
        np.sqrt(fc.det_lu_coeffs(f, 7)),
        {
            "i(e1)F": np.sqrt(_sq(fc.interior_coeffs(e1, f, 7, 2))),
            "Im(omega+iF)^3": np.abs(z[3][..., 0].imag),
            "pi20(F)": np.sqrt(_sq(f6 @ p20.T)),
        },
    )


def restriction_bound_check(kind: str, f, tol: float = IDENTITY_TOL) -> ResidualReport:
    """Check the restricted calibration inequality and record its slack."""
    if kind == "cayley_to_asso":
        arr, _ = _as_batch(f, 8)
        return _bound_report(kind, cayley_to_asso_bound(arr), arr, 8, tol)
    if kind == "asso_to_sl3":
        arr, _ = _as_batch(f, 7)
        return _bound_report(kind, asso_to_sl3_bound(arr), arr, 7, tol)
    raise InvalidInput(f"unknown restriction kind {kind!r}")


CONTEXT_DIMS = {"spin7": 8, "g2": 7, "sl3": 6, "sl4": 8}


def phase_bound(context: str, f, theta: float = 0.0) -> BoundEvaluation:
    f = np.asarray(f, dtype=float)
    if context == "spin7":
        c = cayley_parts(f)
        return BoundEvaluation(
            c.calibrated,
            np.sqrt(fc.det_lu_coeffs(f, 8)),
            {"F1": np.sqrt(_sq(c.first)), "F2": np.sqrt(_sq(c.second))},
        )
    if context == "g2":
        a = associator_parts(f)
        return BoundEvaluation(
            a.calibrated,
            np.sqrt(fc.det_lu_coeffs(f, 7)),
            {"F_G2": np.sqrt(_sq(a.first)), "phi^*F^2": np.sqrt(_sq(a.second))},
        )
    if context in ("sl3", "sl4"):
        m = 3 if context == "sl3" else 4
        z = top_coefficient(f, m) * np.exp(-1j * theta)
        p20 = ho.type_projector(m, 2, 2, 0)
        return BoundEvaluation(
            z.real,
            np.sqrt(fc.det_lu_coeffs(f, 2 * m)),
            {"pi20(F)": np.sqrt(_sq(f @ p20.T)), "Im(e^-itheta zeta)": np.abs(z.imag)},
        )
    raise InvalidInput(f"unknown context {context!r}; expected one of {sorted(CONTEXT_DIMS)}")


def phase_bound_check(context: str, f, theta: float = 0.0, tol: float = IDENTITY_TOL) -> ResidualReport:
    """``|calibrated term| <= sqrt(det(I + F#))`` with slack and equality residuals."""
    if context not in CONTEXT_DIMS:
        raise InvalidInput(f"unknown context {context!r}; expected one of {sorted(CONTEXT_DIMS)}")
    arr, _ = _as_batch(f, CONTEXT_DIMS[context])
    return _bound_report(f"phase_bound_{context}", phase_bound(context, arr, theta), arr, CONTEXT_DIMS[context], tol)


# --------------------------------------------------------------------------
# supporting lemmas


def _require_in(name: str, x, proj, tol: float = 1e-10) -> None:
    x = np.asarray(x)
    leak = np.sqrt(_sq(x - x @ proj.T))
    if np.max(leak, initial=0.0) > tol * max(1.0, float(np.max(np.sqrt(_sq(x)), initial=0.0))):
        raise InvalidInput(f"input {name} is not in the required subspace (leak {np.max(leak):.3e})")


def _vector_ev(lhs, rhs) -> Evaluation:
    """Turn a vector identity lhs = rhs into a scalar Evaluation on |lhs - rhs|."""
    diff = np.sqrt(_sq(np.asarray(lhs) - np.asarray(rhs)))
    mag = np.stack([np.sqrt(_sq(lhs)), np.sqrt(_sq(rhs))], axis=-1)
    return Evaluation(diff, np.zeros_like(diff), mag)


def _lemma_g2_contractions(inp) -> dict:
    u = np.asarray(inp["u"], dtype=float)
    s = ho.make_structure("g2")
    phi, psi = s.forms["phi"].coeffs, s.forms["psi"].coeffs
    star_u = fc.hodge_coeffs(u, 7, 1)
    iphi = fc.interior_coeffs(u, phi, 7, 3)
    ipsi = fc.interior_coeffs(u, psi, 7, 4)
    return {
        "g2_phi_ipsi": _vector_ev(fc.wedge_coeffs(phi, ipsi, 7, 3, 3), -4.0 * star_u),
        "g2_psi_iphi": _vector_ev(fc.wedge_coeffs(psi, iphi, 7, 4, 2), 3.0 * star_u),
        "g2_phi_iphi": _vector_ev(fc.wedge_coeffs(phi, iphi, 7, 3, 2), 2.0 * fc.hodge_coeffs(iphi, 7, 2)),
        "g2_phi_iphi_alt": _vector_ev(fc.wedge_coeffs(phi, iphi, 7, 3, 2), 2.0 * fc.wedge_coeffs(u, psi, 7, 1, 4)),
    }


def _lemma_spin7_24form(inp) -> dict:
    f = np.asarray(inp["F"], dtype=float)
    xi = np.asarray(inp["xi"], dtype=float)
    f2 = fc.wedge_coeffs(f, f, 8, 2, 2)
    f3 = fc.wedge_coeffs(f2, f, 8, 4, 2)
    f4 = fc.wedge_coeffs(f3, f, 8, 6, 2)[..., 0]
    sf3 = fc.hodge_coeffs(f3, 8, 6)
    lhs = fc.wedge_coeffs(xi, fc.wedge_coeffs(sf3, sf3, 8, 2, 2), 8, 4, 4)[..., 0]
    rhs = 1.5 * (f2 @ xi.T if xi.ndim == 1 else _dot(f2, xi)) * f4
    return {"spin7_24form": Evaluation(lhs, rhs, np.stack([lhs, rhs], axis=-1))}


def _lemma_spin7_two_form_norms(inp) -> dict:
    b = ho.projector_bundle("spin7", 2)
    beta = np.asarray(inp["beta"], dtype=float)
    gamma = np.asarray(inp["gamma"], dtype=float)
    _require_in("beta", beta, b.matrix("7"))
    _require_in("gamma", gamma, b.matrix("21"))
    b2 = fc.wedge_coeffs(beta, beta, 8, 2, 2)
    b3 = fc.wedge_coeffs(b2, beta, 8, 4, 2)
    g2 = fc.wedge_coeffs(gamma, gamma, 8, 2, 2)
    g4 = fc.wedge_coeffs(g2, g2, 8, 4, 4)[..., 0]
    nb, ng = _sq(beta), _sq(gamma)
    bg = _sq(fc.wedge_coeffs(beta, gamma, 8, 2, 2))
    return {
        "spin7_beta_cubed": _vector_ev(b3, 1.5 * nb[..., None] * fc.hodge_coeffs(beta, 8, 2)),
        "spin7_beta_quartic": Evaluation(nb**2, (2.0 / 3.0) * _sq(b2), np.stack([nb**2], -1)),
        "spin7_gamma_quartic": Evaluation(ng**2, _sq(g2) - g4 / 3.0, np.stack([ng**2, _sq(g2), g4 / 3.0], -1)),
        "spin7_beta_gamma": Evaluation(nb * ng, 2.0 * bg, np.stack([nb * ng], -1)),
    }


def _lemma_su3_contractions(inp) -> dict:
    u = np.asarray(inp["u"], dtype=float)
    s = ho.make_structure("su3")
    re_om, im_om = s.forms["ReOmega"].coeffs, s.forms["ImOmega"].coeffs
    jmat = s.complex_structure.matrix
    iu = fc.interior_coeffs(u, re_om, 6, 3)
    return {
        "su3_iu_re": _vector_ev(fc.hodge_coeffs(fc.wedge_coeffs(iu, re_om, 6, 2, 3), 6, 5), 2.0 * u @ jmat.T),
        "su3_iu_im": _vector_ev(fc.hodge_coeffs(fc.wedge_coeffs(iu, im_om, 6, 2, 3), 6, 5), -2.0 * u),
        "su3_iu_norm": Evaluation(_sq(iu), 2.0 * _sq(u), np.stack([_sq(iu)], -1)),
    }


def _lemma_su3_omega_eigen(inp) -> dict:
    beta = np.asarray(inp["beta"], dtype=float)
    om = ho.make_structure("su3").forms["omega"].coeffs
    op = ho._wedge_op(ho.make_structure("su3").forms["omega"], 6, 2)
    p20 = ho.type_projector(3, 2, 2, 0)
    p11 = ho.type_projector(3, 2, 1, 1)
    pw = np.outer(om, om) / 3.0
    b20, b110, bw = beta @ p20.T, beta @ (p11 - pw).T, beta @ pw.T
    return {
        "su3_omega_on_20": _vector_ev(op(b20), b20),
        "su3_omega_on_11": _vector_ev(op(b110), -b110),
        "su3_omega_on_omega": _vector_ev(op(bw), 2.0 * bw),
    }


def _lemma_su3_re_im_wedge(inp) -> dict:
    beta = np.asarray(inp["beta"], dtype=float)
    s = ho.make_structure("su3")
    re_om, im_om = s.forms["ReOmega"].coeffs, s.forms["ImOmega"].coeffs
    p20 = ho.type_projector(3, 2, 2, 0)
    r = _sq(fc.wedge_coeffs(beta, re_om, 6, 2, 3))
    i = _sq(fc.wedge_coeffs(beta, im_om, 6, 2, 3))
    t = 2.0 * _sq(beta @ p20.T)
    return {
        "su3_re_wedge": Evaluation(r, t, np.stack([r, t], -1)),
        "su3_im_wedge": Evaluation(i, t, np.stack([i, t], -1)),
    }


def _lemma_su4_omega2_eigen(inp) -> dict:
    beta = np.asarray(inp["beta"], dtype=float)
    s = ho.make_structure("su4")
    om = s.forms["omega"].coeffs
    op = ho._wedge_op(fc.power(s.forms["omega"], 2), 8, 2)
    p20 = ho.type_projector(4, 2, 2, 0)
    p11 = ho.type_projector(4, 2, 1, 1)
    pw = np.outer(om, om) / 4.0
    b20, b110, bw = beta @ p20.T, beta @ (p11 - pw).T, beta @ pw.T
    return {
        "su4_omega2_on_20": _vector_ev(op(b20), 2.0 * b20),
        "su4_omega2_on_11": _vector_ev(op(b110), -2.0 * b110),
        "su4_omega2_on_omega": _vector_ev(op(bw), 6.0 * bw),
        "su4_omega_component": _vector_ev(bw, (beta @ om)[..., None] * om / 4.0),
    }


def _lemma_su4_reomega_split(inp) -> dict:
    beta = np.asarray(inp["beta"], dtype=float)
    xi = np.asarray(inp["xi"], dtype=float)
    s = ho.make_structure("su4")
    re_op = ho._wedge_op(s.forms["ReOmega"], 8, 2)
    b2 = ho.projector_bundle("su4", 2)
    b4 = ho.projector_bundle("su4", 4)
    pa, pb, pw = b2.matrix("A+"), b2.matrix("A-"), b2.matrix("R.omega")
    p7 = ho.projector_bundle("spin7", 2).matrix("7")
    p47 = ho.proj4_7_matrix()
    ba, bb = beta @ pa.T, beta @ pb.T
    re_om, im_om = s.forms["ReOmega"].coeffs, s.forms["ImOmega"].coeffs
    p40 = ho.type_projector(4, 4, 4, 0)
    span40 = (np.outer(re_om, re_om) + np.outer(im_om, im_om)) / 8.0
    return {
        "su4_re_on_A+": _vector_ev(re_op(ba), 2.0 * ba),
        "su4_re_on_A-": _vector_ev(re_op(bb), -2.0 * bb),
        "su4_lambda2_7": _vector_ev(beta @ p7.T, beta @ (pw + pa).T),
        "su4_lambda4_7": _vector_ev(xi @ p47.T, xi @ (b4.matrix("R.ImOmega") + b4.matrix("omega^A-")).T),
        "su4_40_span": _vector_ev(xi @ p40.T, xi @ span40.T),
    }


def _lemma_su4_four_form(inp) -> dict:
    xi = np.asarray(inp["xi"], dtype=float)
    om = ho.make_structure("su4").forms["omega"].coeffs
    p = ho.projector_bundle("su4", 4).matrix("omega^A-")
    pb = ho.projector_bundle("su4", 2).matrix("A-")
    lhs = 2.0 * _sq(xi @ p.T)
    rhs = _sq(fc.hodge_coeffs(fc.wedge_coeffs(om, xi, 8, 2, 4), 8, 6) @ pb.T)
    return {"su4_four_form": Evaluation(lhs, rhs, np.stack([lhs, rhs], -1))}


def _lemma_hodge_types(m: int):
    def run(inp) -> dict:
        beta = np.asarray(inp["beta"], dtype=float)
        n = 2 * m
        out = {}
        for p, q in [(2, 0), (1, 1)]:
            lhs = fc.hodge_coeffs(beta @ ho.type_projector(m, 2, p, q).T, n, 2)
            rhs = fc.hodge_coeffs(beta, n, 2) @ ho.type_projector(m, n - 2, m - q, m - p).T
            out[f"su{m}_hodge_{p}{q}"] = _vector_ev(lhs, rhs)
        return out

    return run


class Lemma(NamedTuple):
    run: Callable
    sample: Callable  # (rng, count, scale) -> inputs dict


def _sample_u(n):
    return lambda rng, count, r: {"u": rng.uniform(-r, r, (count, n))}


def _sample_beta(n):
    return lambda rng, count, r: {"beta": rng.uniform(-r, r, (count, comb(n, 2)))}


def _sample_two_form_split(rng, count, r):
    b = ho.projector_bundle("spin7", 2)
    f = rng.uniform(-r, r, (count, 28))
    return {"beta": b.apply("7", f), "gamma": b.apply("21", f)}


LEMMAS = {
    "g2_contractions": Lemma(_lemma_g2_contractions, _sample_u(7)),
    "spin7_24form": Lemma(
        _lemma_spin7_24form,
        lambda rng, count, r: {"F": rng.uniform(-r, r, (count, 28)), "xi": rng.uniform(-r, r, (count, 70))},
    ),
    "spin7_two_form_norms": Lemma(_lemma_spin7_two_form_norms, _sample_two_form_split),
    "su3_contractions": Lemma(_lemma_su3_contractions, _sample_u(6)),
    "su3_omega_eigen": Lemma(_lemma_su3_omega_eigen, _sample_beta(6)),
    "su3_re_im_wedge": Lemma(_lemma_su3_re_im_wedge, _sample_beta(6)),
    "su3_hodge_types": Lemma(_lemma_hodge_types(3), _sample_beta(6)),
    "su4_omega2_eigen": Lemma(_lemma_su4_omega2_eigen, _sample_beta(8)),
    "su4_reomega_split": Lemma(
        _lemma_su4_reomega_split,
        lambda rng, count, r: {"beta": rng.uniform(-r, r, (count, 28)), "xi": rng.uniform(-r, r, (count, 70))},
    ),
    "su4_four_form": Lemma(_lemma_su4_four_form, lambda rng, count, r: {"xi": rng.uniform(-r, r, (count, 70))}),
    "su4_hodge_types": Lemma(_lemma_hodge_types(4), _sample_beta(8)),
}


def algebra_lemma_check(lemma_id: str, inputs: dict, tol: float = IDENTITY_TOL) -> list:
    """Residual reports for one supporting lemma; ``inputs`` maps argument names to batches."""
    if lemma_id not in LEMMAS:
        raise InvalidInput(f"unknown lemma {lemma_id!r}; expected one of {sorted(LEMMAS)}")
    batch = {k: np.atleast_2d(v.coeffs if isinstance(v, KForm) else np.asarray(v, dtype=float)) for k, v in inputs.items()}
    evals = LEMMAS[lemma_id].run(batch)
    first = next(iter(batch.values()))
    n = {"u": first.shape[1]}.get(next(iter(batch)), None)
    reports = []
    for name, ev in evals.items():
        rel, scale = relative_residual(ev)
        worst = int(np.argmax(rel))
        reports.append(
            ResidualReport(
                identity_id=name,
                samples=int(rel.size),
                max_rel_residual=float(rel[worst]),
                mean_rel_residual=float(np.mean(rel)),
                scale=float(np.max(scale)),
                passed=bool(rel[worst] <= tol),
                tolerance=tol,
                worst_input=[{k: [float(x) for x in v[worst]] for k, v in batch.items()}],
                details={"lemma": lemma_id} if n is None else {"lemma": lemma_id, "n": n},
            )
        )
    return reports


# --------------------------------------------------------------------------
# randomized suites


class _Check(NamedTuple):
    name: str
    n: int
    sampler: Callable  # (rng, count, r) -> array
    run: Callable  # (array, tol) -> list of reports


def _uniform(n):
    return lambda rng, count, r: rng.uniform(-r, r, (count, comb(n, 2)))


def _uniform_11(m):
    def sample(rng, count, r):
        f = rng.uniform(-r, r, (count, comb(2 * m, 2)))
        return f @ ho.type_projector(m, 2, 1, 1).T

    return sample


def _listify(fn):
    def run(arr, tol):
        out = fn(arr, tol)
        return out if isinstance(out, list) else [out]

    return run


def _det_check(n):
    def run(arr, tol):
        ev = Evaluation(fc.det_formula_coeffs(arr, n), fc.det_lu_coeffs(arr, n), np.zeros((arr.shape[0], 1)))
        rep = make_report(f"det_n{n}", ev, arr, n, min(tol, 1e-10))
        formula = fc.det_formula_coeffs(arr, n)
        rep.details["min_formula"] = float(np.min(formula))
        rep.passed = rep.passed and bool(np.min(formula) >= 1.0)
        return [rep]

    return run


def _registry(context: str) -> list:
    if context == "spin7":
        return [
            _Check("cayley", 8, _uniform(8), _listify(cayley_check)),
            _Check("cayley_degrees", 8, _uniform(8), _listify(cayley_degree_check)),
            _Check("cayley_to_asso", 8, _uniform(8), _listify(lambda a, t: restriction_bound_check("cayley_to_asso", a, t))),
            _Check("phase_spin7", 8, _uniform(8), _listify(lambda a, t: phase_bound_check("spin7", a, 0.0, t))),
        ]
    if context == "g2":
        return [
            _Check("associator", 7, _uniform(7), _listify(associator_check)),
            _Check("asso_to_sl3", 7, _uniform(7), _listify(lambda a, t: restriction_bound_check("asso_to_sl3", a, t))),
            _Check("phase_g2", 7, _uniform(7), _listify(lambda a, t: phase_bound_check("g2", a, 0.0, t))),
        ]
    if context == "sl3":
        return [
            _Check("sl3", 6, _uniform(6), _listify(sl3_check)),
            _Check("sl3_f02", 6, _uniform_11(3), _listify(lambda a, t: sln_f02_check(3, a, t))),
            _Check("phase_sl3", 6, _uniform(6), _listify(lambda a, t: phase_bound_check("sl3", a, 0.0, t))),
        ]
    if context == "sl4":
        return [
            _Check("sl4", 8, _uniform(8), _listify(sl4_check)),
            _Check("sl4_f02", 8, _uniform_11(4), _listify(lambda a, t: sln_f02_check(4, a, t))),
            _Check("phase_sl4", 8, _uniform(8), _listify(lambda a, t: phase_bound_check("sl4", a, 0.0, t))),
        ]
    if context == "det":
        return [_Check(f"det_n{n}", n, _uniform(n), _det_check(n)) for n in (6, 7, 8)]
    if context == "lemmas":
        checks = []
        for lemma_id, lemma in LEMMAS.items():
            checks.append(
                _Check(
                    lemma_id,
                    0,
                    lemma.sample,
                    lambda inp, tol, lemma_id=lemma_id: algebra_lemma_check(lemma_id, inp, tol),
                )
            )
        return checks
    raise InvalidInput(f"unknown context {context!r}")


SUITE_CONTEXTS = ("spin7", "g2", "sl3", "sl4", "det", "lemmas")


def _merge(parts: list) -> list:
    """Combine per-chunk reports (same identities, in order) into whole-suite reports."""
    merged = []
    for group in zip(*parts):
        total = sum(r.samples for r in group)
        worst = max(group, key=lambda r: r.max_rel_residual)
        details = dict(worst.details)
        for key in ("min_slack",):
            if key in details:
                details[key] = min(r.details[key] for r in group)
        if "max_slack" in details:
            details["max_slack"] = max(r.details["max_slack"] for r in group)
        details.pop("slack", None)
        details.pop("equality_residuals", None)
        merged.append(
            ResidualReport(
                identity_id=worst.identity_id,
                samples=total,
                max_rel_residual=worst.max_rel_residual,
                mean_rel_residual=sum(r.mean_rel_residual * r.samples for r in group) / total,
                scale=max(r.scale for r in group),
                passed=all(r.passed for r in group),
                tolerance=worst.tolerance,
                worst_input=worst.worst_input,
                details=details,
            )
        )
    return merged


def random_suite(context: str, count: int, seed: int, value_range: float = 2.0, tol: float = IDENTITY_TOL,
                 threads: int = 1, chunk: int = 2500) -> list:
    """Run every check registered for ``context`` on seeded uniform samples.

    Samples for check ``j`` come from a PCG64 stream keyed by ``(seed, j)`` and
    are cut into fixed-size chunks before any fan-out, so results do not depend
    on ``threads``.
    """
    if context not in SUITE_CONTEXTS:
        raise InvalidInput(f"unknown context {context!r}; expected one of {list(SUITE_CONTEXTS)}")
    if count < 1:
        raise InvalidInput("count must be at least 1")
    reports = []
    for j, check in enumerate(_registry(context)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), j])))
        data = check.sampler(rng, count, float(value_range))
        bounds = list(range(0, count, chunk)) + [count]
        slices = [slice(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

        def piece(sl, data=data, check=check):
            sub = {k: v[sl] for k, v in data.items()} if isinstance(data, dict) else data[sl]
            return check.run(sub, tol)

        if threads > 1 and len(slices) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(piece, slices))
        else:
            parts = [piece(sl) for sl in slices]
        reports.extend(_merge(parts))
    return reports
