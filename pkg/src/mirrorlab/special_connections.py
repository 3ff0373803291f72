"""Deformed Donaldson-Thomas and deformed Hermitian Yang-Mills diagnostics.

Everything here works with the real curvature ``E = -i F_nabla``.  With
that substitution the defining tensors become

* Spin(7): ``pi^2_7(E - *E^3/6)`` and ``pi^4_7(E^2)``,
* G2: ``*phi ^ E - E^3/6`` (a 6-form on R^7, seven components),
* dHYM with phase ``e^{i theta}``: the ``[[2,0]]`` part of ``E`` and
  ``Im(e^{-i theta} zeta)`` where ``(omega + iE)^m = zeta omega^m``.

Grid quantities are assembled slab by slab and point chunk by point chunk so
that 16^6 grids fit in a few hundred megabytes of temporaries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import forms_core as fc
from . import holonomy as ho
from . import identity_lab as il
from .errors import InvalidInput, NotFound
from .forms_core import KForm
from .torus_flow import (
    ConnectionField,
    TorusGrid,
    _slabs,
    curvature_rows,
    mean_curvature,
    pointwise_ginv_apply,
    volume,
)

RESIDUAL_TOL = 1e-10
NEWTON_TOL = 1e-12
NEWTON_FD_STEP = 1e-7
NEWTON_MAX_ITER = 50
NEWTON_RADIUS = 0.5
POINT_CHUNK = 1 << 15

_KIND_RE = re.compile(r"^dhym\(([^)]*)\)$")


# --------------------------------------------------------------------------
# kind handling


@dataclass(frozen=True)
class _Kind:
    name: str  # spin7 | g2 | dhym
    n: int
    theta: float = 0.0

    @property
    def m(self) -> int:
        return self.n // 2

    @property
    def label(self) -> str:
        return f"dhym({self.theta!r})" if self.name == "dhym" else self.name


def _parse_kind(kind: str, n: int | None, theta: float | None) -> _Kind:
    key = str(kind).lower().replace(" ", "")
    match = _KIND_RE.match(key)
    key = key.replace("-", "").replace("_", "")
    if match:
        try:
            parsed = float(match.group(1))
        except ValueError:
            raise InvalidInput(f"cannot read the phase in {kind!r}") from None
        if theta is not None and theta != parsed:
            raise InvalidInput(f"phase given twice ({kind!r} and theta={theta})")
        theta, key = parsed, "dhym"
    if key in ("su3", "su4"):
        want = 6 if key == "su3" else 8
        if n is not None and n != want:
            raise InvalidInput(f"{key} needs dimension {want}, the field lives on T^{n}")
        return _Kind("dhym", want, 0.0 if theta is None else float(theta))
    if key == "dhym":
        if n not in (6, 8):
            raise InvalidInput("dHYM needs a torus of dimension 6 or 8 (or kind su3/su4)")
        return _Kind("dhym", n, 0.0 if theta is None else float(theta))
    if key in ("spin7", "g2"):
        want = 8 if key == "spin7" else 7
        if n is not None and n != want:
            raise InvalidInput(f"{key} needs dimension {want}, the field lives on T^{n}")
        if theta not in (None, 0.0):
            raise InvalidInput("a phase only makes sense for dHYM")
        return _Kind(key, want)
    raise InvalidInput(f"unknown dDT kind {kind!r}; expected spin7, g2, dhym, dhym(theta), su3 or su4")


_COMPATIBLE = {"spin7": ("spin7", "su4"), "g2": ("g2",), "dhym": ("su3", "su4")}


def _field_kind(cfield: ConnectionField, kind: str | None, theta: float | None) -> _Kind:
    n = cfield.grid.n
    if kind is None:
        if cfield.structure is None:
            raise InvalidInput("the field carries no structure; pass kind explicitly")
        kind = "dhym" if cfield.structure in ("su3", "su4") else cfield.structure
    k = _parse_kind(kind, n, theta)
    if cfield.structure is not None and cfield.structure not in _COMPATIBLE[k.name]:
        raise InvalidInput(f"field structure {cfield.structure} does not support {k.label} residuals")
    return k


# --------------------------------------------------------------------------
# pointwise tensors


def _su_matrices(m: int):
    p20 = ho.type_projector(m, 2, 2, 0)
    jmat = ho.kahler_forms(m)[3].matrix
    return p20, jmat


def zeta_coeffs(e, m: int) -> np.ndarray:
    """``zeta`` with ``(omega + iE)^m = zeta omega^m``, as the Pfaffian of ``omega + iE``."""
    omega = ho.kahler_forms(m)[0].coeffs
    return fc.pfaffian_coeffs(omega + 1j * np.asarray(e, dtype=float), 2 * m)


def _orthonormal_range(proj: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(proj)
    return v[:, w > 0.5]


@lru_cache(maxsize=None)
def _g2_maps():
    """``*phi`` and the matrix of ``E -> *phi ^ E``."""
    psi = ho.make_structure("g2").forms["psi"].coeffs
    return psi, ho.operator_matrix(lambda x: fc.wedge_coeffs(psi, x, 7, 4, 2), 7, 2)


def pointwise_tensors(kind: _Kind, e: np.ndarray) -> tuple[dict, np.ndarray]:
    """Defining tensors and calibrated integrand at points ``e`` of shape ``(P, C(n,2))``.

    Returns ``({name: (P, dim) array}, calibrated (P,))``.
    """
    if kind.name == "spin7":
        c = il.cayley_parts(e)
        return {"F1": c.first, "F2": c.second}, c.calibrated
    if kind.name == "g2":
        psi, psi_wedge = _g2_maps()
        f2 = fc.wedge_coeffs(e, e, 7, 2, 2)
        first = e @ psi_wedge.T - fc.wedge_coeffs(f2, e, 7, 4, 2) / 6.0
        return {"F_G2": first}, 1.0 - 0.5 * (f2 @ psi)
    p20, _ = _su_matrices(kind.m)
    rot = np.exp(-1j * kind.theta) * zeta_coeffs(e, kind.m)
    return {"pi20": e @ p20.T, "im_phase": rot.imag[:, None]}, rot.real


def constant_residual(kind: str, f, theta: float | None = None) -> dict:
    """Defining tensors of a constant 2-form ``f`` (coefficients or KForm)."""
    coeffs = f.coeffs if isinstance(f, KForm) else np.asarray(f, dtype=float)
    k = _parse_kind(kind, _dim(coeffs), theta)
    tensors, calibrated = pointwise_tensors(k, coeffs.reshape(1, -1))
    out = {name: t[0] for name, t in tensors.items()}
    out["calibrated"] = float(calibrated[0])
    return out


def _dim(coeffs: np.ndarray) -> int:
    for n in range(2, fc.MAX_DIM + 1):
        if n * (n - 1) // 2 == coeffs.shape[-1]:
            return n
    raise InvalidInput(f"{coeffs.shape[-1]} coefficients do not form a 2-form")


def _point_chunks(cfield: ConnectionField, chunk: int = POINT_CHUNK):
    """Yield ``(flat_offset, E)`` with ``E`` of shape ``(p, C(n,2))`` covering the grid in C order."""
    grid = cfield.grid
    row = grid.points // grid.shape[0]
    for lo, hi in _slabs(grid):
        e = curvature_rows(cfield, lo, hi)
        cols = e.reshape(e.shape[0], -1)
        for s in range(0, cols.shape[1], chunk):
            yield lo * row + s, np.ascontiguousarray(cols[:, s:s + chunk].T)


# --------------------------------------------------------------------------
# residuals


@dataclass
class DdtResidual:
    kind: str
    component_norms: dict
    is_solution: bool
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "component_norms": {k: dict(v) for k, v in self.component_norms.items()},
            "is_solution": self.is_solution,
            "tolerance": self.tolerance,
            "details": dict(self.details),
        }


class _Sweep:
    """Accumulators for one pass over the grid."""

    def __init__(self, names):
        self.sq = {name: 0.0 for name in names}
        self.sup = {name: 0.0 for name in names}
        self.cal = 0.0
        self.min_abs_cal = math.inf
        self.zeta = 0j
        self.zeta_abs2 = 0.0
        self.zeta_sq = 0j

    def add(self, tensors: dict, calibrated: np.ndarray) -> None:
        for name, t in tensors.items():
            pt = np.einsum("pi,pi->p", t, t)
            self.sq[name] += float(pt.sum())
            self.sup[name] = max(self.sup[name], float(np.sqrt(pt.max(initial=0.0))))
        self.cal += float(calibrated.sum())
        self.min_abs_cal = min(self.min_abs_cal, float(np.abs(calibrated).min(initial=math.inf)))


def _sweep(cfield: ConnectionField, kind: _Kind, track_zeta: bool = False) -> _Sweep:
    names = {"spin7": ("F1", "F2"), "g2": ("F_G2",), "dhym": ("pi20", "im_phase")}[kind.name]
    acc = _Sweep(names)
    for _, e in _point_chunks(cfield):
        tensors, calibrated = pointwise_tensors(kind, e)
        acc.add(tensors, calibrated)
        if track_zeta:
            z = zeta_coeffs(e, kind.m)
            acc.zeta += complex(z.sum())
            acc.zeta_abs2 += float(np.sum(np.abs(z) ** 2))
            acc.zeta_sq += complex(np.sum(z * z))
    return acc


def ddt_residual(cfield: ConnectionField, kind: str | None = None, theta: float | None = None,
                 tol: float = RESIDUAL_TOL) -> DdtResidual:
    """L2 and sup norms of the defining tensors over the grid.

    ``kind`` is ``spin7``, ``g2``, ``dhym`` (phase ``theta``, default 0),
    ``dhym(theta)``, or ``su3``/``su4``; when omitted it is taken from the
    field's structure.
    """
    k = _field_kind(cfield, kind, theta)
    acc = _sweep(cfield, k)
    cell = cfield.grid.cell
    norms = {name: {"l2": math.sqrt(acc.sq[name] * cell), "linf": acc.sup[name]} for name in acc.sq}
    ok = all(v["l2"] <= tol and v["linf"] <= tol for v in norms.values())
    details = {"calibrated_integral": acc.cal * cell}
    if k.name == "spin7":
        details["min_abs_calibrated"] = acc.min_abs_cal
    if k.name == "dhym":
        details["theta"] = k.theta
    return DdtResidual(k.label, norms, ok, tol, details)


def flow_diagnostics(cfield: ConnectionField, vol: float) -> tuple:
    """``(res_1, res_2, slack)`` for flow traces; L2 norms of the defining tensors.

    For SU structures the phase is the one fixed by the data, ``arg of the
    integral of zeta``, and ``res_2`` is evaluated for that phase.
    """
    kind = _field_kind(cfield, None, None)
    cell = cfield.grid.cell
    if kind.name != "dhym":
        acc = _sweep(cfield, kind)
        res = [math.sqrt(acc.sq[name] * cell) for name in acc.sq]
        res_2 = res[1] if len(res) > 1 else math.nan
        return res[0], res_2, vol - abs(acc.cal * cell)
    acc = _sweep(cfield, kind, track_zeta=True)
    theta = float(np.angle(acc.zeta))
    # |Im(e^{-it} z)|^2 = (|z|^2 - Re(e^{-2it} z^2)) / 2
    im_sq = 0.5 * (acc.zeta_abs2 - (np.exp(-2j * theta) * acc.zeta_sq).real)
    return math.sqrt(acc.sq["pi20"] * cell), math.sqrt(max(im_sq, 0.0) * cell), vol - abs(acc.zeta) * cell


# --------------------------------------------------------------------------
# angle function


@dataclass
class AngleData:
    zeta: np.ndarray
    r: np.ndarray
    theta: np.ndarray


def _su_m(cfield: ConnectionField) -> int:
    s = cfield.structure
    if s is not None and s not in ("su3", "su4"):
        raise InvalidInput(f"the angle function needs an SU(3) or SU(4) structure, not {s}")
    if cfield.grid.n not in (6, 8):
        raise InvalidInput(f"the angle function needs T^6 or T^8, not T^{cfield.grid.n}")
    return cfield.grid.n // 2


def _angle_pass(cfield: ConnectionField, f20_tol: float | None = None):
    m = _su_m(cfield)
    p20, _ = _su_matrices(m)
    zeta = np.empty(cfield.grid.points, dtype=complex)
    worst = 0.0
    for off, e in _point_chunks(cfield):
        zeta[off:off + len(e)] = zeta_coeffs(e, m)
        if f20_tol is not None:
            part = e @ p20.T
            scale = np.maximum(1.0, np.sqrt(np.einsum("pi,pi->p", e, e)))
            worst = max(worst, float((np.sqrt(np.einsum("pi,pi->p", part, part)) / scale).max()))
    return zeta.reshape(cfield.grid.shape), worst


def angle_function(cfield: ConnectionField) -> AngleData:
    """``zeta`` with ``(omega + iE)^m = zeta omega^m``, its modulus and principal argument."""
    zeta, _ = _angle_pass(cfield)
    return AngleData(zeta, np.abs(zeta), np.angle(zeta))


def _wrap(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % (2 * np.pi) - np.pi


def _dtheta_rows(theta: np.ndarray, grid: TorusGrid, lo: int, hi: int) -> np.ndarray:
    """Branch-safe central differences of ``theta`` on rows ``lo..hi-1``, shape ``(n, rows, ...)``."""
    n0 = grid.shape[0]
    ext = np.take(theta, np.arange(lo - 1, hi + 1) % n0, axis=0)
    mid = ext[1:-1]
    out = np.empty((grid.n,) + mid.shape)
    out[0] = _wrap(ext[2:] - ext[:-2]) / (2 * grid.spacing[0])
    for ax in range(1, grid.n):
        out[ax] = _wrap(np.roll(mid, -1, axis=ax) - np.roll(mid, 1, axis=ax)) / (2 * grid.spacing[ax])
    return out


def kahler_test_field(grid: TorusGrid, amplitude: float, seed: int, modes: int = 3,
                      background: KForm | None = None, structure: str | None = None) -> ConnectionField:
    """Connection with ``E = F0 + d d^c f`` for a seeded trigonometric ``f``.

    ``f`` is a sum of ``cos(2 pi k.x + phase)`` with wave vectors ``k`` in
    ``{-1, 0, 1}^n``. Every central difference of such a mode carries the same
    factor ``sin(2 pi h) / (2 pi h)`` on a cubic grid, so dividing the
    amplitude by its square makes the discrete ``E`` the exact grid sample of
    one analytic field, independent of the resolution. ``d d^c f`` has type
    (1,1), so ``E`` does too when ``F0`` does.
    """
    if grid.n not in (6, 8):
        raise InvalidInput("Kahler test fields live on T^6 or T^8")
    if len(set(grid.shape)) != 1:
        raise InvalidInput("Kahler test fields need a cubic grid")
    m = grid.n // 2
    rng = np.random.Generator(np.random.PCG64(seed))
    h = grid.spacing[0]
    comp = (math.sin(2 * math.pi * h) / (2 * math.pi * h)) ** 2
    x = [2 * math.pi * grid.coordinates(i) for i in range(grid.n)]
    f = np.zeros(grid.shape)
    for _ in range(modes):
        k = np.zeros(grid.n, dtype=int)
        while not k.any():
            k = rng.integers(-1, 2, size=grid.n)
        phase = rng.uniform(0.0, 2 * math.pi)
        coef = rng.uniform(0.5, 1.0) * amplitude / (modes * (2 * math.pi) ** 2 * comp)
        f = f + coef * np.cos(sum(int(k[i]) * x[i] for i in range(grid.n)) + phase)
    df = np.stack([(np.roll(f, -1, i) - np.roll(f, 1, i)) / (2 * grid.spacing[i]) for i in range(grid.n)])
    jmat = _su_matrices(m)[1]
    pot = np.einsum("lk,l...->k...", jmat, df)
    bg = background if background is not None else KForm.zeros(grid.n, 2)
    return ConnectionField(grid, pot, bg, structure or ("su3" if m == 3 else "su4"))


@dataclass
class DazordComparison:
    rel_error: float
    lhs_l2: float
    diff_l2: float
    lhs_field: np.ndarray | None = None
    rhs_field: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"rel_error": self.rel_error, "lhs_l2": self.lhs_l2, "diff_l2": self.diff_l2}


def dazord_compare(cfield: ConnectionField, f20_tol: float = 1e-10, keep_fields: bool | None = None,
                   slab_points: int = 1 << 18) -> DazordComparison:
    """Compare ``H`` with ``-(det G)^(1/4) (G^-1)^*(J dtheta)`` on a Kahler torus.

    ``(J dtheta)(u) = dtheta(J u)``; ``dtheta`` comes from wrapped central
    differences. Fields are returned only when ``keep_fields`` is true (by
    default for grids of at most 2^21 points).
    """
    m = _su_m(cfield)
    grid, n = cfield.grid, cfield.grid.n
    zeta, worst = _angle_pass(cfield, f20_tol)
    if worst > f20_tol:
        raise InvalidInput(f"the [[2,0]] part of E reaches {worst:.3g} (relative), above {f20_tol:g}")
    theta = np.angle(zeta)
    del zeta
    lhs = mean_curvature(cfield)
    if keep_fields is None:
        keep_fields = grid.points <= 1 << 21
    rhs_field = np.empty_like(lhs) if keep_fields else None
    jmat = _su_matrices(m)[1]
    diff_sq = lhs_sq = 0.0
    for lo, hi in _slabs(grid, slab_points):
        dth = _dtheta_rows(theta, grid, lo, hi).reshape(n, -1)
        jdth = jmat.T @ dth  # (J dtheta)_k = sum_l J[l,k] dtheta_l
        e = curvature_rows(cfield, lo, hi).reshape(n * (n - 1) // 2, -1)
        sd, x = pointwise_ginv_apply(np.ascontiguousarray(e), np.ascontiguousarray(jdth), n)
        rhs = -(sd * x)
        left = lhs[:, lo:hi].reshape(n, -1)
        diff_sq += float(np.sum((left - rhs) ** 2))
        lhs_sq += float(np.sum(left ** 2))
        if keep_fields:
            rhs_field[:, lo:hi] = rhs.reshape((n, hi - lo) + grid.shape[1:])
    lhs_l2 = math.sqrt(lhs_sq * grid.cell)
    diff_l2 = math.sqrt(diff_sq * grid.cell)
    return DazordComparison(diff_l2 / max(1.0, lhs_l2), lhs_l2, diff_l2,
                            lhs if keep_fields else None, rhs_field)


def angle_derivative_check(cfield: ConnectionField, slab_points: int = 1 << 16) -> dict:
    """Central differences of ``theta`` against ``(1/2) tr((I + M^2)^-1 dM)`` with ``M = -E# J``.

    At a point where ``E = sum lambda_i e^{2i,2i+1}`` the trace formula is
    ``sum dlambda_i / (1 + lambda_i^2)``; written with ``M`` it needs no
    diagonalizing frame. ``dM`` uses central differences of ``E``, so both
    sides approximate the same derivative to second order in the spacing.
    """
    m = _su_m(cfield)
    grid, n = cfield.grid, cfield.grid.n
    theta = angle_function(cfield).theta
    jmat = _su_matrices(m)[1]
    eye = np.eye(n)
    sq = 0.0
    sup = 0.0
    for lo, hi in _slabs(grid, slab_points):
        dth = _dtheta_rows(theta, grid, lo, hi).reshape(n, -1).T  # (P, n)
        ext = curvature_rows(cfield, lo - 1, hi + 1)
        mid = ext[:, 1:-1]
        e_pts = mid.reshape(mid.shape[0], -1).T
        mmat = -fc.sharp_coeffs(e_pts, n) @ jmat
        lhs_inv = np.linalg.inv(eye + mmat @ mmat)
        formula = np.empty_like(dth)
        for ax in range(n):
            if ax == 0:
                de = (ext[:, 2:] - ext[:, :-2]) / (2 * grid.spacing[0])
            else:
                de = (np.roll(mid, -1, axis=ax + 1) - np.roll(mid, 1, axis=ax + 1)) / (2 * grid.spacing[ax])
            dm = -fc.sharp_coeffs(de.reshape(de.shape[0], -1).T, n) @ jmat
            formula[:, ax] = 0.5 * np.einsum("pij,pji->p", lhs_inv, dm)
        err = np.sqrt(np.sum((dth - formula) ** 2, axis=1))
        sq += float(np.sum(err ** 2))
        sup = max(sup, float(err.max()))
    return {"l2_error": math.sqrt(sq * grid.cell), "max_error": sup}


# --------------------------------------------------------------------------
# energy bounds


def energy_bound_report(cfield: ConnectionField, kind: str | None = None, theta: float | None = None) -> dict:
    """``{calibrated_integral, V, slack}`` with ``slack = V - |calibrated_integral|``.

    For dHYM the phase defaults to the argument of the integral of ``zeta``,
    which makes the calibrated integral equal to its modulus.
    """
    k = _field_kind(cfield, kind, theta)
    cell = cfield.grid.cell
    if k.name == "dhym" and theta is None and not _KIND_RE.match(str(kind or "").lower().replace(" ", "")):
        acc = _sweep(cfield, k, track_zeta=True)
        k = _Kind("dhym", k.n, float(np.angle(acc.zeta)))
        cal = float((np.exp(-1j * k.theta) * acc.zeta).real) * cell
    else:
        cal = _sweep(cfield, k).cal * cell
    vol = volume(cfield)
    out = {"kind": k.label, "calibrated_integral": cal, "V": vol, "slack": vol - abs(cal)}
    if k.name == "dhym":
        out["theta"] = k.theta
    return out


# --------------------------------------------------------------------------
# circle pullbacks


def pullback_circle(cfield: ConnectionField, new_points: int | None = None) -> ConnectionField:
    """Pull a connection on T^7 (G2) or T^6 (SU(3)) back to T^8 or T^7 along a projection.

    The new circle coordinate is array axis 0 and the original coordinates
    shift up by one, which matches ``Phi = dx ^ phi + *phi`` and
    ``phi = dx ^ omega + Re Omega`` for the canonical forms.
    """
    n = cfield.grid.n
    targets = {7: ("g2", "spin7"), 6: ("su3", "g2")}
    if n not in targets:
        raise InvalidInput(f"circle pullbacks start from T^6 or T^7, not T^{n}")
    base, target = targets[n]
    if cfield.structure not in (None, base):
        raise InvalidInput(f"a T^{n} pullback expects a {base} structure, not {cfield.structure}")
    n_new = new_points if new_points is not None else min(cfield.grid.shape)
    grid = TorusGrid(n + 1, (n_new,) + cfield.grid.shape, max_points=max(cfield.grid.max_points,
                                                                      n_new * cfield.grid.points))
    pot = np.zeros((n + 1,) + grid.shape)
    pot[1:] = cfield.potential[:, None]
    bg = fc.embed(cfield.background, n + 1, 1)
    return ConnectionField(grid, pot, bg, target)


# --------------------------------------------------------------------------
# Newton oracle


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int


def newton_solve(fun, x0, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER,
                 fd_step: float = NEWTON_FD_STEP) -> NewtonResult:
    """Minimum-norm Gauss-Newton for an underdetermined system ``fun(x) = 0``.

    The Jacobian uses forward differences; a step is halved until the
    residual norm stops increasing. Raises :class:`NotFound` when the
    residual does not drop below ``tol`` within ``max_iter`` iterations.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    res = float(np.linalg.norm(r))
    for it in range(max_iter + 1):
        if res < tol:
            return NewtonResult(x, res, it)
        if it == max_iter or not math.isfinite(res):
            break
        jac = np.empty((r.size, x.size))
        for i in range(x.size):
            xp = x.copy()
            xp[i] += fd_step
            jac[:, i] = (np.asarray(fun(xp), dtype=float) - r) / fd_step
        step = -np.linalg.lstsq(jac, r, rcond=None)[0]
        for _ in range(40):
            x_new = x + step
            r_new = np.asarray(fun(x_new), dtype=float)
            res_new = float(np.linalg.norm(r_new))
            if res_new <= res:
                break
            step *= 0.5
        else:
            break
        x, r, res = x_new, r_new, res_new
    raise NotFound(f"Gauss-Newton stopped at residual {res:.3g} (needs < {tol:g})")


def _ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return radius * rng.uniform() ** (1.0 / dim) * v


def constant_system(kind: str, theta: float = 0.0):
    """``(fun, basis, n)`` for the algebraic system over constant 2-forms.

    ``fun`` maps coordinates ``x`` to the residual vector; the 2-form is
    ``basis @ x``. dHYM kinds (``su3``/``su4``) use an orthonormal basis of
    the ``[1,1]`` forms so the ``[[2,0]]`` equations hold identically.
    """
    if str(kind).lower() not in ("spin7", "g2", "su3", "su4"):
        raise InvalidInput(f"constant systems exist for spin7, g2, su3 and su4, not {kind!r}")
    k = _parse_kind(kind, None, theta if str(kind).lower().startswith("su") else None)
    n = k.n
    if k.name == "spin7":
        b7 = _orthonormal_range(ho.projector_bundle("spin7", 2).matrix("7"))
        b47 = _orthonormal_range(ho.proj4_7_matrix())
        basis = np.eye(28)

        def fun(x):
            c = il.cayley_parts(x[None])
            return np.concatenate([c.first[0] @ b7, c.second[0] @ b47])

    elif k.name == "g2":
        basis = np.eye(21)

        def fun(x):
            return il.associator_parts(x[None]).first[0]

    else:
        basis = _orthonormal_range(ho.type_projector(k.m, 2, 1, 1))
        rot = np.exp(-1j * k.theta)

        def fun(x):
            return np.array([(rot * zeta_coeffs((basis @ x)[None], k.m)[0]).imag])

    return fun, basis, n


def newton_constant_ddt(kind: str, seed: int, theta: float = 0.0, radius: float = NEWTON_RADIUS,
                        max_iter: int = NEWTON_MAX_ITER, tol: float = NEWTON_TOL) -> KForm:
    """Constant dDT/dHYM 2-form from one seeded Gauss-Newton start.

    ``kind`` is spin7, g2, su3 or su4 (the last two with phase ``theta``).
    Raises :class:`NotFound` when the start does not converge; retry with
    another seed.
    """
    fun, basis, n = constant_system(kind, theta)
    rng = np.random.Generator(np.random.PCG64(seed))
    x0 = _ball(rng, basis.shape[1], radius)
    sol = newton_solve(fun, x0, tol=tol, max_iter=max_iter)
    return KForm(n, 2, basis @ sol.x)
