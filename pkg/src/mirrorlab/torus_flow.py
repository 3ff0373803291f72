"""Hermitian connections on flat unit tori and the line bundle mean curvature flow.

A connection is stored as a real potential ``a`` (one value per coordinate
direction and grid point) on top of a constant background 2-form ``F0``; the
real curvature proxy is ``E = F0 + da``. Every field array is component-first:
a k-form field on an ``N_0 x ... x N_{n-1}`` grid has shape
``(C(n, k), N_0, ..., N_{n-1})`` and grid axis ``j`` is array axis ``1 + j``.

Derivatives are second-order central differences with periodic wrap. Because
the difference operators along different axes commute, the discrete ``d``
squares to zero exactly and the discrete ``delta`` is its exact adjoint for
the inner product ``sum(<., .>) * cell``.

The pointwise work (``sqrt(det(I + E#))`` and the 2-form
``K = sqrt(det(I + E#)) (G^-1 E#)_flat``) dominates the cost. It runs through a
small numba kernel (blocked Gauss-Jordan elimination), with a numpy path
(``np.linalg.det`` / ``np.linalg.inv``) that serves as fallback and oracle.
Large grids are processed in slabs along grid axis 0 so that no full 2-form
field is ever held in memory.

With ``A = I + E#`` and ``G = I - E# E# = A^T A`` the code uses
``(det G)^(1/4) = sqrt(det A)`` and ``G^-1 E# = -(A^-1 - A^-T) / 2``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import comb
from typing import Callable

import numpy as np

from . import forms_core as fc
from .errors import FlowDiverged, InvalidInput
from .forms_core import Endo, KForm

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

DEFAULT_MAX_POINTS = 1 << 25
SLAB_POINTS = 1 << 20
DEFAULT_CFL = 0.1
TRACE_COLUMNS = ("t", "V", "H_l2", "res_1", "res_2", "slack", "dt")


class IntegralityWarning(UserWarning):
    """Background curvature is not in 2*pi*Z, so it is not a line bundle class."""


# --------------------------------------------------------------------------
# grid and field containers


@dataclass(frozen=True)
class TorusGrid:
    n: int
    shape: tuple
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if not 2 <= self.n <= fc.MAX_DIM:
            raise InvalidInput(f"torus dimension must be in 2..{fc.MAX_DIM}")
        if len(shape) != self.n:
            raise InvalidInput(f"shape has {len(shape)} axes for a {self.n}-torus")
        if any(s < 4 or s % 2 for s in shape):
            raise InvalidInput("every axis needs an even number of points >= 4")
        if self.points > self.max_points:
            raise InvalidInput(f"{self.points} grid points exceed the budget of {self.max_points}")

    @classmethod
    def cube(cls, n: int, size: int, **kw) -> "TorusGrid":
        return cls(n, (size,) * n, **kw)

    @property
    def points(self) -> int:
        return math.prod(self.shape)

    @property
    def spacing(self) -> tuple:
        return tuple(1.0 / s for s in self.shape)

    @property
    def cell(self) -> float:
        return math.prod(self.spacing)

    def coordinates(self, axis: int) -> np.ndarray:
        """Coordinates along one axis, shaped to broadcast against the grid."""
        x = np.arange(self.shape[axis]) / self.shape[axis]
        shape = [1] * self.n
        shape[axis] = self.shape[axis]
        return x.reshape(shape)

    def zeros(self, k: int) -> np.ndarray:
        return np.zeros((comb(self.n, k),) + self.shape)


@dataclass
class ConnectionField:
    """Potential ``a`` of shape ``(n, *grid.shape)`` over a constant background."""

    grid: TorusGrid
    potential: np.ndarray
    background: KForm
    structure: str | None = None

    def __post_init__(self):
        n = self.grid.n
        pot = np.ascontiguousarray(self.potential, dtype=float)
        if pot.shape != (n,) + self.grid.shape:
            raise InvalidInput(f"potential must have shape {(n,) + self.grid.shape}, got {pot.shape}")
        self.potential = pot
        if self.background.n != n or self.background.k != 2:
            raise InvalidInput("background must be a 2-form on the torus dimension")
        if self.structure is not None:
            from .holonomy import DIMENSIONS, normalize_kind

            self.structure = normalize_kind(self.structure)
            if DIMENSIONS[self.structure] != n:
                raise InvalidInput(f"structure {self.structure} lives in dimension {DIMENSIONS[self.structure]}, not {n}")

    @classmethod
    def flat(cls, grid: TorusGrid, background: KForm | None = None, structure: str | None = None) -> "ConnectionField":
        bg = background if background is not None else KForm.zeros(grid.n, 2)
        return cls(grid, np.zeros((grid.n,) + grid.shape), bg, structure)

    @classmethod
    def random(cls, grid: TorusGrid, amplitude: float, seed: int, modes: int = 2, background: KForm | None = None,
               structure: str | None = None) -> "ConnectionField":
        """Smooth random potential built from a few low Fourier modes per component."""
        rng = np.random.Generator(np.random.PCG64(seed))
        pot = np.zeros((grid.n,) + grid.shape)
        for c in range(grid.n):
            for _ in range(modes):
                axis = int(rng.integers(grid.n))
                freq = int(rng.integers(1, 3))
                phase = rng.uniform(0, 2 * np.pi)
                pot[c] += rng.uniform(-amplitude, amplitude) * np.sin(2 * np.pi * freq * grid.coordinates(axis) + phase)
        return cls.flat(grid, background, structure).with_potential(pot)

    def with_potential(self, potential: np.ndarray) -> "ConnectionField":
        return replace(self, potential=np.array(potential, dtype=float))

    def copy(self) -> "ConnectionField":
        return self.with_potential(self.potential)

    def background_integral(self) -> bool:
        """True when every background coefficient is an integer multiple of 2*pi."""
        q = self.background.coeffs / (2 * np.pi)
        return bool(np.allclose(q, np.round(q), atol=1e-9))

    def warn_if_not_integral(self) -> None:
        if not self.background_integral():
            warnings.warn(
                "background 2-form is not in 2*pi*Z; functionals only depend on E so results are still computed",
                IntegralityWarning,
                stacklevel=2,
            )


# --------------------------------------------------------------------------
# discrete exterior calculus


def _periodic_diff(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """``(f(x + h) - f(x - h)) / 2h`` along ``axis`` with periodic wrap."""
    out = np.empty_like(f)
    n = f.shape[axis]

    def sl(a, b):
        idx = [slice(None)] * f.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    np.subtract(f[sl(2, n)], f[sl(0, n - 2)], out=out[sl(1, n - 1)])
    np.subtract(f[sl(1, 2)], f[sl(n - 1, n)], out=out[sl(0, 1)])
    np.subtract(f[sl(0, 1)], f[sl(n - 2, n - 1)], out=out[sl(n - 1, n)])
    out *= 1.0 / (2.0 * h)
    return out


def _diff(f: np.ndarray, axis: int, h: float, halo: bool) -> np.ndarray:
    """Central difference of a grid array (grid axes only).

    With ``halo`` the array is a slab whose first and last rows along axis 0
    are ghost rows; the result then covers the interior rows only.
    """
    if not halo:
        return _periodic_diff(f, axis, h)
    if axis == 0:
        return (f[2:] - f[:-2]) * (1.0 / (2.0 * h))
    return _periodic_diff(f[1:-1], axis, h)


@lru_cache(maxsize=None)
def _d_table(n: int, k: int):
    """Entries ``(out, axis, src, sign)`` for ``(d alpha)_I = sum_m (-1)^m D_{I_m} alpha_{I - I_m}``."""
    src_tab, out_tab = fc.index_table(n, k), fc.index_table(n, k + 1)
    rows = []
    for o, idx in enumerate(out_tab.indices):
        for m, j in enumerate(idx):
            rest = idx[:m] + idx[m + 1 :]
            rows.append((o, j, src_tab.position[rest], -1.0 if m % 2 else 1.0))
    return tuple(rows)


@lru_cache(maxsize=None)
def _delta_table(n: int, k: int):
    """Entries for ``(delta beta)_J = -sum_j D_j beta_{jJ}``; beta has degree k."""
    src_tab, out_tab = fc.index_table(n, k), fc.index_table(n, k - 1)
    rows = []
    for o, rest in enumerate(out_tab.indices):
        for j in range(n):
            if j in rest:
                continue
            idx = tuple(sorted(rest + (j,)))
            m = idx.index(j)
            rows.append((o, j, src_tab.position[idx], 1.0 if m % 2 else -1.0))
    return tuple(rows)


def _field_degree(field_arr: np.ndarray, n: int) -> int:
    return fc.degree_from_length(n, field_arr.shape[0])


def _alloc_cols(c: int, shape: tuple) -> np.ndarray:
    """Uninitialized ``(c, *shape)`` array whose component stride avoids powers of two."""
    p = math.prod(shape)
    return np.empty((c, p + _PAD))[:, :p].reshape((c,) + tuple(shape))


def _apply_table_numpy(lower, mid, upper, table, grid, n_out, init):
    src = np.concatenate([lower[:, None], mid, upper[:, None]], axis=1)
    h = grid.spacing
    out = np.zeros((n_out,) + mid.shape[1:])
    if init is not None:
        out += init
    for o, j, s, sign in table:
        term = _diff(src[s], j, h[j], True)
        if sign > 0:
            out[o] += term
        else:
            out[o] -= term
    return out


def _apply_table(lower, mid, upper, table, grid: TorusGrid, n_out: int, init=None, backend=None) -> np.ndarray:
    """Apply a difference table to ``mid`` with ghost rows ``lower``/``upper`` along grid axis 0.

    ``init`` (broadcastable to the output) seeds the result, e.g. with the
    background 2-form.
    """
    if _resolve_backend(backend) == "numpy":
        return _apply_table_numpy(lower, mid, upper, table, grid, n_out, init)
    rows_out = mid.shape[1]
    rest = mid.shape[2:]
    r = math.prod(rest)
    out = _alloc_cols(n_out, (rows_out,) + rest)
    seed = np.zeros(n_out) if init is None else np.asarray(init, dtype=float).reshape(n_out)
    out3 = out.reshape(n_out, rows_out, r)
    tab = np.array(table, dtype=float).reshape(-1, 4)
    strides = [math.prod(rest[i + 1 :]) for i in range(len(rest))]
    inv2h = np.array([0.5 / hj for hj in grid.spacing])
    _stencil(
        lower.reshape(lower.shape[0], r),
        mid.reshape(mid.shape[0], rows_out, r),
        upper.reshape(upper.shape[0], r),
        tab[:, 0].astype(np.int64),
        tab[:, 1].astype(np.int64),
        tab[:, 2].astype(np.int64),
        tab[:, 3].copy(),
        inv2h,
        np.array(rest, dtype=np.int64),
        np.array(strides, dtype=np.int64),
        seed,
        out3,
    )
    return out


def _ghosts(src: np.ndarray, halo: bool):
    """Split into (lower ghost row, interior, upper ghost row) along grid axis 0."""
    if halo:
        return src[:, 0], src[:, 1:-1], src[:, -1]
    return src[:, -1], src, src[:, 0]


def exterior_d(alpha: np.ndarray, grid: TorusGrid, k: int | None = None, halo: bool = False,
               backend: str | None = None) -> np.ndarray:
    """Discrete exterior derivative of a k-form field.

    With ``halo`` the input is a slab whose first and last rows along grid
    axis 0 are ghost rows, and the output covers the interior rows only.
    """
    n = grid.n
    k = _field_degree(alpha, n) if k is None else k
    if not 0 <= k < n:
        raise InvalidInput(f"d of a {k}-form on a {n}-torus")
    return _apply_table(*_ghosts(alpha, halo), _d_table(n, k), grid, comb(n, k + 1), None, backend)


def codifferential(beta: np.ndarray, grid: TorusGrid, k: int | None = None, halo: bool = False,
                   backend: str | None = None) -> np.ndarray:
    """Discrete ``delta``, the exact adjoint of :func:`exterior_d`."""
    n = grid.n
    k = _field_degree(beta, n) if k is None else k
    if not 1 <= k <= n:
        raise InvalidInput("delta needs degree >= 1")
    return _apply_table(*_ghosts(beta, halo), _delta_table(n, k), grid, comb(n, k - 1), None, backend)


def exterior_calculus(field_arr: np.ndarray, op: str, grid: TorusGrid, k: int | None = None) -> np.ndarray:
    """Apply the discrete ``d`` or ``delta`` to a k-form field."""
    if op == "d":
        return exterior_d(field_arr, grid, k)
    if op == "delta":
        return codifferential(field_arr, grid, k)
    raise InvalidInput(f"unknown operator {op!r}; expected 'd' or 'delta'")


def l2_inner(a: np.ndarray, b: np.ndarray, grid: TorusGrid) -> float:
    return float(np.vdot(a, b).real) * grid.cell


# --------------------------------------------------------------------------
# pointwise kernels


def _numpy_k(e_cols: np.ndarray, n: int, with_k: bool = True, chunk: int = 1 << 16):
    """numpy version of the pointwise kernel; ``e_cols`` has shape (C, P)."""
    P = e_cols.shape[1]
    sd = np.empty(P)
    k_out = np.empty_like(e_cols) if with_k else None
    for lo in range(0, P, chunk):
        hi = min(P, lo + chunk)
        a = fc.sharp_coeffs(e_cols[:, lo:hi].T, n) + np.eye(n)
        s = np.sqrt(np.linalg.det(a))
        sd[lo:hi] = s
        if with_k:
            inv = np.linalg.inv(a)
            k_out[:, lo:hi] = fc.flat_coeffs(-0.5 * s[:, None, None] * (inv - np.swapaxes(inv, -1, -2))).T
    return sd, k_out


def _numpy_ginv_apply(e_cols: np.ndarray, v_cols: np.ndarray, n: int, chunk: int = 1 << 16):
    P = e_cols.shape[1]
    sd = np.empty(P)
    w = np.empty_like(v_cols)
    for lo in range(0, P, chunk):
        hi = min(P, lo + chunk)
        a = fc.sharp_coeffs(e_cols[:, lo:hi].T, n) + np.eye(n)
        sd[lo:hi] = np.sqrt(np.linalg.det(a))
        inv = np.linalg.inv(a)
        ginv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
        w[:, lo:hi] = np.einsum("pij,jp->ip", ginv, v_cols[:, lo:hi])
    return sd, w


# The numba path works on blocks of _BLOCK points with the point index
# innermost, so LLVM can vectorize the elimination. ``I + E#`` has symmetric
# part ``I``; every leading principal minor is ``det(I + S_k) >= 1`` for a
# skew ``S_k``, so Gauss-Jordan elimination needs no pivoting.
_BLOCK = 64
_PAD = 72  # extra doubles per component row; breaks power-of-two strides


def _padded_cols(arr: np.ndarray) -> np.ndarray:
    """Copy ``(C, ...)`` data into a ``(C, P)`` view whose row stride is not a power of two.

    Component rows ``2^k`` doubles apart all map to the same cache sets, which
    makes the per-point gather several times slower.
    """
    c = arr.shape[0]
    p = arr.size // c if c else 0
    try:
        view = arr.reshape(c, p)
        if np.shares_memory(view, arr) and view.strides[1] == 8 and view.strides[0] % 4096:
            return view
    except ValueError:
        pass
    buf = np.empty((c, p + _PAD))
    view = buf[:, :p]
    view[...] = arr.reshape(c, p)
    return view


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _stencil(lower, mid, upper, tab_o, tab_j, tab_s, tab_w, inv2h, rest_shape, rest_strides, seed, out):
        """``out[o] = seed[o] + sum of w * D_j src[s]`` over the table rows.

        ``mid`` holds the output rows along grid axis 0; ``lower`` and
        ``upper`` are the neighbouring rows just outside it.
        """
        rows = out.shape[1]
        R = out.shape[2]
        for o in range(out.shape[0]):
            for r in range(rows):
                for p in range(R):
                    out[o, r, p] = seed[o]
        for t in range(tab_o.shape[0]):
            o = tab_o[t]
            j = tab_j[t]
            s = tab_s[t]
            w = tab_w[t] * inv2h[j]
            if j == 0:
                for r in range(rows):
                    up = upper[s] if r == rows - 1 else mid[s, r + 1]
                    dn = lower[s] if r == 0 else mid[s, r - 1]
                    for p in range(R):
                        out[o, r, p] += w * (up[p] - dn[p])
                continue
            st = rest_strides[j - 1]
            N = rest_shape[j - 1]
            blk = N * st
            last = (N - 1) * st
            for r in range(rows):
                src = mid[s, r]
                dst = out[o, r]
                for base in range(0, R, blk):
                    # interior of the block: neighbours at +-st without wrap
                    for x in range(base + st, base + last):
                        dst[x] += w * (src[x + st] - src[x - st])
                    # first and last slice wrap around
                    for i in range(st):
                        dst[base + i] += w * (src[base + st + i] - src[base + last + i])
                        dst[base + last + i] += w * (src[base + i] - src[base + last - st + i])

    @numba.njit(cache=True, fastmath=True)
    def _gauss_jordan_block(a, inv, det, n):
        piv = np.empty(_BLOCK)
        f = np.empty(_BLOCK)
        for q in range(_BLOCK):
            det[q] = 1.0
        for c in range(n):
            for q in range(_BLOCK):
                p = a[c, c, q]
                det[q] *= p
                piv[q] = 1.0 / p
            for j in range(n):
                for q in range(_BLOCK):
                    a[c, j, q] *= piv[q]
                    inv[c, j, q] *= piv[q]
            for r in range(n):
                if r == c:
                    continue
                for q in range(_BLOCK):
                    f[q] = a[r, c, q]
                for j in range(n):
                    for q in range(_BLOCK):
                        a[r, j, q] -= f[q] * a[c, j, q]
                for j in range(n):
                    for q in range(_BLOCK):
                        inv[r, j, q] -= f[q] * inv[c, j, q]

    @numba.njit(cache=True, fastmath=True)
    def _load_block(e_cols, start, m, rows, cols, a, inv):
        n = a.shape[0]
        a[:] = 0.0
        inv[:] = 0.0
        for i in range(n):
            for q in range(_BLOCK):
                a[i, i, q] = 1.0
                inv[i, i, q] = 1.0
        for c in range(rows.shape[0]):
            i = rows[c]
            j = cols[c]
            for q in range(m):
                v = e_cols[c, start + q]
                a[j, i, q] = v
                a[i, j, q] = -v

    @numba.njit(cache=True, fastmath=True)
    def _numba_k(e_cols, rows, cols, n, with_k, sd, k_out):
        a = np.empty((n, n, _BLOCK))
        inv = np.empty((n, n, _BLOCK))
        det = np.empty(_BLOCK)
        P = e_cols.shape[1]
        for start in range(0, P, _BLOCK):
            m = min(_BLOCK, P - start)
            _load_block(e_cols, start, m, rows, cols, a, inv)
            _gauss_jordan_block(a, inv, det, n)
            for q in range(m):
                sd[start + q] = math.sqrt(det[q])
            if with_k:
                for c in range(rows.shape[0]):
                    i = rows[c]
                    j = cols[c]
                    for q in range(m):
                        k_out[c, start + q] = -0.5 * sd[start + q] * (inv[j, i, q] - inv[i, j, q])

    @numba.njit(cache=True, fastmath=True)
    def _numba_ginv(e_cols, v_cols, rows, cols, n, sd, w):
        a = np.empty((n, n, _BLOCK))
        inv = np.empty((n, n, _BLOCK))
        det = np.empty(_BLOCK)
        P = e_cols.shape[1]
        for start in range(0, P, _BLOCK):
            m = min(_BLOCK, P - start)
            _load_block(e_cols, start, m, rows, cols, a, inv)
            _gauss_jordan_block(a, inv, det, n)
            for q in range(m):
                sd[start + q] = math.sqrt(det[q])
            for i in range(n):
                for q in range(m):
                    s = 0.0
                    for j in range(n):
                        s += 0.5 * (inv[i, j, q] + inv[j, i, q]) * v_cols[j, start + q]
                    w[i, start + q] = s


def _resolve_backend(backend: str | None) -> str:
    if backend is None:
        return "numba" if HAVE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise InvalidInput(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise InvalidInput("numba is not installed")
    return backend


def pointwise_k(e_cols: np.ndarray, n: int, with_k: bool = True, backend: str | None = None):
    """Return ``sqrt(det(I + E#))`` and the 2-form ``K`` for columns of ``E``.

    ``e_cols`` has shape ``(C(n,2), ...)`` and is read as ``(C(n,2), P)``;
    ``K`` comes back as ``(C(n,2), P)`` (or ``None`` when ``with_k`` is false).
    """
    if _resolve_backend(backend) == "numpy":
        e_cols = np.asarray(e_cols, dtype=float)
        return _numpy_k(np.ascontiguousarray(e_cols.reshape(e_cols.shape[0], -1)), n, with_k)
    e_cols = _padded_cols(np.asarray(e_cols, dtype=float))
    rows, cols = fc._pair_index(n)
    P = e_cols.shape[1]
    sd = np.empty(P)
    k_out = np.empty((e_cols.shape[0], P + _PAD))[:, :P] if with_k else np.empty((0, 0))
    _numba_k(e_cols, rows.astype(np.int64), cols.astype(np.int64), n, with_k, sd, k_out)
    return sd, (k_out if with_k else None)


def pointwise_ginv_apply(e_cols: np.ndarray, v_cols: np.ndarray, n: int, backend: str | None = None):
    """Return ``sqrt(det(I + E#))`` and ``G^-1 v`` pointwise; ``v_cols`` has shape (n, P)."""
    if _resolve_backend(backend) == "numpy":
        return _numpy_ginv_apply(np.ascontiguousarray(e_cols, dtype=float), np.ascontiguousarray(v_cols, dtype=float), n)
    e_cols = _padded_cols(np.asarray(e_cols, dtype=float))
    v_cols = _padded_cols(np.asarray(v_cols, dtype=float))
    rows, cols = fc._pair_index(n)
    sd = np.empty(e_cols.shape[1])
    w = np.empty(v_cols.shape)
    _numba_ginv(e_cols, v_cols, rows.astype(np.int64), cols.astype(np.int64), n, sd, w)
    return sd, w


def big_g(e) -> tuple[Endo, float]:
    """``G = id - E# E#`` and ``det G`` for a constant 2-form."""
    coeffs = e.coeffs if isinstance(e, KForm) else np.asarray(e, dtype=float)
    n = _dim_from_pairs(coeffs.shape[-1])
    m = fc.sharp_coeffs(coeffs, n)
    g = np.eye(n) - m @ m
    return Endo(n, g), float(np.linalg.det(g))


@lru_cache(maxsize=None)
def _pairs_to_dim() -> dict:
    return {comb(n, 2): n for n in range(2, fc.MAX_DIM + 1)}


def _dim_from_pairs(length: int) -> int:
    try:
        return _pairs_to_dim()[length]
    except KeyError:
        raise InvalidInput(f"{length} is not the length of a 2-form coefficient vector") from None


# --------------------------------------------------------------------------
# slab assembly


def _slabs(grid: TorusGrid, slab_points: int = SLAB_POINTS):
    row = grid.points // grid.shape[0]
    step = max(1, slab_points // row)
    for lo in range(0, grid.shape[0], step):
        yield lo, min(grid.shape[0], lo + step)


def _rows(arr: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Rows ``lo..hi-1`` of grid axis 0 (array axis 1), wrapping periodically."""
    n0 = arr.shape[1]
    if 0 <= lo and hi <= n0:
        return arr[:, lo:hi]
    return np.take(arr, np.arange(lo, hi) % n0, axis=1)


def _background(cfield: ConnectionField) -> np.ndarray:
    return cfield.background.coeffs.reshape((-1,) + (1,) * cfield.grid.n)


def curvature_rows(cfield: ConnectionField, lo: int, hi: int, backend: str | None = None) -> np.ndarray:
    """``E`` on rows ``lo..hi-1`` of grid axis 0 (indices may run past the ends)."""
    a = cfield.potential
    n0 = a.shape[1]
    mid = a[:, lo:hi] if 0 <= lo and hi <= n0 else _rows(a, lo, hi)
    lower = a[:, (lo - 1) % n0]
    upper = a[:, hi % n0]
    return _apply_table(lower, mid, upper, _d_table(cfield.grid.n, 1), cfield.grid, comb(cfield.grid.n, 2),
                        _background(cfield), backend)


def curvature(cfield: ConnectionField) -> np.ndarray:
    """Full curvature field ``E = F0 + da`` of shape ``(C(n,2), *shape)``."""
    return curvature_rows(cfield, 0, cfield.grid.shape[0])


def _flat_cols(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr.reshape(arr.shape[0], -1))


@dataclass
class Assembly:
    volume: float
    mean_curvature: np.ndarray | None


def _k_rows(cfield: ConnectionField, lo: int, hi: int, backend):
    e = curvature_rows(cfield, lo, hi, backend)
    sd, k = pointwise_k(e, cfield.grid.n, True, backend)
    return sd.reshape(e.shape[1:]), k.reshape(e.shape)


def assemble(cfield: ConnectionField, want_h: bool = True, backend: str | None = None,
             slab_points: int = SLAB_POINTS) -> Assembly:
    """Volume and (optionally) mean curvature in one slab sweep.

    ``K`` is computed once per row; the delta stencil along axis 0 reads one
    neighbouring row on each side, carried over from the adjacent slabs.
    """
    grid, n = cfield.grid, cfield.grid.n
    total = 0.0
    if not want_h:
        for lo, hi in _slabs(grid, slab_points):
            e = curvature_rows(cfield, lo, hi)
            sd, _ = pointwise_k(e, n, False, backend)
            total += float(sd.sum())
        return Assembly(total * grid.cell, None)

    h_field = np.empty_like(cfield.potential)
    n0 = grid.shape[0]
    slabs = list(_slabs(grid, slab_points))
    _, k_last = _k_rows(cfield, n0 - 1, n0, backend)
    prev = k_last[:, -1]
    sd, k_cur = _k_rows(cfield, *slabs[0], backend)
    first_row = k_cur[:, 0].copy()
    for idx, (lo, hi) in enumerate(slabs):
        total += float(sd.sum())
        if idx + 1 < len(slabs):
            sd_next, k_next = _k_rows(cfield, *slabs[idx + 1], backend)
            nxt = k_next[:, 0]
        else:
            sd_next, k_next, nxt = None, None, first_row
        h_field[:, lo:hi] = -_apply_table(prev, k_cur, nxt, _delta_table(n, 2), grid, n, None, backend)
        prev = k_cur[:, -1]
        sd, k_cur = sd_next, k_next
    return Assembly(total * grid.cell, h_field)


def volume(cfield: ConnectionField, method: str = "sqrt_det", backend: str | None = None) -> float:
    """``V = sum sqrt(det(I + E#)) * cell``.

    ``method="big_g"`` evaluates ``(det G)^(1/4)`` with ``G = I - E# E#`` via
    numpy instead, as an independent check.
    """
    if method == "sqrt_det":
        return assemble(cfield, want_h=False, backend=backend).volume
    if method != "big_g":
        raise InvalidInput(f"unknown volume method {method!r}")
    grid, n = cfield.grid, cfield.grid.n
    total = 0.0
    for lo, hi in _slabs(grid, 1 << 16):
        e = _flat_cols(curvature_rows(cfield, lo, hi)).T
        m = fc.sharp_coeffs(e, n)
        g = np.eye(n) - m @ m
        total += float(np.sum(np.linalg.det(g) ** 0.25))
    return total * grid.cell


def mean_curvature(cfield: ConnectionField, backend: str | None = None) -> np.ndarray:
    """``H = -delta((det G)^(1/4) (G^-1 E#)_flat)``, shape ``(n, *shape)``."""
    return assemble(cfield, True, backend).mean_curvature


def gauge_shift(cfield: ConnectionField, f: np.ndarray) -> ConnectionField:
    """Connection with potential ``a + df``; same curvature."""
    f = np.asarray(f, dtype=float)
    if f.shape != cfield.grid.shape:
        raise InvalidInput(f"gauge function must have the grid shape {cfield.grid.shape}")
    return cfield.with_potential(cfield.potential + exterior_d(f[None], cfield.grid, 0))


def principal_symbol_form(e, xi, a, deturck: bool = False) -> np.ndarray:
    """``<sigma(xi) a, a>`` for the linearized mean curvature at curvature ``E``.

    Equal to ``(det G)^(1/4) (|a|^2 |xi|^2 - <a, xi>^2)`` in the inner product
    ``<a, b>_G = a . G^-1 b``; the DeTurck variant adds
    ``(det G)^(1/4) <a, xi>^2`` (Euclidean pairing). Batched over leading axes.
    """
    coeffs = e.coeffs if isinstance(e, KForm) else np.asarray(e, dtype=float)
    n = _dim_from_pairs(coeffs.shape[-1])
    xi = np.asarray(xi, dtype=float)
    a = np.asarray(a, dtype=float)
    if xi.shape[-1] != n or a.shape[-1] != n:
        raise InvalidInput(f"covectors must have length {n}")
    if np.any(np.linalg.norm(xi, axis=-1) == 0.0):
        raise InvalidInput("xi must be non-zero")
    m = fc.sharp_coeffs(coeffs, n)
    g = np.eye(n) - m @ m
    w = np.linalg.det(g) ** 0.25
    ginv = np.linalg.inv(g)

    def ip(u, v):
        return np.einsum("...i,...ij,...j->...", u, ginv, v)

    out = w * (ip(a, a) * ip(xi, xi) - ip(a, xi) ** 2)
    if deturck:
        out = out + w * np.sum(a * xi, axis=-1) ** 2
    return out


# --------------------------------------------------------------------------
# flow


@dataclass
class FlowConfig:
    dt: float | None = None  # None selects cfl * min(h)^2
    steps: int = 100
    deturck: bool = False
    record_every: int = 1
    cfl: float = DEFAULT_CFL
    snapshot_every: int = 0

    def time_step(self, grid: TorusGrid) -> float:
        if self.dt is None:
            return self.cfl * min(grid.spacing) ** 2
        if not self.dt > 0:
            raise InvalidInput("dt must be positive")
        return float(self.dt)


@dataclass
class FlowTrace:
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (step, potential array)
    final: ConnectionField | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([r[TRACE_COLUMNS.index(name)] for r in self.rows], dtype=float)

    def monotonicity_violations(self, rel_tol: float = 1e-12) -> int:
        v = self.column("V")
        return int(np.sum(np.diff(v) > rel_tol * v[:-1]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([format_float(x) for x in r])

    @staticmethod
    def read_csv(path) -> "FlowTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_COLUMNS:
                raise InvalidInput(f"unexpected trace header {header}")
            return FlowTrace(rows=[tuple(float(x) for x in row) for row in reader])


def format_float(x: float) -> str:
    return "%.17g" % x


Diagnostics = Callable[[ConnectionField, float], tuple]


def _default_diagnostics(cfield: ConnectionField, vol: float) -> tuple:
    if cfield.structure is None:
        return (math.nan, math.nan, math.nan)
    from .special_connections import flow_diagnostics

    return flow_diagnostics(cfield, vol)


def run_flow(c0: ConnectionField, config: FlowConfig | None = None, diagnostics: Diagnostics | None = None,
             backend: str | None = None) -> FlowTrace:
    """Explicit Euler for ``da/dt = H`` (optionally with the DeTurck term).

    The DeTurck term is ``-d(w0 * delta(a - a0))`` where ``w0`` is
    ``(det G)^(1/4)`` of the initial connection, frozen for the whole run.
    One row is recorded every ``record_every`` steps and after the last step.
    """
    config = config or FlowConfig()
    if config.steps < 0 or config.record_every < 1:
        raise InvalidInput("steps must be >= 0 and record_every >= 1")
    diag = diagnostics if diagnostics is not None else _default_diagnostics
    grid = c0.grid
    dt = config.time_step(grid)
    cur = c0.copy()
    a0 = c0.potential.copy()
    w0 = None
    if config.deturck:
        w0 = np.empty(grid.shape)
        for lo, hi in _slabs(grid):
            e = curvature_rows(c0, lo, hi)
            sd, _ = pointwise_k(e, grid.n, False, backend)
            w0[lo:hi] = sd.reshape(e.shape[1:])
    trace = FlowTrace()
    t = 0.0
    for step in range(config.steps + 1):
        asm = assemble(cur, True, backend)
        h = asm.mean_curvature
        if not (math.isfinite(asm.volume) and np.all(np.isfinite(h))):
            trace.final = cur
            raise FlowDiverged(f"non-finite state at step {step}, t = {t:.6g}", trace)
        if step % config.record_every == 0 or step == config.steps:
            h_l2 = math.sqrt(l2_inner(h, h, grid))
            res_1, res_2, slack = diag(cur, asm.volume)
            trace.rows.append((t, asm.volume, h_l2, res_1, res_2, slack, dt))
        if config.snapshot_every and step % config.snapshot_every == 0:
            trace.snapshots.append((step, cur.potential.copy()))
        if step == config.steps:
            break
        update = h
        if config.deturck:
            div = codifferential(cur.potential - a0, grid, 1)[0]
            update = h - exterior_d((w0 * div)[None], grid, 0)
        cur.potential += dt * update
        t += dt
    trace.final = cur
    return trace


# --------------------------------------------------------------------------
# CFLD files


CFLD_MAGIC = "CFLD"


def save_field(cfield: ConnectionField, path) -> None:
    """Write a one-line JSON manifest, a newline, then the raw ``<f8`` potential."""
    payload = np.ascontiguousarray(cfield.potential, dtype="<f8").tobytes(order="C")
    manifest = {
        "format": CFLD_MAGIC,
        "n": cfield.grid.n,
        "shape": list(cfield.grid.shape),
        "structure_kind": cfield.structure,
        "background_coeffs": [float(x) for x in cfield.background.coeffs],
        "dtype": "<f8",
        "layout": "component-major, then grid axes 0..n-1, C order",
        "payload_bytes": len(payload),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_field(path, max_points: int = DEFAULT_MAX_POINTS) -> ConnectionField:
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            manifest = json.loads(header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"{path}: not a CFLD file ({exc})") from None
        payload = fh.read()
    if manifest.get("format", CFLD_MAGIC) != CFLD_MAGIC:
        raise InvalidInput(f"{path}: unknown format {manifest.get('format')!r}")
    n = int(manifest["n"])
    shape = tuple(int(s) for s in manifest["shape"])
    expected = n * math.prod(shape) * 8
    declared = int(manifest.get("payload_bytes", expected))
    if declared != expected or len(payload) != expected:
        raise InvalidInput(f"{path}: payload has {len(payload)} bytes, manifest says {declared}, grid needs {expected}")
    grid = TorusGrid(n, shape, max_points=max_points)
    pot = np.frombuffer(payload, dtype="<f8").reshape((n,) + shape).astype(float)
    bg = KForm(n, 2, np.asarray(manifest["background_coeffs"], dtype=float))
    return ConnectionField(grid, pot, bg, manifest.get("structure_kind"))
