"""Dense exterior algebra over R^n for 2 <= n <= 8.

Forms are stored as coefficient vectors in the lexicographic basis of
strictly increasing multi-indices, with 0-based indices. The metric is the
Euclidean one and ``e^{0...n-1}`` is positively oriented, so the basis is
orthonormal and the inner product is a plain dot product.

Two layers are provided. The ``*_coeffs`` functions act on raw numpy
arrays whose last axis is the coefficient axis, so they broadcast over any
number of leading batch axes (random samples, grid points). The
:class:`KForm`, :class:`ComplexKForm` and :class:`Endo` value types wrap a
single form or endomorphism and validate their arguments.

Every product is evaluated from a precomputed sparse term list (one entry per
pair of basis elements with a non-zero product), which keeps batched
evaluation at O(batch * terms).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial
from typing import NamedTuple

import numpy as np

from .errors import InvalidInput

MIN_DIM = 1
MAX_DIM = 8


def _check_dim(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not MIN_DIM <= n <= MAX_DIM:
        raise InvalidInput(f"dimension must be an integer in [{MIN_DIM}, {MAX_DIM}], got {n!r}")


def _check_degree(n: int, k: int) -> None:
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= n:
        raise InvalidInput(f"degree must be in [0, {n}], got {k!r}")


def perm_sign(seq) -> int:
    """Sign of the permutation that sorts ``seq`` (entries must be distinct)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class MultiIndexTable:
    """Lexicographic list of the k-subsets of ``range(n)`` plus the reverse lookup."""

    n: int
    k: int
    indices: tuple
    position: dict

    def __len__(self) -> int:
        return len(self.indices)

    def __hash__(self) -> int:
        return hash((self.n, self.k))

    def index(self, idx) -> int:
        return self.position[tuple(idx)]


@lru_cache(maxsize=None)
def index_table(n: int, k: int) -> MultiIndexTable:
    _check_dim(n)
    _check_degree(n, k)
    indices = tuple(itertools.combinations(range(n), k))
    return MultiIndexTable(n, k, indices, {t: i for i, t in enumerate(indices)})


def dim_forms(n: int, k: int) -> int:
    return comb(n, k)


def degree_from_length(n: int, length: int) -> int:
    """Return the unique degree k with C(n, k) == length.

    Raises when two degrees share the length (k and n-k), which callers must
    then disambiguate themselves.
    """
    hits = [k for k in range(n + 1) if comb(n, k) == length]
    if len(hits) != 1:
        raise InvalidInput(f"cannot infer degree from length {length} in dimension {n}")
    return hits[0]


# --------------------------------------------------------------------------
# sparse term tables


class _Terms(NamedTuple):
    left: np.ndarray
    right: np.ndarray
    sign: np.ndarray
    starts: np.ndarray
    size: int


@lru_cache(maxsize=None)
def _wedge_terms(n: int, j: int, k: int) -> _Terms:
    out = index_table(n, j + k)
    ltab, rtab = index_table(n, j), index_table(n, k)
    left, right, sign, starts = [], [], [], []
    for o in out.indices:
        starts.append(len(left))
        for s in itertools.combinations(o, j):
            t = tuple(x for x in o if x not in s)
            left.append(ltab.position[s])
            right.append(rtab.position[t])
            sign.append(perm_sign(s + t))
    return _Terms(
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(sign, dtype=float),
        np.array(starts, dtype=np.intp),
        len(out),
    )


@lru_cache(maxsize=None)
def _wedge_scatter(n: int, j: int, k: int) -> np.ndarray:
    """Signed 0/1 matrix summing term products into output components."""
    terms = _wedge_terms(n, j, k)
    mat = np.zeros((terms.size, len(terms.sign)))
    owner = np.repeat(np.arange(terms.size), np.diff(np.append(terms.starts, len(terms.sign))))
    mat[owner, np.arange(len(terms.sign))] = terms.sign
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=None)
def _interior_terms(n: int, k: int) -> _Terms:
    out = index_table(n, k - 1)
    atab = index_table(n, k)
    vec, src, sign, starts = [], [], [], []
    for o in out.indices:
        starts.append(len(vec))
        for j in range(n):
            if j in o:
                continue
            full = tuple(sorted(o + (j,)))
            vec.append(j)
            src.append(atab.position[full])
            sign.append((-1) ** full.index(j))
    return _Terms(
        np.array(vec, dtype=np.intp),
        np.array(src, dtype=np.intp),
        np.array(sign, dtype=float),
        np.array(starts, dtype=np.intp),
        len(out),
    )


@lru_cache(maxsize=None)
def _hodge_perm(n: int, k: int):
    out = index_table(n, n - k)
    src_tab = index_table(n, k)
    src, sign = [], []
    for o in out.indices:
        comp = tuple(x for x in range(n) if x not in o)
        src.append(src_tab.position[comp])
        sign.append(perm_sign(comp + o))
    return np.array(src, dtype=np.intp), np.array(sign, dtype=float)


@lru_cache(maxsize=None)
def _pair_index(n: int):
    tab = index_table(n, 2)
    rows = np.array([i for i, _ in tab.indices], dtype=np.intp)
    cols = np.array([j for _, j in tab.indices], dtype=np.intp)
    return rows, cols


def _reduce_terms(prod: np.ndarray, terms: _Terms) -> np.ndarray:
    if prod.shape[-1] == 0:
        return np.zeros(prod.shape[:-1] + (terms.size,), dtype=prod.dtype)
    return np.add.reduceat(prod, terms.starts, axis=-1)


# --------------------------------------------------------------------------
# array-level operations


def _component_major(x: np.ndarray, batch: tuple) -> np.ndarray:
    if x.ndim == 1:
        return x[:, None]
    if x.shape[:-1] != batch:
        x = np.broadcast_to(x, batch + x.shape[-1:])
    return x.reshape(-1, x.shape[-1]).T


def wedge_coeffs(a, b, n: int, ka: int, kb: int) -> np.ndarray:
    """Wedge product of coefficient arrays of degrees ``ka`` and ``kb``.

    Leading axes broadcast. Complex input is allowed.
    """
    if ka + kb > n:
        raise InvalidInput(f"wedge of degrees {ka} and {kb} exceeds dimension {n}")
    terms = _wedge_terms(n, ka, kb)
    a = np.asarray(a)
    b = np.asarray(b)
    batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    if not batch:
        prod = a[terms.left] * b[terms.right] * terms.sign
        return _reduce_terms(prod, terms)
    # Batched: work component-major so the gathers and the segment sums run
    # over contiguous rows instead of short strided runs.
    at = _component_major(a, batch)
    bt = _component_major(b, batch)
    out = _wedge_scatter(n, ka, kb) @ (at[terms.left] * bt[terms.right])
    return np.ascontiguousarray(out.T).reshape(batch + (terms.size,))


def power_coeffs(f, n: int, k: int, p: int) -> np.ndarray:
    """``f ^ f ^ ... ^ f`` (p factors); p = 0 gives the constant 1."""
    f = np.asarray(f)
    if p == 0:
        return np.ones(f.shape[:-1] + (1,), dtype=f.dtype)
    out = f
    for q in range(1, p):
        out = wedge_coeffs(out, f, n, q * k, k)
    return out


@lru_cache(maxsize=None)
def _matchings(n: int):
    """Perfect matchings of ``0..n-1`` as pair-index rows with permutation signs."""
    rows, cols = _pair_index(n)
    where = {(int(i), int(j)): p for p, (i, j) in enumerate(zip(rows, cols))}

    def rec(rest):
        if not rest:
            yield ()
            return
        first = rest[0]
        for t in range(1, len(rest)):
            for tail in rec(rest[1:t] + rest[t + 1:]):
                yield (first, rest[t]) + tail

    picks, signs = [], []
    for flat in rec(tuple(range(n))):
        picks.append([where[(flat[2 * q], flat[2 * q + 1])] for q in range(n // 2)])
        signs.append(perm_sign(flat))
    return np.array(picks, dtype=np.intp), np.array(signs, dtype=float)


def pfaffian_coeffs(f, n: int) -> np.ndarray:
    """Pfaffian of a 2-form on R^n (n even): the top coefficient of ``f^(n/2) / (n/2)!``.

    Summed over perfect matchings; batched and complex-safe.
    """
    _check_dim(n)
    if n % 2:
        raise InvalidInput("the Pfaffian needs an even dimension")
    f = np.asarray(f)
    picks, signs = _matchings(n)
    out = np.zeros(f.shape[:-1], dtype=np.result_type(f.dtype, float))
    for pick, sign in zip(picks, signs):
        term = f[..., pick[0]]
        for p in pick[1:]:
            term = term * f[..., p]
        out += sign * term
    return out


def hodge_coeffs(a, n: int, k: int) -> np.ndarray:
    src, sign = _hodge_perm(n, k)
    return np.asarray(a)[..., src] * sign


def interior_coeffs(v, a, n: int, k: int) -> np.ndarray:
    """Contraction ``i(v) a`` of a k-form with a vector, first slot."""
    if k < 1:
        raise InvalidInput("interior product needs degree >= 1")
    terms = _interior_terms(n, k)
    prod = np.asarray(v)[..., terms.left] * np.asarray(a)[..., terms.right]
    prod *= terms.sign
    return _reduce_terms(prod, terms)


def sharp_coeffs(f, n: int) -> np.ndarray:
    """Skew matrices ``F#`` with ``g(F# u, v) = F(u, v)``, shape (..., n, n)."""
    f = np.asarray(f)
    rows, cols = _pair_index(n)
    out = np.zeros(f.shape[:-1] + (n, n), dtype=f.dtype)
    out[..., cols, rows] = f
    out[..., rows, cols] = -f
    return out


def flat_coeffs(m) -> np.ndarray:
    """2-form ``K_flat(u, v) = g(K u, v)`` read off the lower triangle of ``m``."""
    m = np.asarray(m)
    rows, cols = _pair_index(m.shape[-1])
    return m[..., cols, rows]


def norm2_coeffs(a) -> np.ndarray:
    a = np.asarray(a)
    return np.sum(a.real**2 + a.imag**2, axis=-1) if np.iscomplexobj(a) else np.sum(a * a, axis=-1)


def det_formula_coeffs(f, n: int) -> np.ndarray:
    """``1 + |F|^2 + |F^2/2!|^2 + ...`` truncated at degree ``floor(n/2)``."""
    f = np.asarray(f, dtype=float)
    total = np.ones(f.shape[:-1])
    power = f
    total = total + norm2_coeffs(power)
    for p in range(2, n // 2 + 1):
        power = wedge_coeffs(power, f, n, 2 * (p - 1), 2)
        total = total + norm2_coeffs(power) / factorial(p) ** 2
    return total


def det_lu_coeffs(f, n: int) -> np.ndarray:
    """det(I + F#) through LAPACK's partially pivoted LU factorization."""
    m = sharp_coeffs(np.asarray(f, dtype=float), n)
    m = m + np.eye(n)
    return np.linalg.det(m)


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class KForm:
    """A degree-k form on R^n with coefficients in lexicographic order."""

    n: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.n)
        _check_degree(self.n, self.k)
        arr = np.array(self.coeffs, dtype=float).reshape(-1)
        if arr.shape[0] != comb(self.n, self.k):
            raise InvalidInput(
                f"a {self.k}-form on R^{self.n} needs {comb(self.n, self.k)} coefficients, got {arr.shape[0]}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    # constructors
    @classmethod
    def zeros(cls, n: int, k: int) -> "KForm":
        return cls(n, k, np.zeros(comb(n, k)))

    @classmethod
    def scalar(cls, n: int, value: float) -> "KForm":
        return cls(n, 0, [value])

    @classmethod
    def volume(cls, n: int) -> "KForm":
        return cls(n, n, [1.0])

    @classmethod
    def from_terms(cls, n: int, k: int, terms: dict) -> "KForm":
        """Build from ``{index_tuple: value}``; unsorted tuples pick up the permutation sign."""
        tab = index_table(n, k)
        coeffs = np.zeros(len(tab))
        for idx, val in terms.items():
            idx = tuple(idx)
            if len(idx) != k or len(set(idx)) != k:
                raise InvalidInput(f"bad multi-index {idx} for degree {k}")
            coeffs[tab.position[tuple(sorted(idx))]] += perm_sign(idx) * val
        return cls(n, k, coeffs)

    @classmethod
    def basis(cls, n: int, *idx: int) -> "KForm":
        return cls.from_terms(n, len(idx), {tuple(idx): 1.0})

    @classmethod
    def from_dict(cls, data: dict) -> "KForm":
        try:
            return cls(int(data["n"]), int(data["k"]), data["coeffs"])
        except KeyError as exc:
            raise InvalidInput(f"KForm JSON lacks field {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "KForm":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "coeffs": [float(c) for c in self.coeffs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    # algebra
    def _same_space(self, other: "KForm") -> None:
        if not isinstance(other, KForm) or other.n != self.n or other.k != self.k:
            raise InvalidInput("forms must share dimension and degree")

    def __add__(self, other):
        self._same_space(other)
        return KForm(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same_space(other)
        return KForm(self.n, self.k, self.coeffs - other.coeffs)

    def __neg__(self):
        return KForm(self.n, self.k, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, KForm):
            return NotImplemented
        return KForm(self.n, self.k, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return KForm(self.n, self.k, self.coeffs / float(scalar))

    def __xor__(self, other):
        return wedge(self, other)

    def norm2(self) -> float:
        return float(self.coeffs @ self.coeffs)

    def norm(self) -> float:
        return float(np.sqrt(self.norm2()))

    def terms(self, tol: float = 0.0) -> dict:
        """Non-zero coefficients keyed by index tuple."""
        tab = index_table(self.n, self.k)
        return {tab.indices[i]: float(c) for i, c in enumerate(self.coeffs) if abs(c) > tol}

    def allclose(self, other: "KForm", atol: float = 1e-12) -> bool:
        self._same_space(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol)

    def __repr__(self) -> str:
        shown = ", ".join(f"{''.join(map(str, k))}:{v:+.6g}" for k, v in self.terms().items())
        return f"KForm(n={self.n}, k={self.k}, {{{shown}}})"


@dataclass(frozen=True, eq=False)
class ComplexKForm:
    """Complex-valued k-form held as a pair of real forms."""

    re: KForm
    im: KForm

    def __post_init__(self):
        if (self.re.n, self.re.k) != (self.im.n, self.im.k):
            raise InvalidInput("real and imaginary parts must share dimension and degree")

    @property
    def n(self) -> int:
        return self.re.n

    @property
    def k(self) -> int:
        return self.re.k

    @property
    def coeffs(self) -> np.ndarray:
        return self.re.coeffs + 1j * self.im.coeffs

    @classmethod
    def from_coeffs(cls, n: int, k: int, coeffs) -> "ComplexKForm":
        c = np.asarray(coeffs, dtype=complex)
        return cls(KForm(n, k, c.real), KForm(n, k, c.imag))

    @classmethod
    def from_real(cls, re: KForm, im: KForm | None = None) -> "ComplexKForm":
        return cls(re, KForm.zeros(re.n, re.k) if im is None else im)

    def __add__(self, other):
        return ComplexKForm(self.re + other.re, self.im + other.im)

    def __sub__(self, other):
        return ComplexKForm(self.re - other.re, self.im - other.im)

    def scale(self, z: complex) -> "ComplexKForm":
        return ComplexKForm.from_coeffs(self.n, self.k, self.coeffs * complex(z))

    def __xor__(self, other):
        return wedge_complex(self, other)

    def norm2(self) -> float:
        return self.re.norm2() + self.im.norm2()

    def conj(self) -> "ComplexKForm":
        return ComplexKForm(self.re, -self.im)


@dataclass(frozen=True, eq=False)
class Endo:
    """An endomorphism of R^n acting on column vectors."""

    n: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (self.n, self.n):
            raise InvalidInput(f"expected a {self.n}x{self.n} matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidInput("endomorphism has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def skew_defect(self) -> float:
        return float(np.linalg.norm(self.matrix + self.matrix.T))

    def __matmul__(self, other: "Endo") -> "Endo":
        return Endo(self.n, self.matrix @ other.matrix)

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)


class DetPair(NamedTuple):
    formula: float
    oracle: float


# --------------------------------------------------------------------------
# KForm-level operations


def wedge(a: KForm, b: KForm) -> KForm:
    if not isinstance(a, KForm) or not isinstance(b, KForm):
        raise InvalidInput("wedge expects two KForm values")
    if a.n != b.n:
        raise InvalidInput(f"dimension mismatch: {a.n} vs {b.n}")
    return KForm(a.n, a.k + b.k, wedge_coeffs(a.coeffs, b.coeffs, a.n, a.k, b.k))


def wedge_complex(a: ComplexKForm, b: ComplexKForm) -> ComplexKForm:
    if a.n != b.n:
        raise InvalidInput(f"dimension mismatch: {a.n} vs {b.n}")
    return ComplexKForm.from_coeffs(a.n, a.k + b.k, wedge_coeffs(a.coeffs, b.coeffs, a.n, a.k, b.k))


def power(a: KForm, p: int) -> KForm:
    return KForm(a.n, a.k * p, power_coeffs(a.coeffs, a.n, a.k, p))


def interior(v, a: KForm) -> KForm:
    v = np.asarray(v, dtype=float)
    if v.shape != (a.n,):
        raise InvalidInput(f"vector must have length {a.n}")
    if a.k == 0:
        raise InvalidInput("interior product of a 0-form is undefined here")
    return KForm(a.n, a.k - 1, interior_coeffs(v, a.coeffs, a.n, a.k))


def hodge(a: KForm) -> KForm:
    return KForm(a.n, a.n - a.k, hodge_coeffs(a.coeffs, a.n, a.k))


def inner(a: KForm, b: KForm) -> float:
    if a.n != b.n or a.k != b.k:
        raise InvalidInput("inner product needs forms of equal dimension and degree")
    return float(a.coeffs @ b.coeffs)


def flat_vector(v) -> KForm:
    """The 1-form metrically dual to a vector (identity on coefficients)."""
    v = np.asarray(v, dtype=float)
    return KForm(v.shape[0], 1, v)


def sharp(f: KForm) -> Endo:
    if f.k != 2:
        raise InvalidInput(f"sharp expects a 2-form, got degree {f.k}")
    return Endo(f.n, sharp_coeffs(f.coeffs, f.n))


def flat_skew(m, require_skew: bool = True, tol: float = 1e-12) -> KForm:
    mat = m.matrix if isinstance(m, Endo) else np.asarray(m, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInput("flat_skew expects a square matrix")
    if require_skew:
        defect = float(np.linalg.norm(mat + mat.T))
        if defect > tol * max(1.0, float(np.linalg.norm(mat))):
            raise InvalidInput(f"matrix is not skew-symmetric (|K + K^T| = {defect:.3e})")
    return KForm(mat.shape[0], 2, flat_coeffs(mat))


def det_one_plus(f: KForm) -> DetPair:
    """det(I + F#) from the wedge-power formula and from an LU factorization."""
    if f.k != 2:
        raise InvalidInput(f"det_one_plus expects a 2-form, got degree {f.k}")
    return DetPair(float(det_formula_coeffs(f.coeffs, f.n)), float(det_lu_coeffs(f.coeffs, f.n)))


@lru_cache(maxsize=None)
def _embed_index(n: int, k: int, n_new: int, offset: int) -> np.ndarray:
    tab = index_table(n_new, k)
    return np.array([tab.position[tuple(i + offset for i in idx)] for idx in index_table(n, k).indices], dtype=np.intp)


def embed_coeffs(a, n: int, k: int, n_new: int, offset: int) -> np.ndarray:
    """Re-express a k-form on R^n as a k-form on R^n_new via e^i -> e^(i + offset)."""
    if offset < 0 or offset + n > n_new:
        raise InvalidInput(f"cannot place R^{n} at offset {offset} inside R^{n_new}")
    a = np.asarray(a)
    out = np.zeros(a.shape[:-1] + (comb(n_new, k),), dtype=a.dtype)
    out[..., _embed_index(n, k, n_new, offset)] = a
    return out


def embed(a: KForm, n_new: int, offset: int) -> KForm:
    return KForm(n_new, a.k, embed_coeffs(a.coeffs, a.n, a.k, n_new, offset))


def restrict_coeffs(a, n_new: int, k: int, n: int, offset: int) -> np.ndarray:
    """Inverse of :func:`embed_coeffs`: keep the components living on the sub-block."""
    return np.asarray(a)[..., _embed_index(n, k, n_new, offset)]
