"""Measurable fields of finite-dimensional Hilbert spaces and bundle maps.

Fibers may change dimension from cell to cell.  A ``BundleMap`` stores all of
its blocks in one padded complex array of shape (n, max target dim, max source
dim); the entries outside the true (target dim x source dim) corner are zero.
Every fiberwise decomposition runs on groups of cells that share a shape, so
padding never leaks into ranks, kernels or spectra.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ComplexValidationError, ShapeMismatchError, ValidationFailure
from src.measure import DensityMeasure, SampleSpace, integrate
from src.settings import DEFAULT_EPS_RANK
from src.utils.parallel import fiber_map

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
DEFAULT_TOL_COMPLEX = 1e-9
ROUNDOFF_EPS_RANK = 64 * np.finfo(float).eps

Index = Union[slice, np.ndarray]


@dataclass(frozen=True, eq=False)
class FiberField:
    base: SampleSpace
    dims: np.ndarray

    def __post_init__(self):
        dims = np.asarray(self.dims)
        if dims.shape != (self.base.size,):
            raise ShapeMismatchError("fiber dims need one entry per cell")
        if dims.size and (dims.min() < 0 or not np.all(dims == np.round(dims))):
            raise ValidationFailure("fiber dims must be nonnegative integers")
        object.__setattr__(self, "dims", dims.astype(np.int64))

    @classmethod
    def constant(cls, base: SampleSpace, dim: int) -> "FiberField":
        return cls(base, np.full(base.size, int(dim), dtype=np.int64))

    @cached_property
    def max_dim(self) -> int:
        return int(self.dims.max()) if self.dims.size else 0

    @cached_property
    def is_constant(self) -> bool:
        return bool(np.all(self.dims == self.max_dim))

    def matches(self, other: "FiberField") -> bool:
        return self.base is other.base and np.array_equal(self.dims, other.dims)

    def __add__(self, other: "FiberField") -> "FiberField":
        _same_base(self.base, other.base)
        return FiberField(self.base, self.dims + other.dims)


def _same_base(a: SampleSpace, b: SampleSpace) -> None:
    if a is not b:
        raise ShapeMismatchError("fields live on different sample spaces")


def shape_groups(*dims: np.ndarray) -> List[Tuple[Tuple[int, ...], Index]]:
    """Split the cells into groups sharing the same tuple of fiber dims."""
    if all(d.size == 0 or np.all(d == d[0]) for d in dims):
        return [(tuple(int(d[0]) if d.size else 0 for d in dims), slice(None))]
    stacked = np.stack(dims, axis=1)
    keys, inverse = np.unique(stacked, axis=0, return_inverse=True)
    if len(keys) == 1:
        return [(tuple(int(v) for v in keys[0]), slice(None))]
    inverse = inverse.ravel()
    return [(tuple(int(v) for v in key), np.flatnonzero(inverse == g))
            for g, key in enumerate(keys)]


@dataclass(frozen=True, eq=False)
class BundleMap:
    source: FiberField
    target: FiberField
    blocks: np.ndarray

    def __post_init__(self):
        _same_base(self.source.base, self.target.base)
        blocks = np.asarray(self.blocks, dtype=np.complex128)
        expected = (self.base.size, self.target.max_dim, self.source.max_dim)
        if blocks.shape != expected:
            raise ShapeMismatchError(f"blocks have shape {blocks.shape}, expected {expected}")
        if not np.all(np.isfinite(blocks)):
            raise ValidationFailure("bundle map has non-finite entries")
        if not (self.source.is_constant and self.target.is_constant):
            rows = np.arange(expected[1])[None, :, None] < self.target.dims[:, None, None]
            cols = np.arange(expected[2])[None, None, :] < self.source.dims[:, None, None]
            if np.any(blocks[~(rows & cols)] != 0):
                raise ShapeMismatchError("blocks have entries outside the fiber dims")
        object.__setattr__(self, "blocks", blocks)

    @property
    def base(self) -> SampleSpace:
        return self.source.base

    @property
    def size(self) -> int:
        return self.base.size

    @property
    def is_endomorphism(self) -> bool:
        return self.source.matches(self.target)

    @cached_property
    def sup_norm(self) -> float:
        sv = fiber_singular_values(self)
        if sv.shape[1] == 0:
            return 0.0
        return float(np.max(np.nan_to_num(sv[:, 0], nan=0.0)))

    @classmethod
    def from_blocks(cls, base: SampleSpace, blocks: np.ndarray) -> "BundleMap":
        """Map between constant-dimension fields from a dense (n, m, k) array."""
        blocks = np.asarray(blocks, dtype=np.complex128)
        if blocks.ndim != 3:
            raise ShapeMismatchError("blocks must be a 3-d array (cells, rows, columns)")
        _, m, k = blocks.shape
        return cls(FiberField.constant(base, k), FiberField.constant(base, m), blocks)

    @classmethod
    def from_scalar(cls, base: SampleSpace, values: np.ndarray) -> "BundleMap":
        values = np.asarray(values, dtype=np.complex128).reshape(base.size, 1, 1)
        return cls.from_blocks(base, values)

    @classmethod
    def from_constant(cls, base: SampleSpace, matrix: np.ndarray) -> "BundleMap":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.complex128))
        return cls.from_blocks(base, np.broadcast_to(matrix, (base.size,) + matrix.shape).copy())

    @classmethod
    def from_list(cls, base: SampleSpace, matrices: Sequence[np.ndarray]) -> "BundleMap":
        """Variable-dimension map from one (possibly empty) matrix per cell."""
        if len(matrices) != base.size:
            raise ShapeMismatchError("one matrix is needed per cell")
        mats = [np.asarray(a, dtype=np.complex128) for a in matrices]
        if any(a.ndim != 2 for a in mats):
            raise ShapeMismatchError("every cell needs a 2-d matrix (use shape (m, 0) for empty)")
        m = np.array([a.shape[0] for a in mats], dtype=np.int64)
        k = np.array([a.shape[1] for a in mats], dtype=np.int64)
        blocks = np.zeros((base.size, int(m.max(initial=0)), int(k.max(initial=0))), dtype=np.complex128)
        for j, a in enumerate(mats):
            blocks[j, :a.shape[0], :a.shape[1]] = a
        return cls(FiberField(base, k), FiberField(base, m), blocks)

    def block(self, cell: int) -> np.ndarray:
        return self.blocks[cell, :self.target.dims[cell], :self.source.dims[cell]]

    def __add__(self, other: "BundleMap") -> "BundleMap":
        if not (self.source.matches(other.source) and self.target.matches(other.target)):
            raise ShapeMismatchError("cannot add bundle maps between different fields")
        return BundleMap(self.source, self.target, self.blocks + other.blocks)

    def __neg__(self) -> "BundleMap":
        return BundleMap(self.source, self.target, -self.blocks)

    def __sub__(self, other: "BundleMap") -> "BundleMap":
        return self + (-other)

    def __matmul__(self, other: "BundleMap") -> "BundleMap":
        return compose(self, other)


@dataclass(frozen=True, eq=False)
class BundleComplex:
    fields: Tuple[FiberField, ...]
    maps: Tuple[BundleMap, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "maps", tuple(self.maps))
        if len(self.fields) == 0:
            raise ShapeMismatchError("a complex needs at least one field")
        if len(self.maps) != len(self.fields) - 1:
            raise ShapeMismatchError(
                f"{len(self.fields)} fields need {len(self.fields) - 1} differentials")
        for i, d in enumerate(self.maps):
            if not (d.source.matches(self.fields[i]) and d.target.matches(self.fields[i + 1])):
                raise ShapeMismatchError(f"differential {i} does not map E^{i} to E^{i + 1}")

    @classmethod
    def from_maps(cls, maps: Sequence[BundleMap]) -> "BundleComplex":
        if not maps:
            raise ShapeMismatchError("give at least one differential")
        return cls(tuple([maps[0].source] + [d.target for d in maps]), tuple(maps))

    @property
    def top(self) -> int:
        """Index N of the last field."""
        return len(self.fields) - 1

    @property
    def base(self) -> SampleSpace:
        return self.fields[0].base


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    basis: np.ndarray


@dataclass(frozen=True)
class ComplexCheck:
    max_residual: float
    worst_degree: Optional[int]
    worst_cell: Optional[int]
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


# Single-matrix kernels

def hermitian_eigs(matrix: np.ndarray) -> EigenDecomposition:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix."""
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationFailure("matrix has non-finite entries")
    if a.size == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0), dtype=np.complex128))
    norm = np.linalg.norm(a, 2)
    if np.linalg.norm(a - a.conj().T, 2) > HERMITIAN_TOL * norm:
        raise ValidationFailure("matrix is not Hermitian within tolerance")
    w, u = np.linalg.eigh(0.5 * (a + a.conj().T))
    return EigenDecomposition(w, u)


def numeric_rank(matrix: np.ndarray, eps_rank: float = DEFAULT_EPS_RANK) -> int:
    """Number of singular values above eps_rank * (largest + 1)."""
    if eps_rank <= 0:
        raise ValidationFailure("eps_rank must be positive")
    a = np.asarray(matrix)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > eps_rank * (s[0] + 1.0)))


# Fiberwise kernels

def fiber_singular_values(T: BundleMap) -> np.ndarray:
    """Descending singular values per cell; NaN beyond min(target, source) dim."""
    n, big_m, big_k = T.blocks.shape
    width = min(big_m, big_k)
    out = np.full((n, width), np.nan)
    if width == 0:
        return out
    for (m, k), idx in shape_groups(T.target.dims, T.source.dims):
        q = min(m, k)
        if q == 0:
            continue
        sub = T.blocks[idx, :m, :k]
        if m == 1 and k == 1:
            out[idx, 0] = np.abs(sub[:, 0, 0])
        else:
            out[idx, :q] = fiber_map(lambda b: np.linalg.svd(b, compute_uv=False), [sub])
    return out


def _rank_cut(sv: np.ndarray, eps_rank: float) -> np.ndarray:
    top = np.nan_to_num(sv[:, 0], nan=0.0) if sv.shape[1] else np.zeros(sv.shape[0])
    return eps_rank * (top + 1.0)


def fiber_ranks(T: BundleMap, eps_rank: float = DEFAULT_EPS_RANK) -> np.ndarray:
    sv = fiber_singular_values(T)
    if sv.shape[1] == 0:
        return np.zeros(T.size, dtype=np.int64)
    with np.errstate(invalid="ignore"):
        return np.sum(sv > _rank_cut(sv, eps_rank)[:, None], axis=1).astype(np.int64)


def kth_largest_singular(T: BundleMap, k: int) -> np.ndarray:
    """k-th largest singular value per cell (1-based); +inf for k = 0, NaN if absent."""
    if k <= 0:
        return np.full(T.size, np.inf)
    sv = fiber_singular_values(T)
    if k > sv.shape[1]:
        return np.full(T.size, np.nan)
    return sv[:, k - 1]


def _svd_groups(T: BundleMap, eps_rank: float
                ) -> Iterator[Tuple[Index, int, int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (cells, m, k, U, s, Vh, ranks) per shape group with full SVD factors."""
    for (m, k), idx in shape_groups(T.target.dims, T.source.dims):
        sub = T.blocks[idx, :m, :k]
        g = sub.shape[0]
        if m == 0 or k == 0:
            u = np.broadcast_to(np.eye(m, dtype=np.complex128), (g, m, m))
            vh = np.broadcast_to(np.eye(k, dtype=np.complex128), (g, k, k))
            yield idx, m, k, u, np.zeros((g, 0)), vh, np.zeros(g, dtype=np.int64)
            continue
        u, s, vh = fiber_map(lambda b: np.linalg.svd(b, full_matrices=True), [sub])
        ranks = np.sum(s > eps_rank * (s[:, :1] + 1.0), axis=1)
        yield idx, m, k, u, s, vh, ranks


def _cells(idx: Index, n: int) -> np.ndarray:
    return np.arange(n)[idx]


def _frames_to_map(ambient: FiberField, pieces: List[Tuple[np.ndarray, np.ndarray]]) -> BundleMap:
    """Assemble per-cell orthonormal frames into the inclusion map sub -> ambient."""
    n = ambient.base.size
    dims = np.zeros(n, dtype=np.int64)
    for cells, frame in pieces:
        dims[cells] = frame.shape[2]
    blocks = np.zeros((n, ambient.max_dim, int(dims.max(initial=0))), dtype=np.complex128)
    for cells, frame in pieces:
        blocks[cells, :frame.shape[1], :frame.shape[2]] = frame
    return BundleMap(FiberField(ambient.base, dims), ambient, blocks)


def fiber_null_frames(T: BundleMap, eps_rank: float = DEFAULT_EPS_RANK) -> BundleMap:
    """Isometric inclusion of the fiberwise kernel field ker T(xi) into the source."""
    pieces = []
    for idx, m, k, _, _, vh, ranks in _svd_groups(T, eps_rank):
        cells = _cells(idx, T.size)
        for r in np.unique(ranks):
            sel = ranks == r
            pieces.append((cells[sel], np.conj(vh[sel, r:, :]).transpose(0, 2, 1)))
    return _frames_to_map(T.source, pieces)


def fiber_range_frames(T: BundleMap, eps_rank: float = DEFAULT_EPS_RANK,
                       counts: Optional[np.ndarray] = None) -> BundleMap:
    """Inclusion of the span of the leading left singular vectors into the target.

    ``counts`` fixes how many vectors to keep per cell (default: the numeric rank).
    """
    pieces = []
    for idx, m, k, u, _, _, ranks in _svd_groups(T, eps_rank):
        cells = _cells(idx, T.size)
        keep = ranks if counts is None else np.clip(counts[cells], 0, m)
        for r in np.unique(keep):
            sel = keep == r
            pieces.append((cells[sel], np.asarray(u[sel, :, :r])))
    return _frames_to_map(T.target, pieces)


def fiber_complement_frames(frames: BundleMap, eps_rank: float = DEFAULT_EPS_RANK) -> BundleMap:
    """Inclusion of the orthogonal complement of the span of ``frames`` in its target."""
    return fiber_null_frames(adjoint_map(frames), eps_rank)


def fiber_eigenvalues(T: BundleMap) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian endomorphism field; NaN padded."""
    if not T.is_endomorphism:
        raise ShapeMismatchError("eigenvalues need a square endomorphism field")
    out = np.full((T.size, T.source.max_dim), np.nan)
    for (k,), idx in shape_groups(T.source.dims):
        if k == 0:
            continue
        sub = T.blocks[idx, :k, :k]
        sub = 0.5 * (sub + np.conj(sub).transpose(0, 2, 1))
        out[idx, :k] = fiber_map(lambda b: np.linalg.eigvalsh(b), [sub])
    return out


# Algebra of bundle maps

def adjoint_map(T: BundleMap) -> BundleMap:
    return BundleMap(T.target, T.source, np.conj(T.blocks).transpose(0, 2, 1).copy())


def compose(S: BundleMap, T: BundleMap) -> BundleMap:
    """S o T."""
    if not T.target.matches(S.source):
        raise ShapeMismatchError("cannot compose: target of T is not the source of S")
    return BundleMap(T.source, S.target, np.matmul(S.blocks, T.blocks))


def identity_map(field: FiberField) -> BundleMap:
    d = field.max_dim
    eye = np.broadcast_to(np.eye(d, dtype=np.complex128), (field.base.size, d, d)).copy()
    if not field.is_constant:
        eye *= (np.arange(d)[None, :] < field.dims[:, None])[:, :, None]
    return BundleMap(field, field, eye)


def zero_map(source: FiberField, target: FiberField) -> BundleMap:
    _same_base(source.base, target.base)
    return BundleMap(source, target,
                     np.zeros((source.base.size, target.max_dim, source.max_dim), dtype=np.complex128))


def _place(out: np.ndarray, block: np.ndarray, row_off: np.ndarray, col_off: np.ndarray) -> None:
    n, rows, cols = block.shape
    if rows == 0 or cols == 0:
        return
    j = np.arange(n)[:, None, None]
    r = row_off[:, None, None] + np.arange(rows)[None, :, None]
    c = col_off[:, None, None] + np.arange(cols)[None, None, :]
    out[j, r, c] = block


def _assemble(source: FiberField, target: FiberField,
              parts: Sequence[Tuple[BundleMap, np.ndarray, np.ndarray]]) -> BundleMap:
    n = source.base.size
    rows = max(int((ro + p.blocks.shape[1]).max(initial=0)) for p, ro, _ in parts)
    cols = max(int((co + p.blocks.shape[2]).max(initial=0)) for p, _, co in parts)
    out = np.zeros((n, rows, cols), dtype=np.complex128)
    for p, ro, co in parts:
        _place(out, p.blocks, ro, co)
    return BundleMap(source, target, out[:, :target.max_dim, :source.max_dim].copy())


def hstack_maps(a: BundleMap, b: BundleMap) -> BundleMap:
    """[a  b]: source A (+) B -> shared target."""
    if not a.target.matches(b.target):
        raise ShapeMismatchError("horizontal stacking needs a common target")
    zeros = np.zeros(a.size, dtype=np.int64)
    return _assemble(a.source + b.source, a.target,
                     [(a, zeros, zeros), (b, zeros, a.source.dims)])


def vstack_maps(a: BundleMap, b: BundleMap) -> BundleMap:
    """[a; b]: shared source -> A (+) B."""
    if not a.source.matches(b.source):
        raise ShapeMismatchError("vertical stacking needs a common source")
    zeros = np.zeros(a.size, dtype=np.int64)
    return _assemble(a.source, a.target + b.target,
                     [(a, zeros, zeros), (b, a.target.dims, zeros)])


def direct_sum_maps(a: BundleMap, b: BundleMap) -> BundleMap:
    """Block-diagonal a (+) b."""
    _same_base(a.base, b.base)
    zeros = np.zeros(a.size, dtype=np.int64)
    return _assemble(a.source + b.source, a.target + b.target,
                     [(a, zeros, zeros), (b, a.target.dims, a.source.dims)])


# Complexes

def check_complex(C: BundleComplex, tol_complex: float = DEFAULT_TOL_COMPLEX) -> ComplexCheck:
    """Largest fiberwise operator norm of d^{i+1} o d^i over cells and degrees."""
    for i, d in enumerate(C.maps):
        if not (d.source.matches(C.fields[i]) and d.target.matches(C.fields[i + 1])):
            raise ShapeMismatchError(f"differential {i} does not map E^{i} to E^{i + 1}")
    worst, worst_degree, worst_cell = 0.0, None, None
    for i in range(len(C.maps) - 1):
        norms = fiber_singular_values(compose(C.maps[i + 1], C.maps[i]))
        if norms.shape[1] == 0:
            continue
        top = np.nan_to_num(norms[:, 0], nan=0.0)
        cell = int(np.argmax(top))
        if top[cell] > worst:
            worst, worst_degree, worst_cell = float(top[cell]), i, cell
    return ComplexCheck(worst, worst_degree, worst_cell, tol_complex)


def require_complex(C: BundleComplex, tol_complex: float = DEFAULT_TOL_COMPLEX) -> None:
    report = check_complex(C, tol_complex)
    if not report.passed:
        raise ComplexValidationError(
            f"d^{report.worst_degree + 1} o d^{report.worst_degree} has norm "
            f"{report.max_residual:.3g} at cell {report.worst_cell}; not a cochain complex")


def _degree(C: BundleComplex, i: int) -> None:
    if not 0 <= i <= C.top:
        raise ValidationFailure(f"degree {i} out of range 0..{C.top}")


def laplacian(C: BundleComplex, i: int) -> BundleMap:
    """Delta^i = d^i* d^i + d^{i-1} d^{i-1}* on E^i."""
    _degree(C, i)
    lap = zero_map(C.fields[i], C.fields[i])
    if i < C.top:
        d = C.maps[i]
        lap = lap + compose(adjoint_map(d), d)
    if i > 0:
        d = C.maps[i - 1]
        lap = lap + compose(d, adjoint_map(d))
    return lap


def betti_field(C: BundleComplex, eps_rank: float = DEFAULT_EPS_RANK) -> np.ndarray:
    """Fiberwise Betti numbers, shape (N + 1, n)."""
    ranks = [fiber_ranks(d, eps_rank) for d in C.maps]
    zeros = np.zeros(C.base.size, dtype=np.int64)
    out = []
    for i, field in enumerate(C.fields):
        rank_out = ranks[i] if i < C.top else zeros
        rank_in = ranks[i - 1] if i > 0 else zeros
        out.append(field.dims - rank_out - rank_in)
    return np.stack(out)


def fiber_betti(C: BundleComplex, cell: int, eps_rank: float = DEFAULT_EPS_RANK) -> List[int]:
    """beta^i(xi) = dim ker d^i(xi) - rank d^{i-1}(xi) at one sample point."""
    ranks = [numeric_rank(d.block(cell), eps_rank) for d in C.maps] + [0]
    betti = []
    for i, field in enumerate(C.fields):
        rank_in = ranks[i - 1] if i > 0 else 0
        betti.append(int(field.dims[cell]) - ranks[i] - rank_in)
    return betti


def eigen_zero_floor(eig: np.ndarray, eps_rank: float = DEFAULT_EPS_RANK) -> np.ndarray:
    """Per-cell level below which eigenvalues of a d*d-type operator count as zero.

    The square of the singular value cutoff used by ``numeric_rank``,
    eps_rank^2 * (sqrt(largest eigenvalue) + 1)^2, but never below the
    round-off of a Hermitian eigensolve.
    """
    if eig.shape[1] == 0:
        return np.zeros(eig.shape[0])
    top = np.max(np.abs(np.nan_to_num(eig, nan=0.0)), axis=1)
    squared = (eps_rank * (np.sqrt(top) + 1.0)) ** 2
    return np.maximum(squared, ROUNDOFF_EPS_RANK * (top + 1.0))


def laplacian_kernel_dims(C: BundleComplex, i: int,
                          eps_rank: float = DEFAULT_EPS_RANK) -> np.ndarray:
    """dim ker Delta^i(xi) per cell, eigenvalues at or below ``eigen_zero_floor`` counted as zero."""
    eig = fiber_eigenvalues(laplacian(C, i))
    if eig.shape[1] == 0:
        return np.zeros(C.base.size, dtype=np.int64)
    floor = eigen_zero_floor(eig, eps_rank)
    with np.errstate(invalid="ignore"):
        return np.sum(eig <= floor[:, None], axis=1).astype(np.int64)


# Traces and dimensions

def trace_endo(T: BundleMap, nu: Optional[DensityMeasure] = None) -> complex:
    """tr_nu(T) = integral of the fiberwise matrix trace."""
    if not T.is_endomorphism:
        raise ShapeMismatchError("trace needs square blocks (source field = target field)")
    traces = np.trace(T.blocks, axis1=1, axis2=2)
    return integrate(T.base, nu, traces)


def vn_dimension(H: FiberField, nu: Optional[DensityMeasure] = None) -> float:
    return float(integrate(H.base, nu, H.dims.astype(float)).real)


def generic_value(values: np.ndarray, weights: np.ndarray) -> int:
    """Integer value attained on the largest total weight (ties go to the smaller value)."""
    keys, inverse = np.unique(np.asarray(values), return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=weights, minlength=len(keys))
    return int(keys[int(np.argmax(mass))])
