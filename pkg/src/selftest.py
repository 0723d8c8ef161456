"""Property suites checking the fiberwise algorithms against independent oracles.

Every suite draws its instances from a seeded ``numpy.random.Generator`` and
compares against dense linear algebra done directly with numpy.
"""
import logging
from typing import Callable, List, Tuple

import numpy as np

from src.bundle import BundleComplex, BundleMap, compose, trace_endo
from src.excat import (
    ExtMorphism,
    ExtObject,
    cokernel,
    direct_sum,
    dual,
    extended_cohomology,
    kernel,
    projective_part,
)
from src.measure import Factor, SampleSpace, build_grid
from src.schemas import SelfTestResult
from src.spectral import default_lambda_grid, laplacian_count_check, sdf_from_map

logger = logging.getLogger(__name__)

DIMENSION_TOL = 1e-9
RELATIVE_TOL = 1e-12


def _point() -> SampleSpace:
    return build_grid([Factor("interval")], 1)


def random_matrix(rng: np.random.Generator, rows: int, cols: int, rank: int = None) -> np.ndarray:
    """Complex Gaussian matrix, optionally of prescribed rank."""
    if rank is None:
        rank = min(rows, cols)
    left = rng.standard_normal((rows, rank)) + 1j * rng.standard_normal((rows, rank))
    right = rng.standard_normal((rank, cols)) + 1j * rng.standard_normal((rank, cols))
    return left @ right


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _result(suite: str, residuals: List[float], tol: float) -> SelfTestResult:
    residuals = np.asarray(residuals, dtype=float)
    failures = int(np.sum(~(residuals <= tol)))
    if failures:
        logger.warning("%s: %d of %d instances failed", suite, failures, residuals.size)
    return SelfTestResult(suite=suite, instances=int(residuals.size), failures=failures,
                          max_residual=float(residuals.max(initial=0.0)), passed=failures == 0)


def _rank(a: np.ndarray) -> int:
    return int(np.linalg.matrix_rank(a)) if a.size else 0


def random_morphism(rng: np.random.Generator, space: SampleSpace) -> ExtMorphism:
    """(f, g): (alpha: A' -> A) -> (beta: B' -> B) with B' = A' (+) extra.

    beta = [f alpha, beta0] and g the inclusion of A', so f alpha = beta g exactly.
    """
    a_src, a_tgt, b_tgt, extra = (int(v) for v in rng.integers(1, 5, size=4))
    alpha = random_matrix(rng, a_tgt, a_src, int(rng.integers(0, min(a_src, a_tgt) + 1)))
    f = random_matrix(rng, b_tgt, a_tgt, int(rng.integers(0, min(a_tgt, b_tgt) + 1)))
    beta0 = random_matrix(rng, b_tgt, extra, int(rng.integers(0, min(b_tgt, extra) + 1)))
    beta = np.hstack([f @ alpha, beta0])
    g = np.vstack([np.eye(a_src), np.zeros((extra, a_src))])
    X = ExtObject(BundleMap.from_constant(space, alpha))
    Y = ExtObject(BundleMap.from_constant(space, beta))
    return ExtMorphism(X, Y, BundleMap.from_constant(space, f), BundleMap.from_constant(space, g))


def _quotient_dim(obj: ExtObject) -> int:
    return int(obj.target.dims[0]) - _rank(obj.alpha.block(0))


def single_point_oracles(rng: np.random.Generator, instances: int = 200) -> List[SelfTestResult]:
    """Over one point the category is finite-dimensional vector spaces modulo images.

    ker(A/im alpha -> B/im beta) = f^{-1}(im beta) / im alpha and
    coker = B / (im beta + im f).
    """
    space = _point()
    kernel_res, coker_res, proj_res = [], [], []
    for _ in range(instances):
        m = random_morphism(rng, space)
        alpha, beta, f = m.source.alpha.block(0), m.target.alpha.block(0), m.f.block(0)
        preimage = alpha.shape[0] - (_rank(np.hstack([f, beta])) - _rank(beta))
        kernel_res.append(abs(_quotient_dim(kernel(m).object) - (preimage - _rank(alpha))))
        coker_res.append(abs(_quotient_dim(cokernel(m)) - (beta.shape[0] - _rank(np.hstack([beta, f])))))
        proj_res.append(abs(int(projective_part(m.source).dims[0]) - _quotient_dim(m.source)))
    return [
        _result("kernel_single_point", kernel_res, 0),
        _result("cokernel_single_point", coker_res, 0),
        _result("projective_part_single_point", proj_res, 0),
    ]


def random_complex(rng: np.random.Generator, space: SampleSpace, dims: Tuple[int, int, int] = None,
                   scale: Tuple[float, float] = (0.5, 2.0)) -> Tuple[BundleComplex, np.ndarray]:
    """E^0 -> E^1 -> E^2 in standard form at every cell, conjugated by random unitaries.

    Returns the complex and the exact Betti numbers, shape (3, cells).
    """
    if dims is None:
        dims = tuple(int(v) for v in rng.integers(1, 5, size=3))
    e0, e1, e2 = dims
    n = space.size
    d0 = np.zeros((n, e1, e0), dtype=np.complex128)
    d1 = np.zeros((n, e2, e1), dtype=np.complex128)
    betti = np.zeros((3, n), dtype=np.int64)
    for j in range(n):
        r1 = int(rng.integers(0, min(e0, e1) + 1))
        r2 = int(rng.integers(0, min(e1 - r1, e2) + 1))
        D0 = np.zeros((e1, e0))
        D0[np.arange(r1), np.arange(r1)] = rng.uniform(*scale, size=r1)
        D1 = np.zeros((e2, e1))
        D1[np.arange(r2), r1 + np.arange(r2)] = rng.uniform(*scale, size=r2)
        W0, W1, W2 = random_unitary(rng, e0), random_unitary(rng, e1), random_unitary(rng, e2)
        d0[j] = W1 @ D0 @ W0.conj().T
        d1[j] = W2 @ D1 @ W1.conj().T
        betti[:, j] = (e0 - r1, e1 - r1 - r2, e2 - r2)
    C = BundleComplex.from_maps([BundleMap.from_blocks(space, d0), BundleMap.from_blocks(space, d1)])
    return C, betti


def _generic_stratum(betti: np.ndarray, weights: np.ndarray) -> np.ndarray:
    values = np.unique(betti)
    mass = np.array([weights[betti == v].sum() for v in values])
    # ties go to the smaller value
    return betti == values[int(np.argmax(mass))]


def betti_integration(rng: np.random.Generator, complexes: int = 100,
                      cells: int = 8) -> List[SelfTestResult]:
    """Per-degree Betti integrals and projective dimensions against the planted ranks."""
    space = build_grid([Factor("interval")], cells)
    betti_res, proj_res = [], []
    for _ in range(complexes):
        C, betti = random_complex(rng, space)
        coh = extended_cohomology(C)
        for i, degree in enumerate(coh.degrees):
            expected = float(np.sum(betti[i] * space.weights))
            betti_res.append(abs(degree.betti_integral - expected))
            generic = _generic_stratum(betti[i], space.weights)
            proj_res.append(abs(degree.proj_dim - float(np.sum(betti[i][generic] * space.weights[generic]))))
            proj_res.append(abs(degree.proj_dim + float(np.sum(betti[i][~generic] * space.weights[~generic]))
                                - degree.betti_integral))
    return [
        _result("betti_integration", betti_res, DIMENSION_TOL),
        _result("projective_dimension", proj_res, DIMENSION_TOL),
    ]


def laplacian_identity(rng: np.random.Generator, complexes: int = 20, lambdas: int = 50,
                       cells: int = 8) -> List[SelfTestResult]:
    """tr chi_[0, lam](Delta^i) = harmonic mass + F^i(sqrt lam) + F^{i+1}(sqrt lam)."""
    space = build_grid([Factor("interval")], cells)
    residuals = []
    for _ in range(complexes):
        C, _ = random_complex(rng, space, scale=(0.05, 5.0))
        sampled = 10.0 ** rng.uniform(-3.0, np.log10(30.0), size=lambdas)
        for lam in np.r_[0.0, 1e-12, sampled]:
            for i in range(C.top + 1):
                residuals.append(abs(laplacian_count_check(C, i, float(lam)).residual))
    return [_result("laplacian_counting", residuals, DIMENSION_TOL)]


def _random_field(rng: np.random.Generator, space: SampleSpace, dim: int) -> ExtObject:
    blocks = (rng.standard_normal((space.size, dim, dim))
              + 1j * rng.standard_normal((space.size, dim, dim)))
    return ExtObject(BundleMap.from_blocks(space, blocks))


def _sdf_gap(first, second, total: float) -> float:
    grid = default_lambda_grid(1e-4, 1e2)
    return float(np.max(np.abs(first(grid) - second(grid)))) / max(total, 1.0)


def sdf_identities(rng: np.random.Generator, instances: int = 20,
                   cells: int = 64) -> List[SelfTestResult]:
    """F of a direct sum is the sum of the SDFs, and a torsion object and its dual share F."""
    space = build_grid([Factor("torus", 1.0)], cells)
    additivity, duality = [], []
    for _ in range(instances):
        X = _random_field(rng, space, int(rng.integers(1, 4)))
        Y = _random_field(rng, space, int(rng.integers(1, 4)))
        F_sum = sdf_from_map(direct_sum(X, Y))
        additivity.append(_sdf_gap(F_sum, sdf_from_map(X) + sdf_from_map(Y), F_sum.total))
        F_x = sdf_from_map(X)
        duality.append(_sdf_gap(sdf_from_map(dual(X)), F_x, F_x.total))
    return [
        _result("sdf_additivity", additivity, RELATIVE_TOL),
        _result("dual_sdf", duality, RELATIVE_TOL),
    ]


def trace_symmetry(rng: np.random.Generator, instances: int = 20,
                   cells: int = 16) -> List[SelfTestResult]:
    """tr(ST) = tr(TS) for S: E -> F and T: F -> E."""
    space = build_grid([Factor("torus", 1.0)], cells)
    residuals = []
    for _ in range(instances):
        e, f = (int(v) for v in rng.integers(1, 5, size=2))
        S = BundleMap.from_blocks(space, np.stack([random_matrix(rng, f, e) for _ in range(cells)]))
        T = BundleMap.from_blocks(space, np.stack([random_matrix(rng, e, f) for _ in range(cells)]))
        st, ts = trace_endo(compose(S, T)), trace_endo(compose(T, S))
        residuals.append(abs(st - ts) / max(abs(st), 1.0))
    return [_result("trace_symmetry", residuals, RELATIVE_TOL)]


SUITES: List[Callable[[np.random.Generator], List[SelfTestResult]]] = [
    single_point_oracles,
    betti_integration,
    laplacian_identity,
    sdf_identities,
    trace_symmetry,
]


def run_selftest(seed: int = 0) -> List[SelfTestResult]:
    rng = np.random.default_rng(seed)
    results: List[SelfTestResult] = []
    for suite in SUITES:
        results.extend(suite(rng))
    return results
