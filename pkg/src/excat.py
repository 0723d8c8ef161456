"""Extended category over sampled bundles.

An object is a bundle map (alpha: A' -> A); it stands for "A modulo the image
of alpha".  Morphisms are pairs (f, g) with f o alpha = beta o g.  Kernels and
cokernels are assembled fiberwise from pullbacks and pushouts, and every
closed-image question is decided numerically with ``eps_rank``.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional

import numpy as np

from src.bundle import (
    BundleComplex,
    BundleMap,
    FiberField,
    adjoint_map,
    betti_field,
    compose,
    direct_sum_maps,
    fiber_complement_frames,
    fiber_null_frames,
    fiber_range_frames,
    fiber_ranks,
    fiber_singular_values,
    generic_value,
    hstack_maps,
    identity_map,
    kth_largest_singular,
    require_complex,
    zero_map,
)
from src.errors import NotTorsionError, ShapeMismatchError, ValidationFailure
from src.measure import SampleSpace, integrate, vanishing_mask
from src.settings import DEFAULT_EPS_RANK

logger = logging.getLogger(__name__)

FRAME_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ExtObject:
    alpha: BundleMap

    @property
    def source(self) -> FiberField:
        return self.alpha.source

    @property
    def target(self) -> FiberField:
        return self.alpha.target

    @property
    def base(self) -> SampleSpace:
        return self.alpha.base

    @classmethod
    def projective(cls, fiber: FiberField) -> "ExtObject":
        """(0 -> A)."""
        empty = FiberField.constant(fiber.base, 0)
        return cls(zero_map(empty, fiber))

    @classmethod
    def zero(cls, fiber: FiberField) -> "ExtObject":
        """(id: A -> A)."""
        return cls(identity_map(fiber))


def _morphism_tol(f: BundleMap, alpha: BundleMap) -> float:
    return 1e-9 * (1.0 + f.sup_norm * alpha.sup_norm)


@dataclass(frozen=True, eq=False)
class ExtMorphism:
    source: ExtObject
    target: ExtObject
    f: BundleMap
    g: BundleMap
    tol: Optional[float] = None

    def __post_init__(self):
        if not (self.f.source.matches(self.source.target) and self.f.target.matches(self.target.target)):
            raise ShapeMismatchError("f must map A to B")
        if not (self.g.source.matches(self.source.source) and self.g.target.matches(self.target.source)):
            raise ShapeMismatchError("g must map A' to B'")
        tol = self.tol if self.tol is not None else _morphism_tol(self.f, self.source.alpha)
        object.__setattr__(self, "tol", tol)
        if self.residual > tol:
            raise ValidationFailure(
                f"f o alpha != beta o g: intertwining residual {self.residual:.3g} > {tol:.3g}")

    @cached_property
    def residual(self) -> float:
        diff = compose(self.f, self.source.alpha) - compose(self.target.alpha, self.g)
        sv = fiber_singular_values(diff)
        if sv.shape[1] == 0:
            return 0.0
        return float(np.max(np.nan_to_num(sv[:, 0], nan=0.0)))


def identity_morphism(X: ExtObject) -> ExtMorphism:
    return ExtMorphism(X, X, identity_map(X.target), identity_map(X.source))


def zero_morphism(X: ExtObject, Y: ExtObject) -> ExtMorphism:
    return ExtMorphism(X, Y, zero_map(X.target, Y.target), zero_map(X.source, Y.source))


def compose_morphisms(second: ExtMorphism, first: ExtMorphism) -> ExtMorphism:
    return ExtMorphism(first.source, second.target,
                       compose(second.f, first.f), compose(second.g, first.g))


@dataclass(frozen=True, eq=False)
class KernelResult:
    object: ExtObject
    inclusion: ExtMorphism
    strata: Dict[int, float]

    @property
    def stable(self) -> bool:
        return len(self.strata) <= 1


def _strata(dims: np.ndarray, weights: np.ndarray) -> Dict[int, float]:
    keys, inverse = np.unique(dims, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=weights, minlength=len(keys))
    return {int(k): float(m) for k, m in zip(keys, mass)}


def _projection(first: FiberField, second: FiberField) -> BundleMap:
    """first (+) second -> first."""
    return hstack_maps(identity_map(first), zero_map(second, first))


# Classification

def is_zero(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK, c_grid: float = 1.0) -> bool:
    """alpha surjective everywhere with co-singular values bounded away from zero.

    The bound is checked with the resolution-aware vanishing test as well, so a
    zero of alpha falling between two sample points is still seen.
    """
    alpha = X.alpha
    m = X.target.dims
    if np.any(fiber_ranks(alpha, eps_rank) < m):
        return False
    if X.target.max_dim == 0:
        return True
    sv = fiber_singular_values(alpha)
    cosingular = np.full(alpha.size, np.inf)
    has = m > 0
    cosingular[has] = sv[np.flatnonzero(has), m[has] - 1]
    floor = eps_rank * (1.0 + alpha.sup_norm)
    if np.nanmin(cosingular) <= floor:
        return False
    return not np.any(vanishing_mask(X.base, cosingular, floor, c_grid))


def is_torsion(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK, budget_cells: int = 0) -> bool:
    """alpha fiberwise surjective off at most ``budget_cells`` exceptional cells."""
    deficient = fiber_ranks(X.alpha, eps_rank) < X.target.dims
    return int(np.sum(deficient)) <= budget_cells


def generic_rank(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> int:
    return generic_value(fiber_ranks(X.alpha, eps_rank), X.base.weights)


def generic_corank(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> int:
    corank = X.target.dims - fiber_ranks(X.alpha, eps_rank)
    return generic_value(corank, X.base.weights)


# Kernel, cokernel, excision

def kernel(m: ExtMorphism, eps_rank: float = DEFAULT_EPS_RANK) -> KernelResult:
    """Kernel object (gamma: P' -> P) with its inclusion into the source.

    P  = ker(f (+) -beta : A (+) B' -> B)
    P' = ker(f alpha (+) -beta : A' (+) B' -> B)
    gamma(a', b') = (alpha a', b')
    """
    X, Y = m.source, m.target
    alpha, beta = X.alpha, Y.alpha
    frames_p = fiber_null_frames(hstack_maps(m.f, -beta), eps_rank)
    frames_pp = fiber_null_frames(hstack_maps(compose(m.f, alpha), -beta), eps_rank)
    lift = direct_sum_maps(alpha, identity_map(Y.source))
    gamma = compose(adjoint_map(frames_p), compose(lift, frames_pp))
    obj = ExtObject(gamma)

    f_k = compose(_projection(X.target, Y.source), frames_p)
    g_k = compose(_projection(X.source, Y.source), frames_pp)
    inclusion = ExtMorphism(obj, X, f_k, g_k, tol=max(m.tol, _morphism_tol(f_k, gamma)) * 10)

    strata = _strata(frames_p.source.dims, X.base.weights)
    if len(strata) > 1:
        logger.warning("kernel dimension is not constant over the base: strata %s", strata)
    return KernelResult(obj, inclusion, strata)


def cokernel(m: ExtMorphism) -> ExtObject:
    """((beta, -f): B' (+) A -> B)."""
    return ExtObject(hstack_maps(m.target.alpha, -m.f))


def _check_frames(frames: BundleMap) -> None:
    gram = compose(adjoint_map(frames), frames) - identity_map(frames.source)
    sv = fiber_singular_values(gram)
    if sv.shape[1] and np.nanmax(np.nan_to_num(sv[:, 0], nan=0.0)) > FRAME_TOL:
        raise ValidationFailure("excision frames must be orthonormal columns inside A'")


def excise(X: ExtObject, frames: BundleMap, eps_rank: float = DEFAULT_EPS_RANK) -> ExtObject:
    """Excise the subspace field P (given by orthonormal frames P -> A').

    Returns (beta: P^perp -> Q^perp) with Q = alpha(P) and beta the compressed alpha.
    """
    if not frames.target.matches(X.source):
        raise ShapeMismatchError("excised subspace must live inside A'")
    _check_frames(frames)
    p_perp = fiber_complement_frames(frames, eps_rank)
    image = compose(X.alpha, frames)
    q_perp = fiber_null_frames(adjoint_map(image), eps_rank)
    return ExtObject(compose(adjoint_map(q_perp), compose(X.alpha, p_perp)))


def kernel_frames(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> BundleMap:
    return fiber_null_frames(X.alpha, eps_rank)


def injective_representative(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> ExtObject:
    """Isomorphic object whose structure map is fiberwise injective."""
    if np.array_equal(fiber_ranks(X.alpha, eps_rank), X.source.dims):
        return X
    frames = kernel_frames(X, eps_rank)
    if frames.source.max_dim == 0:
        return X
    return excise(X, frames, eps_rank)


# Projective / torsion splitting

def projective_part(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> FiberField:
    """Cokernel dimension field A / cl(im alpha) at the generic rank."""
    return FiberField.constant(X.base, generic_corank(X, eps_rank))


def torsion_part(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> ExtObject:
    """(alpha: A' -> cl(im alpha)) realized on the leading left singular vectors."""
    counts = np.maximum(X.target.dims - generic_corank(X, eps_rank), 0)
    frames = fiber_range_frames(X.alpha, eps_rank, counts)
    return ExtObject(compose(adjoint_map(frames), X.alpha))


def direct_sum(X: ExtObject, Y: ExtObject) -> ExtObject:
    if X.base is not Y.base:
        raise ShapeMismatchError("direct sum needs objects over the same sample space")
    return ExtObject(direct_sum_maps(X.alpha, Y.alpha))


def dual(X: ExtObject, eps_rank: float = DEFAULT_EPS_RANK) -> ExtObject:
    """e(X) = (alpha*: A -> A') of an injective representative."""
    if not is_torsion(X, eps_rank):
        raise NotTorsionError("the dual object is only defined for torsion objects (dense image)")
    return ExtObject(adjoint_map(injective_representative(X, eps_rank).alpha))


# Extended cohomology of a bundle complex

@dataclass(frozen=True, eq=False)
class CohomologyDegree:
    degree: int
    object: ExtObject
    generic_betti: int
    proj_dim: float
    betti_integral: float
    singular_values: np.ndarray = field(repr=False)
    generic_mask: np.ndarray = field(repr=False, default=None)
    exceptional_mass: float = 0.0


@dataclass(frozen=True, eq=False)
class ExtCohomology:
    cochains: BundleComplex
    degrees: List[CohomologyDegree]
    betti: np.ndarray = field(repr=False)
    eps_rank: float = DEFAULT_EPS_RANK

    def __getitem__(self, i: int) -> CohomologyDegree:
        return self.degrees[i]

    @property
    def generic_betti(self) -> List[int]:
        return [d.generic_betti for d in self.degrees]

    def torsion_in_all_degrees(self) -> bool:
        return all(d.generic_betti == 0 for d in self.degrees)


def extended_cohomology(C: BundleComplex, eps_rank: float = DEFAULT_EPS_RANK,
                        tol_complex: float = 1e-9) -> ExtCohomology:
    """H^i = (d^{i-1}: C^{i-1} -> Z^i), Z^i the fiberwise kernel of d^i."""
    require_complex(C, tol_complex)
    base = C.base
    betti = betti_field(C, eps_rank)
    degrees = []
    for i in range(C.top + 1):
        cycles = fiber_null_frames(C.maps[i], eps_rank) if i < C.top else identity_map(C.fields[i])
        if i == 0:
            alpha = zero_map(FiberField.constant(base, 0), cycles.source)
            sv = np.zeros((base.size, 0))
        else:
            alpha = compose(adjoint_map(cycles), C.maps[i - 1])
            sv = fiber_singular_values(C.maps[i - 1])
        beta = generic_value(betti[i], base.weights)
        generic = betti[i] == beta
        exceptional = float(np.sum(base.weights[~generic]))
        degrees.append(CohomologyDegree(
            degree=i,
            object=ExtObject(alpha),
            generic_betti=beta,
            proj_dim=float(integrate(base, None, np.where(generic, betti[i], 0).astype(float)).real),
            betti_integral=float(integrate(base, None, betti[i].astype(float)).real),
            singular_values=sv,
            generic_mask=generic,
            exceptional_mass=exceptional,
        ))
        if exceptional:
            logger.info("degree %d: Betti number jumps on %d cells", i, int(np.sum(~generic)))
    return ExtCohomology(C, degrees, betti, eps_rank)


def cosingular_values(X: ExtObject, rank: int) -> np.ndarray:
    """The rank-th largest singular value of alpha per cell (+inf for rank 0)."""
    return kth_largest_singular(X.alpha, rank)
