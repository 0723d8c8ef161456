"""Divisors of torsion objects and of the extended cohomology of complexes.

The divisor is the closed set of points near which every localized spectral
density function stays positive.  On a grid it is detected where the generic
co-singular value of the structure map reaches zero within the resolution.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from src.bundle import BundleComplex, BundleMap, betti_field, fiber_singular_values, generic_value
from src.errors import (
    EmptyRegionError,
    InsufficientDataError,
    NotTorsionError,
    ShapeMismatchError,
    ValidationFailure,
)
from src.excat import ExtObject, cosingular_values, generic_rank, injective_representative
from src.measure import SampleSpace, restrict_measure, vanishing_mask
from src.schemas import ClusterInfo, DivisorSummary
from src.settings import DEFAULT_EPS_RANK
from src.spectral import StepFunction, WindowPolicy, capacity, sdf_from_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionPolicy:
    mode: str = "local"               # "local" or "threshold"
    c_grid: float = 1.0
    eps_rank: float = DEFAULT_EPS_RANK
    budget_fraction: float = 0.25     # of mu(Z)
    determinant_check: bool = False

    def delta(self, space: SampleSpace) -> float:
        """Absolute detection level of threshold mode: max(eps_rank, c_grid * h)."""
        return max(self.eps_rank, self.c_grid * space.cell_diameter)


@dataclass(eq=False)
class DivisorReport:
    space: SampleSpace
    mask: np.ndarray
    min_singular: np.ndarray
    criterion: str
    exact_jumps: Optional[np.ndarray] = None
    determinant_mask: Optional[np.ndarray] = None
    clusters: List[ClusterInfo] = field(default_factory=list)

    @property
    def flagged_cells(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def per_cell_min_singular(self) -> Dict[int, float]:
        return {int(j): float(self.min_singular[j]) for j in self.flagged_cells}

    @property
    def flagged_measure(self) -> float:
        return float(np.sum(self.space.weights[self.mask]))

    @property
    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def flagged_points(self) -> np.ndarray:
        return self.space.points[self.mask]

    def summary(self) -> DivisorSummary:
        agreement = None
        if self.determinant_mask is not None:
            agreement = float(np.mean(self.determinant_mask == self.mask))
        return DivisorSummary(
            criterion=self.criterion,
            flagged_count=int(self.mask.sum()),
            flagged_measure=self.flagged_measure,
            cell_diameter=self.space.cell_diameter,
            clusters=self.clusters,
            determinant_agreement=agreement,
        )


def _region(space: SampleSpace, region_cells: Union[np.ndarray, Sequence[int]]) -> np.ndarray:
    region = np.asarray(region_cells)
    if region.dtype == bool:
        if region.shape != (space.size,):
            raise ShapeMismatchError("region mask needs one entry per cell")
        return region
    mask = np.zeros(space.size, dtype=bool)
    mask[region.astype(np.int64)] = True
    return mask


def local_sdf(X: ExtObject, region_cells: Union[np.ndarray, Sequence[int]],
              lambda_grid: Optional[Sequence[float]] = None,
              eps_rank: float = DEFAULT_EPS_RANK) -> StepFunction:
    """SDF of X with respect to mu restricted to the region's cells."""
    region = _region(X.base, region_cells)
    if not region.any():
        raise EmptyRegionError("local spectral density needs a nonempty region")
    nu = restrict_measure(X.base, region)
    return sdf_from_map(injective_representative(X, eps_rank), nu, lambda_grid, eps_rank)


def _detect(space: SampleSpace, values: np.ndarray, sup_norm: float,
            policy: DetectionPolicy) -> np.ndarray:
    floor = policy.eps_rank * (1.0 + sup_norm)
    if policy.mode == "threshold":
        with np.errstate(invalid="ignore"):
            return values <= policy.delta(space) * (1.0 + sup_norm)
    if policy.mode != "local":
        raise ValidationFailure(f"unknown detection mode '{policy.mode}'")
    return vanishing_mask(space, values, floor, policy.c_grid)


def divisor_of_object(X: ExtObject, policy: Optional[DetectionPolicy] = None) -> DivisorReport:
    """Cells where the generic co-singular value of alpha vanishes."""
    policy = policy or DetectionPolicy()
    rank = generic_rank(X, policy.eps_rank)
    if rank == 0:
        return DivisorReport(X.base, np.zeros(X.base.size, dtype=bool),
                             np.full(X.base.size, np.inf), "cosingular")
    sigma = cosingular_values(X, rank)
    values = np.where(np.isnan(sigma), 0.0, sigma)
    mask = _detect(X.base, values, X.alpha.sup_norm, policy)
    return DivisorReport(X.base, mask, values, "cosingular")


def divisor_of_map(T: BundleMap, detection_policy: Optional[DetectionPolicy] = None) -> DivisorReport:
    """Divisor of the torsion object (T: E -> E); it coincides with the zero set of det T."""
    policy = detection_policy or DetectionPolicy()
    if not np.array_equal(T.source.dims, T.target.dims):
        raise ShapeMismatchError("divisor_of_map needs square fibers")
    report = divisor_of_object(ExtObject(T), policy)
    report.criterion = "min_singular"
    budget = policy.budget_fraction * T.base.total_measure
    if report.flagged_measure > budget:
        raise NotTorsionError(
            f"flagged set has measure {report.flagged_measure:.3g} > {budget:.3g}; "
            "the zero set of det T must have measure zero")
    if policy.determinant_check:
        sv = fiber_singular_values(T)
        dims = T.source.dims
        # |det T|^2 is the product of the eigenvalues of T*T
        with np.errstate(invalid="ignore", divide="ignore"):
            log_det = np.nansum(np.log(sv), axis=1)
        delta = policy.delta(T.base) * (1.0 + T.sup_norm)
        report.determinant_mask = log_det <= dims * math.log(delta)
    return report


@dataclass(eq=False)
class ComplexDivisor:
    report: DivisorReport
    generic_betti: List[int]
    torsion_all: bool
    vanishes: bool
    betti: np.ndarray


def divisor_of_complex(C: BundleComplex, eps_rank: float = DEFAULT_EPS_RANK,
                       policy: Optional[DetectionPolicy] = None) -> ComplexDivisor:
    """Union of the divisors of T(H^i) together with the Betti-jump cells."""
    policy = policy or DetectionPolicy(eps_rank=eps_rank)
    space = C.base
    betti = betti_field(C, eps_rank)
    generic = [generic_value(b, space.weights) for b in betti]
    jumps = np.any(betti != np.array(generic)[:, None], axis=0)

    mask = jumps.copy()
    min_singular = np.full(space.size, np.inf)
    for d in C.maps:
        X = ExtObject(d)
        rank = generic_rank(X, eps_rank)
        if rank == 0:
            continue
        sigma = np.nan_to_num(cosingular_values(X, rank), nan=0.0)
        mask |= _detect(space, sigma, d.sup_norm, policy)
        min_singular = np.minimum(min_singular, sigma)

    report = DivisorReport(space, mask, min_singular, "betti_jump+cosingular", exact_jumps=jumps)
    torsion_all = all(b == 0 for b in generic)
    if torsion_all and not mask.any():
        logger.info("complex is fiberwise acyclic everywhere; extended cohomology vanishes")
    return ComplexDivisor(report, generic, torsion_all, torsion_all and not mask.any(), betti)


def _label_periodic(space: SampleSpace, mask: np.ndarray) -> np.ndarray:
    grid = mask.reshape(space.shape)
    labels, count = ndimage.label(grid)
    if count == 0:
        return labels.ravel()
    parent = np.arange(count + 1)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for axis, periodic in enumerate(space.periodic):
        if not periodic or space.shape[axis] < 2:
            continue
        first = np.take(labels, 0, axis=axis).ravel()
        last = np.take(labels, -1, axis=axis).ravel()
        for a, b in zip(first, last):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(count + 1)])
    _, dense = np.unique(roots, return_inverse=True)
    return dense.ravel()[labels.ravel()]


def divisor_clusters(report: DivisorReport) -> np.ndarray:
    """Connected flagged clusters (periodic axes wrap); 0 marks unflagged cells."""
    return _label_periodic(report.space, report.mask)


def describe_clusters(report: DivisorReport) -> DivisorReport:
    """Fill ``report.clusters`` with the size and mean position of every cluster."""
    labels = divisor_clusters(report)
    report.clusters = [
        ClusterInfo(label=label, cells=int(np.sum(labels == label)),
                    center=[float(v) for v in report.space.points[labels == label].mean(axis=0)])
        for label in range(1, int(labels.max(initial=0)) + 1)
    ]
    return report


def annotate_multiplicities(report: DivisorReport, X: ExtObject, radius: Optional[int] = None,
                            eps_rank: float = DEFAULT_EPS_RANK) -> DivisorReport:
    """Attach a local capacity estimate to every divisor cluster.

    The estimate uses a neighbourhood grown by ``radius`` cells (default: a
    twentieth of the shortest axis, at least 3).
    """
    space = report.space
    if radius is None:
        radius = max(3, min(space.shape) // 20)
    labels = divisor_clusters(report)
    describe_clusters(report)
    structure = ndimage.generate_binary_structure(space.dim, 1)
    for info in report.clusters:
        cells = labels == info.label
        grown = ndimage.binary_dilation(cells.reshape(space.shape), structure,
                                        iterations=radius).ravel()
        try:
            estimate = capacity(local_sdf(X, grown, eps_rank=eps_rank), WindowPolicy.mass())
            info.local_capacity = estimate.capacity
            info.local_capacity_stderr = estimate.slope_stderr
        except InsufficientDataError as e:
            logger.info("cluster %d: no local capacity (%s)", info.label, e.detail)
    return report
