"""Germs of one-parameter complexes at a divisor point.

Along a 1-D base the eigenvalues of d*d are tracked as continuous branches;
each branch that vanishes at t0 behaves like (t - t0)^(2k) gamma(t) and the
largest k is the height of the torsion at t0.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from src.bundle import (
    ROUNDOFF_EPS_RANK,
    BundleComplex,
    BundleMap,
    fiber_eigenvalues,
    fiber_singular_values,
)
from src.divisor import DetectionPolicy, divisor_clusters, divisor_of_object
from src.errors import (
    BranchOrderError,
    CapacityMismatchError,
    InsufficientDataError,
    MultipleDivisorPointsError,
    PreconditionFailure,
    ShapeMismatchError,
    ValidationFailure,
)
from src.excat import ExtObject
from src.measure import region_mask, restrict_measure
from src.schemas import BranchFit, GermReport
from src.settings import DEFAULT_EPS_RANK
from src.spectral import WindowPolicy, capacity, cohomology_sdf

logger = logging.getLogger(__name__)

ORDER_TOL = 0.2
CAPACITY_TOL = 0.1


@dataclass(frozen=True, eq=False)
class Branches:
    t: np.ndarray
    values: np.ndarray
    zero: np.ndarray
    ambiguous_steps: int = 0

    @property
    def count(self) -> int:
        return self.values.shape[1]


def match_branches(t: np.ndarray, eigenvalues: np.ndarray, eps_rank: float = DEFAULT_EPS_RANK,
                   crossing_tol: float = 1e-12) -> Branches:
    """Continue eigenvalue branches along t by minimal total displacement.

    The next values are assigned to the linear extrapolation of every branch;
    near-coincident values are resolved by ordering and counted as ambiguous.
    """
    vals = np.sort(np.asarray(eigenvalues, dtype=float), axis=1)
    n, m = vals.shape
    out = np.empty_like(vals)
    ambiguous = 0
    if n:
        out[0] = vals[0]
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    for k in range(1, n):
        if m == 1:
            out[k] = vals[k]
            continue
        pred = out[k - 1] if k == 1 else 2.0 * out[k - 1] - out[k - 2]
        cost = np.abs(pred[:, None] - vals[k][None, :])
        rows, cols = linear_sum_assignment(cost)
        # keep the previous ordering unless reassigning is strictly cheaper
        ranked = np.empty(m, dtype=int)
        ranked[np.argsort(out[k - 1], kind="stable")] = np.arange(m)
        keep = cost[np.arange(m), ranked].sum()
        if cost[rows, cols].sum() < keep - crossing_tol * (1.0 + scale):
            out[k, rows] = vals[k, cols]
        else:
            out[k] = vals[k, ranked]
        if np.min(np.diff(vals[k])) <= crossing_tol * (1.0 + scale):
            ambiguous += 1
    if ambiguous:
        logger.info("branch matching met %d near-crossings; resolved by ordering", ambiguous)
    zero = np.all(out <= eps_rank ** 2 * (1.0 + scale), axis=0) if n else np.zeros(m, dtype=bool)
    return Branches(np.asarray(t, dtype=float), out, zero, ambiguous)


def track_branches(field: BundleMap, eps_rank: float = DEFAULT_EPS_RANK,
                   cells: Optional[np.ndarray] = None) -> Branches:
    """Eigenvalue branches of a Hermitian PSD matrix field over a 1-D base."""
    space = field.base
    if space.dim != 1:
        raise ValidationFailure("branch tracking needs a one-dimensional base")
    if not field.source.is_constant:
        raise ShapeMismatchError("branch tracking needs constant fiber dimension")
    eig = fiber_eigenvalues(field)
    if cells is None:
        cells = np.arange(space.size)
    return match_branches(space.points[cells, 0], eig[cells], eps_rank)


@dataclass(frozen=True)
class OrderFitPolicy:
    h: float
    epsilon: float
    floor: float = 0.0
    min_points: int = 4
    tol: float = ORDER_TOL


def vanishing_order(t: np.ndarray, branch: np.ndarray, t0: float,
                    fit_policy: OrderFitPolicy) -> BranchFit:
    """k with branch(t) ~ (t - t0)^(2k) gamma, from the log-log slope near t0."""
    dist = np.abs(np.asarray(t, dtype=float) - t0)
    branch = np.asarray(branch, dtype=float)
    sel = (dist >= 5 * fit_policy.h) & (dist <= fit_policy.epsilon) & (branch > fit_policy.floor)
    if int(sel.sum()) < fit_policy.min_points:
        raise InsufficientDataError(
            f"only {int(sel.sum())} branch samples with 5h <= |t - t0| <= epsilon")
    x, y = np.log(dist[sel]), np.log(branch[sel])
    slope = float(stats.linregress(x, y).slope)
    order = int(math.floor(slope / 2 + 0.5))
    if order < 0 or abs(slope - 2 * order) > fit_policy.tol:
        raise BranchOrderError(
            f"log-log slope {slope:.3f} is not an even integer; "
            "the branch is not analytic at t0 or the resolution is too coarse")
    gamma = float(np.exp(np.mean(y - 2 * order * x)))
    return BranchFit(order=order, slope=slope, gamma=gamma, points=int(sel.sum()))


def _divisor_points_in(C: BundleComplex, i: int, region: np.ndarray, eps_rank: float) -> int:
    report = divisor_of_object(ExtObject(C.maps[i - 1]), DetectionPolicy(eps_rank=eps_rank))
    labels = divisor_clusters(report)
    return len(np.unique(labels[region & report.mask]))


def germ_analysis(C: BundleComplex, i: int, t0: float, epsilon: float,
                  eps_rank: float = DEFAULT_EPS_RANK,
                  strict: bool = True) -> Tuple[GermReport, Branches]:
    """Height and local capacity of the torsion of H^i at the divisor point t0.

    ``eps_rank`` locates the divisor; the local spectral density function
    keeps every singular value above round-off of the largest one at its
    cell.  A local capacity that misses the height raises
    ``CapacityMismatchError`` unless ``strict`` is off.
    """
    space = C.base
    if space.dim != 1:
        raise ValidationFailure("germ analysis needs a one-dimensional base")
    if not 1 <= i <= C.top:
        raise ValidationFailure(f"degree {i} out of range 1..{C.top}")
    if epsilon <= 0:
        raise ValidationFailure("epsilon must be positive")
    h = float(space.spacing[0])
    region = region_mask(space, [t0 - epsilon], [t0 + epsilon])

    points = _divisor_points_in(C, i, region, eps_rank)
    if points == 0:
        raise PreconditionFailure(f"t0 = {t0} is not in the divisor of H^{i}")
    if points > 1:
        raise MultipleDivisorPointsError(
            f"[{t0 - epsilon}, {t0 + epsilon}] contains {points} divisor points; shrink epsilon")

    d = C.maps[i - 1]
    if not (d.source.is_constant and d.target.is_constant):
        raise ShapeMismatchError("germ analysis needs constant fiber dimensions")
    cells = np.flatnonzero(region)
    sv = fiber_singular_values(d)[cells]
    k = d.source.max_dim
    eig = np.zeros((cells.size, k))
    eig[:, :sv.shape[1]] = np.nan_to_num(sv, nan=0.0) ** 2
    branches = match_branches(space.points[cells, 0], eig, eps_rank)

    floor = (64 * np.finfo(float).eps * max(d.sup_norm, 1.0)) ** 2
    policy = OrderFitPolicy(h=h, epsilon=epsilon, floor=floor)
    fits: List[BranchFit] = []
    for b in range(branches.count):
        if branches.zero[b]:
            continue
        fits.append(vanishing_order(branches.t, branches.values[:, b], t0, policy))
    orders = [fit.order for fit in fits]
    height = max(orders, default=0)
    if height == 0:
        raise PreconditionFailure(f"no eigenbranch of d*d vanishes at t0 = {t0}")

    nu = restrict_measure(space, region)
    _, F = cohomology_sdf(C, i, nu, ROUNDOFF_EPS_RANK, relative_cutoff=True)
    estimate = capacity(F, WindowPolicy.mass("power"))
    tolerance = max(CAPACITY_TOL, 2 * estimate.slope_stderr)
    matches = abs(estimate.capacity - height) <= tolerance
    if not matches:
        message = (f"local capacity {estimate.capacity:.3f} differs from germ height {height} "
                   f"at t0 = {t0:g} by more than {tolerance:.3g}")
        if strict:
            raise CapacityMismatchError(message)
        logger.warning(message)
    report = GermReport(
        t0=t0,
        epsilon=epsilon,
        branch_orders=orders,
        height=height,
        zero_branches=int(branches.zero.sum()),
        local_capacity=estimate,
        residuals=fits,
        capacity_matches_height=matches,
    )
    return report, branches


def germ_height(C: BundleComplex, i: int, t0: float, epsilon: float,
                eps_rank: float = DEFAULT_EPS_RANK, strict: bool = True) -> GermReport:
    return germ_analysis(C, i, t0, epsilon, eps_rank, strict)[0]
