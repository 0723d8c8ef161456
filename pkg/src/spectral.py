"""Spectral density functions and their small-lambda exponents.

F(lambda) is the nu-weighted count of singular values <= lambda of an
injective structure map (equivalently eigenvalues of alpha* alpha below
lambda^2).  Singular values at or below eps_rank * (largest + 1) belong to the
kernel and are never counted, so F(0) = 0.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.bundle import (
    BundleComplex,
    betti_field,
    eigen_zero_floor,
    fiber_eigenvalues,
    fiber_singular_values,
    laplacian,
    require_complex,
)
from src.errors import InsufficientDataError, NotInjectiveError, ValidationFailure
from src.excat import ExtObject, extended_cohomology
from src.measure import DensityMeasure
from src.schemas import CapacityEstimate, DilatationVerdict, LaplacianCount
from src.settings import DEFAULT_EPS_RANK

logger = logging.getLogger(__name__)

DEFAULT_KERNEL_BUDGET = 1e-3


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous nondecreasing step function, zero below the first breakpoint."""
    breakpoints: np.ndarray
    values: np.ndarray
    total: Optional[float] = None
    quantum: Optional[float] = None

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.shape != vals.shape or bp.ndim != 1:
            raise ValidationFailure("breakpoints and values must be matching 1-d arrays")
        if bp.size:
            if bp[0] <= 0 or np.any(np.diff(bp) <= 0):
                raise ValidationFailure("breakpoints must be positive and strictly ascending")
            if vals[0] < 0 or np.any(np.diff(vals) < 0):
                raise ValidationFailure("values must be nonnegative and nondecreasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if self.total is None:
            object.__setattr__(self, "total", float(vals[-1]) if vals.size else 0.0)

    @classmethod
    def empty(cls) -> "StepFunction":
        return cls(np.zeros(0), np.zeros(0), total=0.0)

    @classmethod
    def from_samples(cls, levels: np.ndarray, weights: np.ndarray,
                     quantum: Optional[float] = None) -> "StepFunction":
        """F(lambda) = sum of weights whose level is <= lambda."""
        levels = np.asarray(levels, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        keep = weights > 0
        levels, weights = levels[keep], weights[keep]
        if levels.size == 0:
            return cls(np.zeros(0), np.zeros(0), total=0.0, quantum=quantum)
        order = np.argsort(levels, kind="stable")
        levels = levels[order]
        cumulative = np.cumsum(weights[order])
        last = np.r_[levels[1:] != levels[:-1], True]
        return cls(levels[last], cumulative[last], total=float(cumulative[-1]), quantum=quantum)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        idx = np.searchsorted(self.breakpoints, lam, side="right")
        padded = np.r_[0.0, self.values]
        return padded[idx]

    @property
    def sup(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    def inverse(self, level: float) -> Optional[float]:
        """Smallest breakpoint where F reaches ``level`` (None if it never does)."""
        idx = int(np.searchsorted(self.values, level, side="left"))
        if idx >= self.values.size:
            return None
        return float(self.breakpoints[idx])

    def on_grid(self, grid: Sequence[float]) -> "StepFunction":
        """The step function sampled (right-continuously) on a positive ascending grid."""
        grid = np.asarray(grid, dtype=float)
        return StepFunction(grid, self(grid), total=self.total, quantum=self.quantum)

    def __add__(self, other: "StepFunction") -> "StepFunction":
        grid = np.union1d(self.breakpoints, other.breakpoints)
        quanta = [q for q in (self.quantum, other.quantum) if q]
        return StepFunction(grid, self(grid) + other(grid), total=self.total + other.total,
                            quantum=min(quanta) if quanta else None)


def default_lambda_grid(lo: float = 1e-6, hi: float = 1.0, per_decade: int = 200) -> np.ndarray:
    decades = math.log10(hi / lo)
    return np.logspace(math.log10(lo), math.log10(hi), int(round(decades * per_decade)) + 1)


def _sdf_from_singular_values(sv: np.ndarray, source_dims: np.ndarray, nu: DensityMeasure,
                              eps_rank: float, kernel_budget: float,
                              relative_cutoff: bool = False) -> StepFunction:
    weights = nu.weights
    top = np.nan_to_num(sv[:, 0], nan=0.0) if sv.shape[1] else np.zeros(len(weights))
    offset = 0.0 if relative_cutoff else 1.0
    with np.errstate(invalid="ignore"):
        counted = sv > (eps_rank * (top + offset))[:, None]
    kernel = source_dims - counted.sum(axis=1)
    kernel_mass = float(np.sum(kernel * weights))
    if kernel_mass > kernel_budget * max(nu.total, 0.0):
        raise NotInjectiveError(
            f"structure map has a kernel of nu-mass {kernel_mass:.3g}; "
            "excise the kernel first (injective representative)")
    positive = weights[weights > 0]
    quantum = float(positive.min()) if positive.size else None
    cell_weights = np.broadcast_to(weights[:, None], sv.shape)
    return StepFunction.from_samples(sv[counted], cell_weights[counted], quantum=quantum)


def sdf_from_map(X: ExtObject, nu: Optional[DensityMeasure] = None,
                 lambda_grid: Optional[Sequence[float]] = None,
                 eps_rank: float = DEFAULT_EPS_RANK,
                 kernel_budget: float = DEFAULT_KERNEL_BUDGET,
                 relative_cutoff: bool = False) -> StepFunction:
    """Spectral density function of an injective representative.

    Without ``lambda_grid`` the exact step function is returned (one breakpoint
    per distinct singular value); with a grid it is sampled on that grid.
    """
    nu = nu or DensityMeasure.uniform(X.base)
    sv = fiber_singular_values(X.alpha)
    F = _sdf_from_singular_values(sv, X.source.dims, nu, eps_rank, kernel_budget, relative_cutoff)
    return F if lambda_grid is None else F.on_grid(lambda_grid)


@dataclass(frozen=True)
class WindowPolicy:
    """Where and how to fit log F against log lambda.

    ``lo``/``hi`` set a fixed window (adaptively shifted when F is not resolved
    by ``min_cells`` cells at ``lo``); leaving both unset picks the window from
    the mass of F: from ``min_cells`` cells up to ``max_fraction`` of F's plateau.
    """
    lo: Optional[float] = 1e-4
    hi: Optional[float] = 1e-2
    per_decade: int = 200
    min_points: int = 8
    min_cells: int = 100
    max_fraction: float = 0.1
    hi_cap: float = 0.5
    model: str = "log_corrected"
    adaptive: bool = True
    subwindow_decades: float = 0.5

    @classmethod
    def mass(cls, model: str = "power", **kwargs) -> "WindowPolicy":
        return cls(lo=None, hi=None, model=model, **kwargs)


def _zero_capacity(lo: float, hi: float, model: str) -> CapacityEstimate:
    return CapacityEstimate(capacity=0.0, ns_number=math.inf, fit_window=(lo, hi),
                            slope_stderr=0.0, r_squared=math.nan, model=model)


def _select_window(F: StepFunction, policy: WindowPolicy) -> Tuple[float, float, bool]:
    quantum = F.quantum or (float(np.min(np.diff(np.r_[0.0, F.values]))) if F.values.size else 0.0)
    floor = policy.min_cells * quantum
    ceiling = policy.max_fraction * F.total
    if policy.lo is None or policy.hi is None:
        lo, hi = F.inverse(floor), F.inverse(ceiling)
        if lo is None or hi is None:
            raise InsufficientDataError("spectral density function has too little mass to fit")
        return lo, hi, False

    lo, hi = float(policy.lo), float(policy.hi)
    shifted = False
    if policy.adaptive:
        if F(lo) < floor:
            new_lo = F.inverse(floor)
            if new_lo is None:
                raise InsufficientDataError("spectral density function has too little mass to fit")
            logger.info("capacity window shifted from %.3g to %.3g (F unresolved below)", lo, new_lo)
            lo, hi, shifted = new_lo, max(hi, new_lo * 100), True
        cap = F.inverse(ceiling)
        hi = min(h for h in (hi, cap, policy.hi_cap) if h is not None)
    return lo, hi, shifted


def _fit_log_corrected(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """log F = c + s log(lambda) + kappa log(-log lambda); returns (s, stderr, r^2)."""
    design = np.column_stack([np.ones_like(x), x, np.log(-x)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    dof = max(len(x) - 3, 1)
    cov = rss / dof * np.linalg.pinv(design.T @ design)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))), r2


def capacity(F: StepFunction, window_policy: Optional[WindowPolicy] = None) -> CapacityEstimate:
    """Novikov-Shubin slope of F near zero and its reciprocal, the capacity."""
    policy = window_policy or WindowPolicy()
    if policy.model not in ("log_corrected", "power"):
        raise ValidationFailure(f"unknown capacity model '{policy.model}'")
    if policy.lo is not None and policy.hi is not None:
        if not 0 < policy.lo < policy.hi:
            raise ValidationFailure("capacity window needs 0 < lo < hi")
        if F(policy.hi) == 0:
            return _zero_capacity(policy.lo, policy.hi, policy.model)
    elif F.sup == 0:
        return _zero_capacity(0.0, 0.0, policy.model)

    lo, hi, shifted = _select_window(F, policy)
    if not hi > lo:
        raise InsufficientDataError(f"empty capacity window [{lo:.3g}, {hi:.3g}]")
    if policy.model == "log_corrected" and hi >= 1.0:
        raise ValidationFailure("the log-corrected model needs the window below lambda = 1")

    count = max(int(math.ceil(math.log10(hi / lo) * policy.per_decade)) + 1, policy.min_points)
    grid = np.logspace(math.log10(lo), math.log10(hi), count)
    values = F(grid)
    usable = values > 0
    if int(usable.sum()) < policy.min_points:
        raise InsufficientDataError(
            f"only {int(usable.sum())} usable points in [{lo:.3g}, {hi:.3g}]; "
            f"need {policy.min_points}")
    x, y = np.log(grid[usable]), np.log(values[usable])

    power = stats.linregress(x, y)
    if policy.model == "power":
        slope, stderr, r2 = float(power.slope), float(power.stderr), float(power.rvalue ** 2)
    else:
        slope, stderr, r2 = _fit_log_corrected(x, y)

    # liminf: smallest slope over sliding sub-windows
    sub_slopes = []
    width = policy.subwindow_decades * math.log(10)
    start = x[0]
    while start + width <= x[-1] + 1e-12:
        sel = (x >= start) & (x <= start + width)
        if sel.sum() >= policy.min_points:
            sub_slopes.append(float(stats.linregress(x[sel], y[sel]).slope))
        start += width / 2
    liminf = min(sub_slopes) if sub_slopes else None

    return CapacityEstimate(
        capacity=1.0 / slope if slope > 0 else math.inf,
        ns_number=slope,
        fit_window=(lo, hi),
        slope_stderr=stderr,
        r_squared=r2,
        model=policy.model,
        points=int(usable.sum()),
        power_slope=float(power.slope),
        liminf_slope=liminf,
        capacity_liminf=(1.0 / liminf if liminf and liminf > 0 else None),
        window_shifted=shifted,
    )


def dilatation_compare(F: Callable, G: Callable, window: Tuple[float, float] = (1e-4, 1e-2),
                       per_decade: int = 50, max_log2: int = 10, sub_windows: int = 4,
                       rise_ratio: float = 1.25) -> DilatationVerdict:
    """Look for C with G(lambda/C) <= F(lambda) <= G(C lambda) across the window.

    A required constant that keeps growing as lambda decreases (or cannot be
    met at all) is reported as inequivalent, with the offending lambdas.
    """
    lo, hi = window
    if not 0 < lo < hi:
        raise ValidationFailure("dilatation window needs 0 < lo < hi")
    count = max(int(math.ceil(math.log10(hi / lo) * per_decade)) + 1, 2 * sub_windows)
    grid = np.logspace(math.log10(lo), math.log10(hi), count)
    constants = 2.0 ** (np.arange(0, 8 * max_log2 + 1) / 8.0)

    f = np.asarray(F(grid), dtype=float)
    lower = np.asarray(G(grid[None, :] / constants[:, None]), dtype=float)
    upper = np.asarray(G(grid[None, :] * constants[:, None]), dtype=float)
    slack = 1e-12 * np.maximum(np.abs(f), 1e-300)
    ok = (lower <= f + slack) & (f <= upper + slack)
    # smallest C from which every larger C also works
    stays_ok = np.flip(np.logical_and.accumulate(np.flip(ok, axis=0), axis=0), axis=0)
    reachable = stays_ok.any(axis=0)
    required = np.where(reachable, constants[np.argmax(stays_ok, axis=0)], np.inf)

    if not reachable.all():
        witness = grid[~reachable]
        return DilatationVerdict(verdict="inequivalent", required=[math.inf],
                                 witness=[float(v) for v in witness[:10]])

    chunks = np.array_split(np.arange(count), sub_windows)
    maxima = [float(required[c].max()) for c in chunks]
    rising = all(a >= b for a, b in zip(maxima, maxima[1:])) and maxima[0] >= rise_ratio * maxima[-1]
    if rising:
        witness = [float(grid[c][int(np.argmax(required[c]))]) for c in chunks]
        return DilatationVerdict(verdict="inequivalent", required=maxima, witness=witness)

    c_star = max(maxima)
    exponent = math.ceil(math.log2(c_star) - 1e-12)
    if exponent > max_log2:
        return DilatationVerdict(verdict="inconclusive", required=maxima)
    return DilatationVerdict(verdict="equivalent", constant=float(2.0 ** exponent), required=maxima)


def cohomology_sdf(C: BundleComplex, i: int, nu: Optional[DensityMeasure] = None,
                   eps_rank: float = DEFAULT_EPS_RANK,
                   lambda_grid: Optional[Sequence[float]] = None,
                   tol_complex: float = 1e-9,
                   kernel_budget: float = math.inf,
                   relative_cutoff: bool = False) -> Tuple[float, StepFunction]:
    """(projective dimension, torsion SDF) of H^i.

    G(lambda) counts eigenvalues of d*d on C^{i-1} below lambda; the torsion
    SDF is F(lambda) = G(lambda^2) - G(0), i.e. the nonzero singular values of
    d^{i-1} below lambda.  With ``relative_cutoff`` a singular value is zero
    only below eps_rank times the largest one at its cell, so high-order
    zeros of d keep their small singular values.
    """
    coh = extended_cohomology(C, eps_rank, tol_complex)
    degree = coh[i]
    nu = nu or DensityMeasure.uniform(C.base)
    proj_dim = float(np.sum(np.where(degree.generic_mask, coh.betti[i], 0) * nu.weights))
    if i == 0:
        return proj_dim, StepFunction.empty()
    F = _sdf_from_singular_values(degree.singular_values, C.fields[i - 1].dims, nu,
                                  eps_rank, kernel_budget, relative_cutoff)
    return proj_dim, F if lambda_grid is None else F.on_grid(lambda_grid)


def _differential_sdf(C: BundleComplex, j: int, nu: DensityMeasure,
                      eps_rank: float) -> StepFunction:
    if j < 0 or j >= len(C.maps):
        return StepFunction.empty()
    return _sdf_from_singular_values(fiber_singular_values(C.maps[j]), C.fields[j].dims,
                                     nu, eps_rank, math.inf)


def laplacian_count_check(C: BundleComplex, i: int, lam: float,
                          nu: Optional[DensityMeasure] = None,
                          eps_rank: float = DEFAULT_EPS_RANK) -> LaplacianCount:
    """tr_nu chi_[0, lam](Delta^i) - [harmonic mass + F^i(sqrt lam) + F^{i+1}(sqrt lam)]."""
    require_complex(C)
    if lam < 0:
        raise ValidationFailure("lambda must be nonnegative")
    nu = nu or DensityMeasure.uniform(C.base)
    eig = fiber_eigenvalues(laplacian(C, i))
    # harmonic eigenvalues come out as round-off, not exact zeros
    level = lam + eigen_zero_floor(eig, eps_rank)
    with np.errstate(invalid="ignore"):
        counts = np.sum(eig <= level[:, None], axis=1)
    lhs = float(np.sum(counts * nu.weights))
    harmonic = float(np.sum(betti_field(C, eps_rank)[i] * nu.weights))
    root = math.sqrt(lam)
    f_degree = float(_differential_sdf(C, i - 1, nu, eps_rank)(root))
    f_next = float(_differential_sdf(C, i, nu, eps_rank)(root))
    return LaplacianCount(degree=i, lam=lam, lhs=lhs, harmonic=harmonic, f_degree=f_degree,
                          f_next=f_next, residual=lhs - (harmonic + f_degree + f_next))
