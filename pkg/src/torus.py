"""Extended cohomology of mapping tori with abelian coefficients.

The coefficient module is L^2(Z) with the deck transformation acting by
multiplication with a bounded, boundedly invertible function tau.  Degree i
of the mapping torus is then the object (tau I - phi*: E -> E) over Z, with E
the trivial field of rank b_{i-1} carrying the induced map phi* on H_{i-1}(Y).
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional

import numpy as np
from scipy import linalg

from src.bundle import BundleMap, numeric_rank, vn_dimension, zero_map
from src.divisor import DetectionPolicy, divisor_of_map
from src.errors import DiscreteSpectrumError, InsufficientDataError, ShapeMismatchError, ValidationFailure
from src.excat import (
    ExtMorphism,
    ExtObject,
    injective_representative,
    is_zero,
    kernel,
    projective_part,
)
from src.measure import SampleSpace, vanishing_mask
from src.schemas import TorusDegreeReport
from src.settings import DEFAULT_EPS_RANK
from src.spectral import WindowPolicy, capacity, sdf_from_map

logger = logging.getLogger(__name__)

CLUSTER_TOL = 1e-8
LEVEL_SET_CELLS = 2


def cluster_eigenvalues(values: np.ndarray, tol: float = CLUSTER_TOL) -> List[complex]:
    """Distinct eigenvalues, merging those closer than tol * (1 + |c|)."""
    distinct: List[complex] = []
    for c in sorted(np.asarray(values, dtype=complex), key=lambda z: (z.real, z.imag)):
        if not any(abs(c - d) <= tol * (1.0 + abs(d)) for d in distinct):
            distinct.append(complex(c))
    return distinct


@dataclass(frozen=True, eq=False)
class MappingTorusSpec:
    space: SampleSpace
    tau: np.ndarray
    phi_star: Dict[int, np.ndarray]
    bound: float = 10.0
    eps_rank: float = field(default=DEFAULT_EPS_RANK, repr=False)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.complex128).ravel()
        if tau.shape != (self.space.size,):
            raise ShapeMismatchError("tau needs one value per cell")
        if not np.all(np.isfinite(tau)):
            raise ValidationFailure("tau has non-finite values")
        modulus = np.abs(tau)
        if modulus.max(initial=0.0) > self.bound or np.any(modulus * self.bound < 1.0):
            raise ValidationFailure(
                f"tau and 1/tau must stay bounded by {self.bound} (tau, tau^-1 in L^infinity)")
        phis = {}
        for degree, matrix in self.phi_star.items():
            a = np.atleast_2d(np.asarray(matrix, dtype=np.complex128))
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ShapeMismatchError(f"phi* in degree {degree} must be square")
            if numeric_rank(a, self.eps_rank) < a.shape[0]:
                raise ValidationFailure(
                    f"phi* in degree {degree} is singular; phi must be a homeomorphism")
            phis[int(degree)] = a
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "phi_star", phis)

    @property
    def coefficient_dims(self) -> Dict[int, int]:
        return {d: a.shape[0] for d, a in self.phi_star.items()}

    @cached_property
    def _spectra(self) -> Dict[int, List[complex]]:
        return {d: cluster_eigenvalues(linalg.eigvals(a)) if a.size else []
                for d, a in self.phi_star.items()}

    def spectrum(self, degree: int) -> List[complex]:
        """Eigenvalues of phi* on H_degree(Y), clustered."""
        return self._spectra.get(degree, [])


def build_torus_operator(spec: MappingTorusSpec, i: int) -> BundleMap:
    """T(xi) = tau(xi) I - phi*_{i-1} on the b_{i-1}-dimensional fiber."""
    if i - 1 not in spec.phi_star:
        raise ValidationFailure(f"no induced map phi* given in degree {i - 1}")
    phi = spec.phi_star[i - 1]
    n = phi.shape[0]
    blocks = spec.tau[:, None, None] * np.eye(n)[None] - phi[None]
    return BundleMap.from_blocks(spec.space, blocks)


def level_set_measures(spec: MappingTorusSpec, degree: int) -> Dict[complex, float]:
    """mu{xi : tau(xi) = c} for every eigenvalue c of phi* in the degree."""
    out = {}
    for c in spec.spectrum(degree):
        on_level = np.abs(spec.tau - c) <= CLUSTER_TOL * (1.0 + abs(c))
        out[c] = float(np.sum(spec.space.weights[on_level]))
    return out


def check_discrete_spectrum(spec: MappingTorusSpec, degree: int,
                            budget_cells: int = LEVEL_SET_CELLS) -> None:
    budget = budget_cells * float(spec.space.weights.max(initial=0.0))
    for c, mass in level_set_measures(spec, degree).items():
        if mass > budget:
            raise DiscreteSpectrumError(
                f"level set tau = {c.real:.6g}{c.imag:+.6g}i has measure {mass:.3g} > {budget:.3g}; "
                "tau must have no discrete spectrum (all level sets of measure zero)")


def torus_cohomology(spec: MappingTorusSpec, i: int,
                     budget_cells: int = LEVEL_SET_CELLS) -> ExtObject:
    """H^i(K, M) = (tau I - phi*_{i-1}: E -> E)."""
    T = build_torus_operator(spec, i)
    check_discrete_spectrum(spec, i - 1, budget_cells)
    return ExtObject(T)


def eigenvalues_hit(spec: MappingTorusSpec, degree: int, c_grid: float = 1.0) -> List[complex]:
    """Eigenvalues of phi* reached by tau(Z), up to one cell of variation."""
    hit = []
    for c in spec.spectrum(degree):
        dist = np.abs(spec.tau - c)
        floor = spec.eps_rank * (1.0 + abs(c))
        if np.any(vanishing_mask(spec.space, dist, floor, c_grid)):
            hit.append(c)
    return hit


def hom_dimension(spec: MappingTorusSpec, degree: int, eps_rank: float = DEFAULT_EPS_RANK) -> float:
    """vN dimension of Hom(H_degree(Y), M): the kernel of tau - phi* between projectives."""
    if degree not in spec.phi_star:
        return 0.0
    T = build_torus_operator(spec, degree + 1)
    E = ExtObject.projective(T.source)
    ker = kernel(ExtMorphism(E, E, T, zero_map(E.source, E.source)), eps_rank).object
    return vn_dimension(projective_part(ker, eps_rank))


def long_exact_sequence(i: int) -> List[str]:
    """The mapping-torus sequences around degree i, objects named only."""
    return [
        f"... -> H^{i - 1}(Y;M) -> H^{i}(K;M) -> H^{i}(Y;M) "
        f"-(id - tau^-1 phi^*)-> H^{i}(Y;M) -> H^{i + 1}(K;M) -> ...",
        f"0 -> Ext_C[tau,tau^-1](H_{i - 1}(Y), M) -> H^{i}(K;M) "
        f"-> Hom_C[tau,tau^-1](H_{i}(Y), M) -> 0",
        f"H^{i}(K;M) = (1 (x) tau - phi^* (x) 1 : H^{i - 1}(Y) (x) M -> H^{i - 1}(Y) (x) M)",
    ]


def _pair(c: complex) -> List[float]:
    return [float(c.real), float(c.imag)]


def torus_sequence_report(spec: MappingTorusSpec, i: int,
                          eps_rank: float = DEFAULT_EPS_RANK,
                          window_policy: Optional[WindowPolicy] = None,
                          detection_policy: Optional[DetectionPolicy] = None) -> TorusDegreeReport:
    """Hom and Ext parts of H^i(K, M) with the eigenvalues that tau reaches."""
    X = torus_cohomology(spec, i)
    detection = detection_policy or DetectionPolicy(eps_rank=eps_rank)
    hom = hom_dimension(spec, i, eps_rank)
    if hom > 0:
        logger.warning("Hom part in degree %d has dimension %.3g despite no discrete spectrum", i, hom)

    zero = is_zero(X, eps_rank, detection.c_grid)
    estimate = None
    if not zero:
        try:
            F = sdf_from_map(injective_representative(X, eps_rank), eps_rank=eps_rank)
            estimate = capacity(F, window_policy or WindowPolicy.mass("power"))
        except InsufficientDataError as e:
            logger.info("degree %d: no capacity estimate (%s)", i, e.detail)
    divisor = divisor_of_map(X.alpha, detection)

    return TorusDegreeReport(
        degree=i,
        eigenvalues=[_pair(c) for c in spec.spectrum(i - 1)],
        eigenvalues_hit=[_pair(c) for c in eigenvalues_hit(spec, i - 1, detection.c_grid)],
        hom_vn_dimension=hom,
        ext_is_zero=zero,
        ext_capacity=estimate,
        divisor_cells=int(divisor.mask.sum()),
        divisor_measure=divisor.flagged_measure,
        long_exact_sequence=long_exact_sequence(i),
    )