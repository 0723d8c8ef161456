import math

import numpy as np
import pytest

from src.bundle import ROUNDOFF_EPS_RANK, BundleComplex, BundleMap
from src.errors import NotInjectiveError, ValidationFailure
from src.excat import ExtObject, direct_sum, excise
from src.measure import Factor, build_grid, region_mask, restrict_measure
from src.spectral import (
    StepFunction,
    WindowPolicy,
    capacity,
    cohomology_sdf,
    default_lambda_grid,
    dilatation_compare,
    laplacian_count_check,
    sdf_from_map,
)

LINE = build_grid([Factor("interval", lower=-1.0, upper=1.0)], 200_000)


def scalar(values) -> ExtObject:
    return ExtObject(BundleMap.from_scalar(LINE, values))


def test_step_function_from_samples():
    F = StepFunction.from_samples([0.1, 0.2, 0.2], [1.0, 1.0, 2.0])
    np.testing.assert_allclose(F.breakpoints, [0.1, 0.2])
    np.testing.assert_allclose(F([0.05, 0.1, 0.15, 1.0]), [0.0, 1.0, 1.0, 4.0])
    assert F.total == 4.0
    assert F.inverse(2.0) == pytest.approx(0.2)
    assert F.inverse(5.0) is None


def test_step_function_rejects_bad_breakpoints():
    with pytest.raises(ValidationFailure):
        StepFunction(np.array([0.2, 0.1]), np.array([1.0, 2.0]))
    with pytest.raises(ValidationFailure):
        StepFunction(np.array([0.1, 0.2]), np.array([2.0, 1.0]))


def test_step_function_sum():
    F = StepFunction.from_samples([0.1], [1.0])
    G = StepFunction.from_samples([0.2], [2.0])
    np.testing.assert_allclose((F + G)([0.15, 0.25]), [1.0, 3.0])
    assert (F + G).total == 3.0


def test_default_grid_spans_six_decades():
    grid = default_lambda_grid()
    assert grid[0] == pytest.approx(1e-6)
    assert grid[-1] == pytest.approx(1.0)
    assert grid.size == 1201


def test_sdf_of_constant_field():
    circle = build_grid([Factor("circle", 1.0)], 10)
    F = sdf_from_map(ExtObject(BundleMap.from_scalar(circle, np.full(10, 2.0))))
    assert F(1.9) == 0.0
    assert F(2.0) == pytest.approx(1.0)


def test_sdf_needs_injective_map():
    circle = build_grid([Factor("circle", 1.0)], 10)
    with pytest.raises(NotInjectiveError):
        sdf_from_map(ExtObject(BundleMap.from_scalar(circle, np.zeros(10))))


def test_sdf_of_restricted_measure():
    nu = restrict_measure(LINE, region_mask(LINE, [0.0], [1.0]))
    F = sdf_from_map(scalar(np.abs(LINE.coordinate(0))), nu)
    assert F(0.5) == pytest.approx(0.5, rel=1e-3)


@pytest.mark.parametrize("power,expected", [(1, 1.0), (2, 2.0), (3, 3.0)])
def test_capacity_of_powers(power, expected):
    F = sdf_from_map(scalar(np.abs(LINE.coordinate(0)) ** power), relative_cutoff=True)
    est = capacity(F, WindowPolicy.mass("power"))
    assert est.capacity == pytest.approx(expected, rel=0.05)
    assert est.r_squared > 0.99


def test_fixed_window_shifts_when_unresolved():
    # F(1e-4) = 2e-4 is below 100 cells of mass
    F = sdf_from_map(scalar(np.abs(LINE.coordinate(0))))
    est = capacity(F, WindowPolicy(model="power"))
    assert est.window_shifted
    assert est.fit_window[0] > 1e-4
    assert est.capacity == pytest.approx(1.0, rel=0.05)


def test_capacity_of_field_bounded_below_is_zero():
    F = sdf_from_map(scalar(np.ones(LINE.size)))
    est = capacity(F)
    assert est.capacity == 0.0
    assert est.ns_number == math.inf


def test_capacity_policy_errors():
    F = sdf_from_map(scalar(np.abs(LINE.coordinate(0))))
    with pytest.raises(ValidationFailure):
        capacity(F, WindowPolicy(model="cubic"))
    with pytest.raises(ValidationFailure):
        capacity(F, WindowPolicy(lo=1e-2, hi=1e-3))
    with pytest.raises(ValidationFailure):
        capacity(F, WindowPolicy(lo=0.1, hi=2.0, adaptive=False))


def test_dilatation_equivalent_with_constant():
    verdict = dilatation_compare(lambda lam: 3.0 * np.asarray(lam), lambda lam: np.asarray(lam))
    assert verdict.verdict == "equivalent"
    assert verdict.constant == 4.0


def test_dilatation_detects_log_factor():
    verdict = dilatation_compare(lambda lam: np.asarray(lam) * (1.0 - np.log(lam)),
                                 lambda lam: np.asarray(lam))
    assert verdict.verdict == "inequivalent"


def test_dilatation_detects_different_exponent():
    verdict = dilatation_compare(lambda lam: np.sqrt(lam), lambda lam: np.asarray(lam))
    assert verdict.verdict == "inequivalent"


def test_dilatation_window_must_be_ordered():
    with pytest.raises(ValidationFailure):
        dilatation_compare(np.sqrt, np.sqrt, window=(1e-2, 1e-4))


def test_cohomology_sdf_of_scalar_complex():
    line = build_grid([Factor("interval", lower=-1.0, upper=1.0)], 2000)
    C = BundleComplex.from_maps([BundleMap.from_scalar(line, line.coordinate(0))])
    proj_dim, F = cohomology_sdf(C, 1)
    assert proj_dim == 0.0
    assert F(0.1) == pytest.approx(0.2, abs=2e-3)
    proj_dim, F = cohomology_sdf(C, 0)
    assert F.total == 0.0


def test_laplacian_counting_identity():
    line = build_grid([Factor("interval", lower=-1.0, upper=1.0)], 2000)
    d0 = np.stack([line.coordinate(0), np.ones(line.size)], axis=1)[:, :, None]
    C = BundleComplex.from_maps([BundleMap.from_blocks(line, d0)])
    for lam in (1e-3, 0.01, 0.5, 1.5, 4.0):
        for i in (0, 1):
            check = laplacian_count_check(C, i, lam)
            assert check.residual == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValidationFailure):
        laplacian_count_check(C, 0, -1.0)


def test_laplacian_counting_identity_at_zero():
    # constant rank-1 projector conjugated by a rotation: the harmonic
    # eigenvalues come out as round-off rather than exact zeros
    line = build_grid([Factor("interval")], 8)
    angle = 0.7
    q = np.array([[np.cos(angle), -np.sin(angle), 0.0],
                  [np.sin(angle), np.cos(angle), 0.0],
                  [0.0, 0.0, 1.0]])
    q = q @ np.array([[1.0, 0.0, 0.0],
                      [0.0, np.cos(angle), -np.sin(angle)],
                      [0.0, np.sin(angle), np.cos(angle)]])
    d0 = q @ np.diag([1.0, 0.0, 0.0]) @ q.T
    C = BundleComplex.from_maps([BundleMap.from_constant(line, d0)])
    for lam in (0.0, 1e-12):
        for i in (0, 1):
            check = laplacian_count_check(C, i, lam)
            assert check.harmonic == pytest.approx(2.0)
            assert check.residual == pytest.approx(0.0, abs=1e-12)


def test_capacity_of_direct_sum_is_the_maximum():
    x = np.abs(LINE.coordinate(0))
    first, third = scalar(x), scalar(x ** 3)
    policy = WindowPolicy.mass("power")

    def cap(X):
        return capacity(sdf_from_map(X, eps_rank=ROUNDOFF_EPS_RANK, relative_cutoff=True),
                        policy).capacity

    assert cap(direct_sum(first, third)) == pytest.approx(3.0, rel=0.05)
    assert cap(direct_sum(first, first)) == pytest.approx(cap(first), rel=0.01)


def test_conjugation_by_invertible_fields_keeps_the_sdf_class():
    x = LINE.coordinate(0)
    alpha = np.zeros((LINE.size, 2, 2), dtype=complex)
    alpha[:, 0, 0] = np.abs(x)
    alpha[:, 1, 1] = 1.0
    left = np.zeros_like(alpha)
    left[:, 0, 0], left[:, 0, 1], left[:, 1, 1] = 2.0, np.sin(x), 1.0
    right_inv = np.zeros_like(alpha)
    right_inv[:, 0, 0], right_inv[:, 0, 1], right_inv[:, 1, 1] = 1.0, -x, 1.0
    X = ExtObject(BundleMap.from_blocks(LINE, alpha))
    Y = ExtObject(BundleMap.from_blocks(LINE, left @ alpha @ right_inv))
    F, G = sdf_from_map(X), sdf_from_map(Y)
    assert dilatation_compare(F, G).verdict == "equivalent"
    policy = WindowPolicy.mass("power")
    assert capacity(G, policy).capacity == pytest.approx(capacity(F, policy).capacity, rel=0.05)


def test_excision_keeps_the_sdf_below_the_cut():
    line = build_grid([Factor("interval", lower=-1.0, upper=1.0)], 2000)
    angle = 0.4
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    diag = np.zeros((line.size, 2, 2))
    diag[:, 0, 0] = np.abs(line.coordinate(0))
    diag[:, 1, 1] = 2.0
    X = ExtObject(BundleMap.from_blocks(line, rotation @ diag))
    # excising e_2 removes the singular value 2, so lambda_cut = 1
    excised = excise(X, BundleMap.from_constant(line, [[0.0], [1.0]]))
    grid = np.logspace(-4, 0, 81)
    np.testing.assert_allclose(sdf_from_map(excised)(grid), sdf_from_map(X)(grid), atol=1e-12)
    assert sdf_from_map(X)(3.0) == pytest.approx(sdf_from_map(excised)(3.0) + 2.0)


def test_split_complex_projective_dimension_under_a_restricted_measure():
    line = build_grid([Factor("interval", lower=-1.0, upper=1.0)], 2000)
    d0 = np.zeros((line.size, 3, 1))
    d0[:, 0, 0] = line.coordinate(0)
    C = BundleComplex.from_maps([BundleMap.from_blocks(line, d0)])
    proj_dim, F = cohomology_sdf(C, 1)
    assert proj_dim == pytest.approx(4.0)
    nu = restrict_measure(line, region_mask(line, [0.0], [1.0]))
    proj_dim, F = cohomology_sdf(C, 1, nu)
    assert proj_dim == pytest.approx(2.0, abs=3e-3)
    assert F(0.1) == pytest.approx(0.1, abs=2e-3)
