import numpy as np
import pytest

from src.bundle import BundleComplex, BundleMap, FiberField, zero_map
from src.errors import NotTorsionError, ShapeMismatchError, ValidationFailure
from src.excat import (
    ExtMorphism,
    ExtObject,
    cokernel,
    direct_sum,
    dual,
    excise,
    extended_cohomology,
    generic_corank,
    generic_rank,
    identity_morphism,
    injective_representative,
    is_torsion,
    is_zero,
    kernel,
    kernel_frames,
    projective_part,
    torsion_part,
    zero_morphism,
)
from src.measure import Factor, build_grid

LINE = build_grid([Factor("interval", lower=-1.5, upper=1.5)], 3)
CIRCLE = build_grid([Factor("circle", 1.0)], 50)


def quotient_dims(X: ExtObject) -> list:
    """dim A - rank alpha per cell."""
    return [int(X.target.dims[j]) - (np.linalg.matrix_rank(X.alpha.block(j)) if X.alpha.block(j).size else 0)
            for j in range(X.base.size)]


def test_zero_objects():
    assert is_zero(ExtObject(BundleMap.from_constant(CIRCLE, [[2.0, 0.0], [1.0, 3.0]])))
    assert is_zero(ExtObject.zero(FiberField.constant(CIRCLE, 2)))
    # x vanishes at the middle sample
    assert not is_zero(ExtObject(BundleMap.from_scalar(LINE, LINE.coordinate(0))))
    assert not is_zero(ExtObject.projective(FiberField.constant(LINE, 1)))


def test_zero_between_samples_is_seen():
    # |x - 0.5| never hits zero at a cell center but does inside a cell
    values = CIRCLE.coordinate(0) - 0.5
    assert np.all(np.abs(values) > 1e-3)
    assert not is_zero(ExtObject(BundleMap.from_scalar(CIRCLE, values)))


def test_torsion_and_generic_ranks():
    X = ExtObject(BundleMap.from_scalar(LINE, LINE.coordinate(0)))
    assert is_torsion(X, budget_cells=1)
    assert not is_torsion(X)
    P = ExtObject.projective(FiberField.constant(LINE, 2))
    assert not is_torsion(P)
    assert generic_rank(X) == 1
    assert generic_corank(P) == 2
    assert projective_part(P).dims.tolist() == [2, 2, 2]
    assert projective_part(X).dims.tolist() == [0, 0, 0]


def test_intertwining_is_checked():
    X = ExtObject(BundleMap.from_constant(LINE, [[1.0]]))
    one = BundleMap.from_constant(LINE, [[1.0]])
    with pytest.raises(ValidationFailure):
        ExtMorphism(X, X, one, BundleMap.from_constant(LINE, [[2.0]]))
    with pytest.raises(ShapeMismatchError):
        ExtMorphism(X, X, BundleMap.from_constant(LINE, np.ones((2, 1))), one)


def test_kernel_of_identity_is_zero():
    X = ExtObject(BundleMap.from_constant(LINE, [[1.0, 0.0], [0.0, 0.0]]))
    K = kernel(identity_morphism(X))
    assert quotient_dims(K.object) == [0, 0, 0]
    assert K.stable


def test_kernel_and_cokernel_of_zero_morphism():
    A = ExtObject.projective(FiberField.constant(LINE, 2))
    B = ExtObject.projective(FiberField.constant(LINE, 3))
    m = zero_morphism(A, B)
    assert quotient_dims(kernel(m).object) == [2, 2, 2]
    assert quotient_dims(cokernel(m)) == [3, 3, 3]


def test_kernel_of_projection():
    A = ExtObject.projective(FiberField.constant(LINE, 2))
    B = ExtObject.projective(FiberField.constant(LINE, 1))
    f = BundleMap.from_constant(LINE, [[1.0, 0.0]])
    m = ExtMorphism(A, B, f, zero_map(A.source, B.source))
    assert quotient_dims(kernel(m).object) == [1, 1, 1]
    assert quotient_dims(cokernel(m)) == [0, 0, 0]


def test_injective_representative_keeps_the_quotient():
    X = ExtObject(BundleMap.from_constant(LINE, [[1.0, 1.0], [0.0, 0.0]]))
    Y = injective_representative(X)
    assert Y.source.dims.tolist() == [1, 1, 1]
    assert quotient_dims(Y) == quotient_dims(X) == [1, 1, 1]
    injective = ExtObject(BundleMap.from_constant(LINE, [[1.0]]))
    assert injective_representative(injective) is injective


def test_excise_needs_frames_inside_source():
    X = ExtObject(BundleMap.from_constant(LINE, [[1.0, 1.0]]))
    frames = kernel_frames(X)
    assert frames.source.dims.tolist() == [1, 1, 1]
    assert excise(X, frames).source.dims.tolist() == [1, 1, 1]
    with pytest.raises(ShapeMismatchError):
        excise(X, BundleMap.from_constant(LINE, [[1.0]]))


def test_torsion_part_drops_the_projective_summand():
    X = ExtObject(BundleMap.from_constant(CIRCLE, [[2.0], [0.0]]))
    T = torsion_part(X)
    assert T.target.dims[0] == 1
    assert is_torsion(T)


def test_dual_and_direct_sum():
    X = ExtObject(BundleMap.from_constant(CIRCLE, [[2.0, 1.0], [0.0, 3.0]]))
    D = dual(X)
    np.testing.assert_allclose(D.alpha.block(0), X.alpha.block(0).conj().T)
    with pytest.raises(NotTorsionError):
        dual(ExtObject.projective(FiberField.constant(CIRCLE, 1)))
    other = ExtObject(BundleMap.from_constant(LINE, [[1.0]]))
    with pytest.raises(ShapeMismatchError):
        direct_sum(X, other)
    assert direct_sum(X, X).target.dims[0] == 4


def test_extended_cohomology_of_scalar_complex():
    C = BundleComplex.from_maps([BundleMap.from_scalar(LINE, LINE.coordinate(0))])
    coh = extended_cohomology(C)
    assert coh.generic_betti == [0, 0]
    assert coh.torsion_in_all_degrees()
    # one cell of volume 1 carries the jump in each degree
    assert coh[0].betti_integral == pytest.approx(1.0)
    assert coh[1].betti_integral == pytest.approx(1.0)
    assert coh[1].proj_dim == 0.0


def test_projective_dimension_skips_a_resolved_jump():
    space = build_grid([Factor("interval")], 4)
    C = BundleComplex.from_maps([BundleMap.from_scalar(space, [1.0, 1.0, 1.0, 0.0])])
    coh = extended_cohomology(C)
    for degree in coh.degrees:
        assert degree.generic_betti == 0
        assert degree.proj_dim == 0.0
        assert degree.betti_integral == pytest.approx(0.25)
        assert degree.exceptional_mass == pytest.approx(0.25)
        assert degree.generic_mask.tolist() == [True, True, True, False]


def test_projective_dimension_integrates_the_generic_stratum():
    # beta^1 = 1 off the last cell, 2 on it
    space = build_grid([Factor("interval")], 4)
    d0 = BundleMap.from_blocks(space, np.array([[[1.0], [0.0]]] * 3 + [[[0.0], [0.0]]]))
    coh = extended_cohomology(BundleComplex.from_maps([d0]))
    assert coh[1].generic_betti == 1
    assert coh[1].proj_dim == pytest.approx(0.75)
    assert coh[1].betti_integral == pytest.approx(1.25)
    assert coh[1].proj_dim + 2 * coh[1].exceptional_mass == pytest.approx(coh[1].betti_integral)


def test_split_complex_projective_dimension_is_the_passive_rank():
    # d = (x - 1/2, 0, 0)^T: an acyclic line plus a rank-2 summand with zero differential
    d = np.zeros((CIRCLE.size, 3, 1), dtype=complex)
    d[:, 0, 0] = CIRCLE.coordinate(0) - 0.5
    coh = extended_cohomology(BundleComplex.from_maps([BundleMap.from_blocks(CIRCLE, d)]))
    assert coh.generic_betti == [0, 2]
    assert coh[1].proj_dim == pytest.approx(2 * CIRCLE.total_measure, abs=1e-9)
    assert coh[0].proj_dim == 0.0


def test_projective_and_torsion_parts_account_for_the_target():
    angle = 0.3
    mix = np.array([[np.cos(angle), 0.0, -np.sin(angle)],
                    [0.0, 1.0, 0.0],
                    [np.sin(angle), 0.0, np.cos(angle)]])
    s = np.abs(CIRCLE.coordinate(0) - 0.5) + 0.1
    blocks = np.einsum("ij,n->nij", mix @ np.array([[1.0], [0.0], [0.0]]), s)
    X = ExtObject(BundleMap.from_blocks(CIRCLE, blocks))
    P, T = projective_part(X), torsion_part(X)
    assert (P.dims + T.target.dims).tolist() == X.target.dims.tolist()
    assert P.dims.tolist() == [2] * CIRCLE.size
    np.testing.assert_allclose(np.abs(T.alpha.blocks[:, 0, 0]), s, rtol=1e-12)
    assert is_torsion(T)
