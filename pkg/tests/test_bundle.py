import math

import numpy as np
import pytest

from src.bundle import (
    BundleComplex,
    BundleMap,
    FiberField,
    adjoint_map,
    betti_field,
    check_complex,
    compose,
    direct_sum_maps,
    eigen_zero_floor,
    fiber_betti,
    fiber_ranks,
    fiber_singular_values,
    generic_value,
    hermitian_eigs,
    laplacian,
    laplacian_kernel_dims,
    numeric_rank,
    require_complex,
    trace_endo,
    vn_dimension,
)
from src.errors import ComplexValidationError, ShapeMismatchError, ValidationFailure
from src.measure import Factor, build_grid
from src.utils.parallel import CHUNK_SIZE, fiber_map

LINE = build_grid([Factor("interval", lower=-1.5, upper=1.5)], 3)


def test_singular_values_descending():
    T = BundleMap.from_constant(LINE, np.diag([3.0, -4j]))
    np.testing.assert_allclose(fiber_singular_values(T), [[4.0, 3.0]] * 3)
    assert T.sup_norm == pytest.approx(4.0)


def test_numeric_rank():
    assert numeric_rank(np.diag([1.0, 1e-12])) == 1
    assert numeric_rank(np.zeros((0, 3))) == 0
    with pytest.raises(ValidationFailure):
        numeric_rank(np.eye(2), eps_rank=0.0)


def test_hermitian_eigs():
    eig = hermitian_eigs(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(eig.values, [1.0, 3.0])
    with pytest.raises(ValidationFailure):
        hermitian_eigs(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_variable_dimension_fields():
    T = BundleMap.from_list(LINE, [np.ones((1, 1)), np.eye(2), np.zeros((2, 0))])
    assert T.source.dims.tolist() == [1, 2, 0]
    assert fiber_ranks(T).tolist() == [1, 2, 0]
    assert T.block(0).shape == (1, 1)

    blocks = np.zeros((3, 1, 2))
    blocks[0, 0, 1] = 1.0
    with pytest.raises(ShapeMismatchError):
        BundleMap(FiberField(LINE, [1, 2, 2]), FiberField.constant(LINE, 1), blocks)


def test_composition_needs_matching_fields():
    a = BundleMap.from_constant(LINE, np.ones((2, 3)))
    with pytest.raises(ShapeMismatchError):
        compose(a, a)
    assert compose(a, BundleMap.from_constant(LINE, np.ones((3, 1)))).blocks.shape == (3, 2, 1)


def test_direct_sum_is_block_diagonal():
    a = BundleMap.from_constant(LINE, [[2.0]])
    b = BundleMap.from_constant(LINE, [[1.0, 1.0]])
    s = direct_sum_maps(a, b)
    np.testing.assert_allclose(s.block(1), [[2.0, 0.0, 0.0], [0.0, 1.0, 1.0]])


def test_complex_check():
    d0 = BundleMap.from_constant(LINE, [[1.0], [0.0]])
    good = BundleComplex.from_maps([d0, BundleMap.from_constant(LINE, [[0.0, 1.0]])])
    assert check_complex(good).passed
    bad = BundleComplex.from_maps([d0, BundleMap.from_constant(LINE, [[1.0, 0.0]])])
    with pytest.raises(ComplexValidationError):
        require_complex(bad)


def test_betti_jumps_at_zero_of_scalar_differential():
    # centers -1, 0, 1: the differential x vanishes at the middle cell
    C = BundleComplex.from_maps([BundleMap.from_scalar(LINE, LINE.coordinate(0))])
    assert betti_field(C).tolist() == [[0, 1, 0], [0, 1, 0]]
    assert fiber_betti(C, 1) == [1, 1]
    assert laplacian_kernel_dims(C, 1).tolist() == [0, 1, 0]


def test_laplacian_kernel_agrees_with_rank_between_eps_and_its_root():
    # sigma = 1e-6 is above eps = 1e-8 but sigma^2 = 1e-12 is below it
    C = BundleComplex.from_maps([BundleMap.from_constant(LINE, [[1e-6]])])
    betti = betti_field(C, 1e-8)
    assert betti.tolist() == [[0, 0, 0], [0, 0, 0]]
    for i in (0, 1):
        assert laplacian_kernel_dims(C, i, 1e-8).tolist() == betti[i].tolist()
    assert eigen_zero_floor(np.array([[0.0, 4.0]]), 1e-3) == pytest.approx([9e-6])


def test_traces_and_dimensions():
    circle = build_grid([Factor("circle", 2 * math.pi)], 16)
    eye = BundleMap.from_constant(circle, np.eye(2))
    assert trace_endo(eye).real == pytest.approx(4 * math.pi)
    assert vn_dimension(FiberField.constant(circle, 3)) == pytest.approx(6 * math.pi)
    with pytest.raises(ShapeMismatchError):
        trace_endo(BundleMap.from_constant(circle, np.ones((2, 1))))


def test_generic_value_prefers_smaller_on_ties():
    assert generic_value(np.array([1, 2]), np.array([1.0, 1.0])) == 1
    assert generic_value(np.array([1, 2, 2]), np.array([1.0, 1.0, 1.0])) == 2


def test_fiber_map_is_independent_of_threads():
    data = np.arange(CHUNK_SIZE + 1000, dtype=float)
    serial = fiber_map(lambda a: 2 * a, [data], threads=1)
    threaded = fiber_map(lambda a: 2 * a, [data], threads=3)
    np.testing.assert_array_equal(serial, threaded)


def test_adjoint_is_an_involution():
    T = BundleMap.from_constant(LINE, [[1.0, 2j], [0.0, 3.0], [4.0, -1j]])
    A = adjoint_map(T)
    assert A.blocks.shape == (3, 2, 3)
    np.testing.assert_array_equal(adjoint_map(A).blocks, T.blocks)


def test_laplacian_of_scalar_complex():
    C = BundleComplex.from_maps([BundleMap.from_scalar(LINE, LINE.coordinate(0))])
    # Delta^0 = |x|^2 and Delta^1 = |x|^2
    np.testing.assert_allclose(laplacian(C, 0).blocks[:, 0, 0].real, [1.0, 0.0, 1.0])
    np.testing.assert_allclose(laplacian(C, 1).blocks[:, 0, 0].real, [1.0, 0.0, 1.0])
