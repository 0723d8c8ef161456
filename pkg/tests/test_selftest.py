import numpy as np
import pytest

from src.measure import Factor, build_grid
from src.selftest import (
    betti_integration,
    laplacian_identity,
    random_complex,
    random_matrix,
    random_unitary,
    sdf_identities,
    single_point_oracles,
    trace_symmetry,
)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_random_matrix_rank(rng):
    a = random_matrix(rng, 4, 5, rank=2)
    assert a.shape == (4, 5)
    assert np.linalg.matrix_rank(a) == 2


def test_random_unitary(rng):
    q = random_unitary(rng, 3)
    np.testing.assert_allclose(q.conj().T @ q, np.eye(3), atol=1e-12)


def test_random_complex_betti(rng):
    space = build_grid([Factor("interval")], 4)
    C, betti = random_complex(rng, space, dims=(2, 3, 2))
    assert betti.shape == (3, 4)
    d0, d1 = C.maps
    for j in range(4):
        np.testing.assert_allclose(d1.block(j) @ d0.block(j), 0.0, atol=1e-12)
        r0 = np.linalg.matrix_rank(d0.block(j))
        r1 = np.linalg.matrix_rank(d1.block(j))
        assert betti[:, j].tolist() == [2 - r0, 3 - r0 - r1, 2 - r1]


@pytest.mark.parametrize("suite,kwargs", [
    (single_point_oracles, {"instances": 50}),
    (betti_integration, {"complexes": 10}),
    (laplacian_identity, {"complexes": 3, "lambdas": 10}),
    (sdf_identities, {"instances": 5}),
    (trace_symmetry, {"instances": 5}),
])
def test_suites_pass(rng, suite, kwargs):
    results = suite(rng, **kwargs)
    assert results
    for result in results:
        assert result.passed, result
        assert result.failures == 0
