import numpy as np
import pytest

from rebindkit.errors import BlockSplit, GapTooSmall, SwapIllConditioned
from rebindkit.markov import RateMatrix, TransitionMatrix, rate_to_transition, stationary_distribution
from rebindkit.schur import dominant_basis, quasi_blocks, real_schur, sort_schur

from conftest import metastable_generator, random_generator
from oracles import companion_eigenvalues, match_multisets


def test_real_schur_residual_and_orthogonality(rng):
    for _ in range(20):
        M = rng.standard_normal((6, 6))
        form = real_schur(M)
        assert form.residual(M) <= 1e-12
        np.testing.assert_allclose(form.basis.T @ form.basis, np.eye(6), atol=1e-13)
        assert np.all(np.tril(form.factor, -2) == 0)


def test_real_schur_eigenvalues_vs_companion(rng):
    for _ in range(20):
        M = rng.standard_normal((6, 6))
        assert match_multisets(real_schur(M).eigenvalues(), companion_eigenvalues(M)) <= 1e-9


def test_quasi_blocks_layout():
    R = np.array([
        [1.0, 2.0, 3.0, 4.0],
        [0.0, 0.5, 1.0, 0.0],
        [0.0, -1.0, 0.5, 2.0],
        [0.0, 0.0, 0.0, -1.0],
    ])
    blocks = quasi_blocks(R)
    assert [(b.start_index, b.size) for b in blocks] == [(0, 1), (1, 2), (3, 1)]
    z = blocks[1].eigenvalues
    assert z[0] == pytest.approx(complex(0.5, 1.0))
    assert z[1] == pytest.approx(complex(0.5, -1.0))


@pytest.mark.parametrize("criterion", ["modulus", "real"])
def test_sort_schur_orders_blocks(rng, criterion):
    key = abs if criterion == "modulus" else (lambda z: z.real)
    for _ in range(20):
        M = rng.standard_normal((7, 7))
        form = sort_schur(real_schur(M), criterion)
        assert form.residual(M) <= 1e-11
        vals = [key(b.eigenvalues[0]) for b in form.blocks]
        assert all(a >= b - 1e-10 for a, b in zip(vals, vals[1:]))
        assert match_multisets(form.eigenvalues(), np.linalg.eigvals(M)) <= 1e-8
        # leading columns span an invariant subspace
        U, R = form.basis, form.factor
        np.testing.assert_allclose(M @ U, U @ R, atol=1e-10)


def test_sort_schur_partial_count(rng):
    M = rng.standard_normal((8, 8))
    full = sort_schur(real_schur(M), "real")
    part = sort_schur(real_schur(M), "real", count=3)
    lead = sum(b.size for b in full.blocks[:2])
    head = sorted(part.eigenvalues()[:lead], key=lambda z: (z.real, z.imag))
    ref = sorted(full.eigenvalues()[:lead], key=lambda z: (z.real, z.imag))
    np.testing.assert_allclose(head, ref, atol=1e-9)


def test_sort_schur_rejects_equal_eigenvalues():
    # eigenvalues 1 and 1 + 1e-14 have to be swapped past each other
    R = np.triu(np.ones((3, 3)))
    R[np.diag_indices(3)] = [1.0, 1.0 + 1e-14, 2.0]
    form = real_schur(R)
    assert np.allclose(np.diag(form.factor), np.diag(R))
    with pytest.raises(SwapIllConditioned):
        sort_schur(form, "real")


def test_dominant_basis_properties(rng):
    Q, _ = metastable_generator(rng, [5, 6, 4])
    pi = stationary_distribution(RateMatrix(Q))
    basis = dominant_basis(RateMatrix(Q), pi, 3)
    np.testing.assert_allclose(basis.X[:, 0], 1.0)
    np.testing.assert_allclose(basis.gram(), np.eye(3), atol=1e-11)
    np.testing.assert_allclose(Q @ basis.X, basis.X @ basis.block, atol=1e-10)
    np.testing.assert_allclose(basis.block[1:, 0], 0.0, atol=1e-12)
    np.testing.assert_allclose(basis.block[0], 0.0, atol=1e-11)
    ev = np.sort(np.linalg.eigvals(Q).real)[::-1][:3]
    np.testing.assert_allclose(np.sort(basis.eigenvalues.real)[::-1], ev, atol=1e-10)


def test_dominant_basis_transition_uses_modulus(rng):
    Q, _ = metastable_generator(rng, [4, 4])
    P = rate_to_transition(Q, 2.0)
    pi = stationary_distribution(P)
    basis = dominant_basis(P, pi, 2)
    lam = np.sort(np.abs(np.linalg.eigvals(P.entries)))[::-1][:2]
    np.testing.assert_allclose(np.sort(np.abs(basis.eigenvalues))[::-1], lam, atol=1e-10)
    assert isinstance(P, TransitionMatrix)


def test_dominant_basis_block_split():
    # rotation-like 3-cycle: the two slow eigenvalues form a complex pair
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    pi = np.full(3, 1 / 3)
    with pytest.raises(BlockSplit):
        dominant_basis(Q, pi, 2)
    basis = dominant_basis(Q, pi, 3)
    assert basis.n == 3


def test_dominant_basis_gap():
    Q = np.array([[-1.0, 0.5, 0.5], [0.5, -1.0, 0.5], [0.5, 0.5, -1.0]])
    with pytest.raises(GapTooSmall):
        dominant_basis(Q, np.full(3, 1 / 3), 2)


def test_dominant_basis_non_reversible(rng):
    Q = random_generator(rng, 9, density=0.5)
    pi = stationary_distribution(RateMatrix(Q))
    try:
        basis = dominant_basis(Q, pi, 4)
    except BlockSplit:
        basis = dominant_basis(Q, pi, 3)
    np.testing.assert_allclose(basis.gram(), np.eye(basis.n), atol=1e-10)
    np.testing.assert_allclose(Q @ basis.X, basis.X @ basis.block, atol=1e-10)
