import numpy as np
import pytest

from pwsrom import spectral
from pwsrom.shaw_pierre import SpParams, sp_shifted

DELTA_ZERO_SLOW = -0.0741 + 1.0027j    # published linearization constants:
DELTA_ZERO_FAST = -0.3759 + 1.6812j    # exact for the zero-friction matrix


def sp_matrix(delta):
    return sp_shifted(SpParams(delta=delta), "+").a_tilde


def test_identity_eigenvalues():
    lin = spectral.decompose(np.eye(2))
    assert np.allclose(lin.eigenvalues, [1.0, 1.0])


def test_diagonal_sorted_descending():
    lin = spectral.decompose(np.diag([-1.0, -2.0, -3.0]))
    assert np.allclose(lin.eigenvalues, [-1.0, -2.0, -3.0])


def test_sp_eigenvalues_against_characteristic_polynomial():
    # independent oracle: hand-derived characteristic coefficients of the
    # shifted 4x4 at unit parameters
    delta = 0.1
    lin = spectral.decompose(sp_matrix(delta))
    q0 = abs(np.cbrt(-delta + np.sqrt(delta**2 + 1))
             - np.cbrt(delta + np.sqrt(delta**2 + 1)))
    coeffs = [1.0, 0.9, 4.09 + 1.5 * q0**2, 1.2 + 0.9 * q0**2, 3.0 + 3 * q0**2]
    for lam in lin.eigenvalues:
        assert abs(np.polyval(coeffs, lam)) < 1e-10


def test_sp_eigenvalue_pairing_and_residual():
    lin = spectral.decompose(sp_matrix(0.1))
    w = lin.eigenvalues
    assert w[0] == np.conj(w[1]) and w[2] == np.conj(w[3])
    assert w[0].imag > 0 and w[2].imag > 0
    A, V = lin.a_matrix, lin.eigenvectors
    res = np.linalg.norm(A @ V - V * w, axis=0)
    assert res.max() <= 1e-10 * np.linalg.norm(A)


def test_published_constants_match_zero_friction_matrix():
    # the published slow/fast values reproduce (at their 4-decimal precision)
    # on the delta = 0 matrix; at delta = 0.1 the true values differ in the
    # third decimal
    def round4(z):
        return complex(np.round(z.real, 4), np.round(z.imag, 4))

    lin0 = spectral.decompose(sp_matrix(0.0))
    assert round4(lin0.eigenvalues[0]) == DELTA_ZERO_SLOW
    assert round4(lin0.eigenvalues[2]) == DELTA_ZERO_FAST
    lin1 = spectral.decompose(sp_matrix(0.1))
    assert abs(lin1.eigenvalues[0] - DELTA_ZERO_SLOW) > 5e-4


def test_relative_quotient_sp():
    lin = spectral.decompose(sp_matrix(0.1))
    e1 = spectral.subspace(lin, [0])
    assert spectral.relative_spectral_quotient(lin, e1) == 5


def test_relative_quotient_fastest_subspace():
    lin = spectral.decompose(sp_matrix(0.1))
    e2 = spectral.subspace(lin, [2])
    assert spectral.relative_spectral_quotient(lin, e2) == 1


def test_relative_quotient_whole_space():
    lin = spectral.decompose(np.diag([-1.0, -1.0]))
    e = spectral.subspace(lin, [0, 1])
    assert spectral.relative_spectral_quotient(lin, e) == 1


def test_absolute_quotient_sp_equals_relative():
    lin = spectral.decompose(sp_matrix(0.1))
    e1 = spectral.subspace(lin, [0])
    assert spectral.absolute_spectral_quotient(lin, e1) == 5


def test_absolute_quotient_separated_pairs():
    A = np.zeros((4, 4))
    A[:2, :2] = [[-1.0, 1.0], [-1.0, -1.0]]
    A[2:, 2:] = [[-10.0, 1.0], [-1.0, -10.0]]
    lin = spectral.decompose(A)
    e = spectral.subspace(lin, [0])
    assert spectral.absolute_spectral_quotient(lin, e) == 10


def test_absolute_quotient_empty_complement():
    lin = spectral.decompose(np.diag([-1.0, -2.0]))
    e = spectral.subspace(lin, [0, 1])
    with pytest.raises(ValueError):
        spectral.absolute_spectral_quotient(lin, e)


def test_quotient_requires_stability():
    lin = spectral.decompose(np.diag([1.0, -2.0]))
    e = spectral.subspace(lin, [1])
    with pytest.raises(ValueError):
        spectral.relative_spectral_quotient(lin, e)


def test_quotients_invariant_under_time_scaling():
    A = sp_matrix(0.1)
    for c in (0.5, 3.0, 17.0):
        lin = spectral.decompose(c * A)
        e1 = spectral.subspace(lin, [0])
        assert spectral.relative_spectral_quotient(lin, e1) == 5


def test_modal_change_block_structure():
    A = sp_matrix(0.1)
    lin = spectral.decompose(A)
    V, V_inv = spectral.modal_change(lin)
    assert np.linalg.norm(V @ V_inv - np.eye(4)) <= 1e-10
    B = V_inv @ A @ V
    lam1, lam2 = lin.eigenvalues[0], lin.eigenvalues[2]
    assert np.allclose(B[:2, :2], [[lam1.real, lam1.imag],
                                   [-lam1.imag, lam1.real]], atol=1e-12)
    assert np.allclose(B[2:, 2:], [[lam2.real, lam2.imag],
                                   [-lam2.imag, lam2.real]], atol=1e-12)
    assert np.abs(B[:2, 2:]).max() < 1e-12
    assert np.abs(B[2:, :2]).max() < 1e-12


def test_modal_change_already_block_diagonal():
    A = np.zeros((4, 4))
    A[:2, :2] = [[-0.1, 2.0], [-2.0, -0.1]]
    A[2:, 2:] = [[-3.0, 5.0], [-5.0, -3.0]]
    lin = spectral.decompose(A)
    V, V_inv = spectral.modal_change(lin)
    B = V_inv @ A @ V
    assert np.allclose(B, A, atol=1e-12)
    # columns stay inside their own modal planes (identity up to rotation)
    assert np.abs(V[2:, :2]).max() < 1e-12
    assert np.abs(V[:2, 2:]).max() < 1e-12


def test_modal_change_random_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(5):
        blocks = []
        for a, b in ((-1.0, 2.0), (-3.0, 7.0)):
            blocks.append(np.array([[a, b], [-b, a]]))
        A = np.zeros((4, 4))
        A[:2, :2], A[2:, 2:] = blocks
        T = rng.normal(size=(4, 4))
        A = np.linalg.solve(T, A @ T)
        lin = spectral.decompose(A)
        V, V_inv = spectral.modal_change(lin)
        assert np.linalg.norm(V @ V_inv - np.eye(4)) <= 1e-10


def test_decompose_deterministic():
    A = sp_matrix(0.1)
    l1 = spectral.decompose(A)
    l2 = spectral.decompose(A)
    assert np.array_equal(l1.eigenvectors, l2.eigenvectors)
    assert np.array_equal(l1.eigenvalues, l2.eigenvalues)


def test_subspace_residual_bound():
    A = sp_matrix(0.1)
    lin = spectral.decompose(A)
    for idx in ([0], [2], [0, 2]):
        e = spectral.subspace(lin, idx)
        res = np.linalg.norm(A @ e.v_basis - e.v_basis @ e.r_block)
        assert res <= 1e-9 * np.linalg.norm(A)
        assert np.linalg.norm(e.w_basis @ e.v_basis
                              - np.eye(e.v_basis.shape[1])) <= 1e-10


def test_defective_matrix_rejected():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])   # Jordan block
    with pytest.raises(spectral.DecompositionError):
        spectral.decompose(A)
