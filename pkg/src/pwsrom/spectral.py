"""Linearization bookkeeping: eigendecompositions, slow spectral subspaces,
spectral quotients and real modal coordinate changes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DecompositionError(RuntimeError):
    pass


class ConditioningError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearizedSystem:
    """Eigendecomposition of a Jacobian, sorted by descending real part.

    Complex pairs are stored conjugate-adjacent (positive-imaginary member
    first). Eigenvectors have unit 2-norm with the largest-magnitude component
    rotated onto the positive real axis, which makes the decomposition
    deterministic.
    """

    a_matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[0]


@dataclass(frozen=True)
class SpectralSubspace:
    """Real spectral subspace spanned by selected eigenvalue pairs.

    indices refers to positions in LinearizedSystem.eigenvalues (one per
    selected eigenvalue, conjugates included). v_basis holds the real basis
    columns; w_basis the adjoint rows with w_basis @ v_basis = identity.
    """

    indices: tuple
    v_basis: np.ndarray
    w_basis: np.ndarray
    r_block: np.ndarray


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    ph = np.angle(v[k])
    return v * np.exp(-1j * ph)


def decompose(a_matrix: np.ndarray) -> LinearizedSystem:
    """Eigendecomposition with deterministic ordering and normalization.

    Raises DecompositionError when the eigenvector matrix is numerically
    singular (defective matrix beyond tolerance).
    """
    A = np.asarray(a_matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("a_matrix must be square")
    w, V = np.linalg.eig(A)
    # descending real part; within a conjugate pair the +imag member first
    idx = np.lexsort((-w.imag, -w.real))
    w = w[idx]
    V = V[:, idx]
    cols = []
    for j in range(len(w)):
        if w[j].imag < 0.0:
            # conjugate of the previous column keeps pairs exactly conjugate
            cols.append(np.conj(cols[-1]))
        else:
            v = _fix_phase(V[:, j])
            v = v / np.linalg.norm(v)
            cols.append(v)
    V = np.column_stack(cols)
    if not np.isfinite(V).all():
        raise DecompositionError("eigendecomposition produced non-finite vectors")
    cond = np.linalg.cond(V)
    if cond > 1e12:
        raise DecompositionError(
            f"eigenvector matrix condition number {cond:.2e}; matrix is defective "
            "beyond tolerance")
    resid = np.linalg.norm(A @ V - V * w, axis=0)
    scale = max(np.linalg.norm(A), 1e-300)
    if np.any(resid > 1e-10 * scale * np.linalg.norm(V, axis=0)):
        raise DecompositionError("eigenpair residual exceeds tolerance")
    return LinearizedSystem(a_matrix=A, eigenvalues=w, eigenvectors=V)


def subspace(lin: LinearizedSystem, pair_indices) -> SpectralSubspace:
    """Real spectral subspace from eigenvalue-pair indices.

    pair_indices selects the positive-imaginary member of each complex pair
    (its conjugate is included automatically) or a real eigenvalue.
    """
    A = lin.a_matrix
    cols = []
    sel = []
    for j in pair_indices:
        lam = lin.eigenvalues[j]
        v = lin.eigenvectors[:, j]
        if abs(lam.imag) > 0.0:
            cols.append(v.real)
            cols.append(v.imag)
            sel.extend([j, j + 1])
        else:
            cols.append(v.real)
            sel.append(j)
    V = np.column_stack(cols)
    # adjoint rows: rows of pinv restricted so that W V = I
    W = np.linalg.pinv(V)
    R = W @ A @ V
    return SpectralSubspace(indices=tuple(sel), v_basis=V, w_basis=W, r_block=R)


def _check_stable(lin: LinearizedSystem) -> None:
    if np.any(lin.eigenvalues.real >= 0.0):
        raise ValueError("spectral quotients require all real parts negative")


def relative_spectral_quotient(lin: LinearizedSystem, e: SpectralSubspace) -> int:
    """Int[ min-over-spectrum Re(lambda) / max-over-E Re(lambda) ]."""
    _check_stable(lin)
    inside = lin.eigenvalues[list(e.indices)].real
    denom = inside.max()
    if denom == 0.0:
        raise ZeroDivisionError("max real part over the subspace is zero")
    return int(lin.eigenvalues.real.min() / denom)


def absolute_spectral_quotient(lin: LinearizedSystem, e: SpectralSubspace) -> int:
    """As the relative quotient with the numerator min over the complement."""
    _check_stable(lin)
    outside = [lin.eigenvalues[j].real for j in range(lin.dim)
               if j not in e.indices]
    if not outside:
        raise ValueError("subspace equals the whole spectrum: empty complement")
    inside = lin.eigenvalues[list(e.indices)].real
    denom = inside.max()
    if denom == 0.0:
        raise ZeroDivisionError("max real part over the subspace is zero")
    return int(min(outside) / denom)


def modal_change(lin: LinearizedSystem) -> tuple[np.ndarray, np.ndarray]:
    """Real modal matrix V and its inverse.

    Columns are (Re v, Im v) for each complex pair so that V^-1 A V is
    block-diagonal with 2x2 blocks [[Re l, Im l], [-Im l, Re l]].
    """
    cols = []
    j = 0
    n = lin.dim
    while j < n:
        lam = lin.eigenvalues[j]
        v = lin.eigenvectors[:, j]
        if abs(lam.imag) > 0.0:
            cols.append(v.real)
            cols.append(v.imag)
            j += 2
        else:
            cols.append(v.real)
            j += 1
    V = np.column_stack(cols)
    cond = np.linalg.cond(V)
    if cond > 1e12:
        raise ConditioningError(f"modal matrix condition number {cond:.2e}")
    V_inv = np.linalg.inv(V)
    return V, V_inv
