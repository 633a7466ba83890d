"""Orthonormal bases, symmetric eigendecompositions and subspace distances.

The estimators in this package identify column spaces rather than individual
loading matrices, so all accuracy measures are distances between linear
subspaces.  Two measures are provided: ``orthonormal_distance`` for
half-orthogonal matrices of equal shape, and ``projection_distance`` which
compares spans of possibly different dimensions through their orthogonal
projectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, RankDeficient


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, ordered by descending eigenvalue."""

    values: np.ndarray
    vectors: np.ndarray


def _check_matrix(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] == 0 or M.shape[1] == 0:
        raise InvalidInput(f"{name} must be a non-empty 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return M


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry non-negative.

    Eigenvectors are only defined up to sign; this convention makes the
    decomposition deterministic across runs and platforms.
    """
    out = vectors.copy()
    lead = np.abs(out).argmax(axis=0)
    signs = np.sign(out[lead, np.arange(out.shape[1])])
    signs[signs == 0] = 1.0
    return out * signs


def sym_eigen(M: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a (nearly) symmetric matrix.

    The input is symmetrized as ``(M + M') / 2`` before factorization, the
    eigenvalues are returned in descending order, and each eigenvector's
    largest-magnitude entry is made non-negative.
    """
    M = _check_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise InvalidInput(f"M must be square, got shape {M.shape}")
    sym = 0.5 * (M + M.T)
    values, vectors = np.linalg.eigh(sym)
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = _fix_signs(vectors[:, order])
    return EigenDecomposition(values=values, vectors=vectors)


def is_orthonormal(H: np.ndarray, tol: float = 1e-8) -> bool:
    """True if the columns of ``H`` are orthonormal within ``tol``."""
    H = np.asarray(H, dtype=float)
    G = H.T @ H
    return bool(np.max(np.abs(G - np.eye(H.shape[1]))) < tol)


def orthonormal_distance(H1: np.ndarray, H2: np.ndarray) -> float:
    """Distance between the spans of two half-orthogonal ``p x r`` matrices.

    Computes ``sqrt(1 - tr(H1 H1' H2 H2') / r)``.  The value is 0 when the
    spans coincide and 1 when they are orthogonal.  Both inputs must have the
    same shape and orthonormal columns.
    """
    H1 = _check_matrix(H1, "H1")
    H2 = _check_matrix(H2, "H2")
    if H1.shape != H2.shape:
        raise InvalidInput(f"shape mismatch: {H1.shape} vs {H2.shape}")
    r = H1.shape[1]
    cross = H1.T @ H2
    inner = float(np.sum(cross * cross)) / r
    # roundoff can push the trace a hair past r
    return float(np.sqrt(min(max(1.0 - inner, 0.0), 1.0)))


def projection_distance(H1: np.ndarray, H2: np.ndarray) -> float:
    """Distance between the column spaces of two full-rank matrices.

    Computes ``sqrt(1 - tr(P1 P2) / min(h1, h2))`` where ``Pi`` is the
    orthogonal projector onto the span of ``Hi``.  The inputs need not be
    orthonormal and may have different numbers of columns; the value is 0
    exactly when one span contains the other and 1 when they are orthogonal.
    When ``h1 = h2`` and both inputs have orthonormal columns it coincides
    with ``orthonormal_distance``.
    """
    H1 = _check_matrix(H1, "H1")
    H2 = _check_matrix(H2, "H2")
    if H1.shape[0] != H2.shape[0]:
        raise InvalidInput(f"row dimension mismatch: {H1.shape} vs {H2.shape}")
    U1 = _orth_basis(H1, "H1")
    U2 = _orth_basis(H2, "H2")
    h = min(U1.shape[1], U2.shape[1])
    cross = U1.T @ U2
    inner = float(np.sum(cross * cross)) / h
    return float(np.sqrt(min(max(1.0 - inner, 0.0), 1.0)))


def _orth_basis(H: np.ndarray, name: str) -> np.ndarray:
    """Orthonormal basis of the column space, rejecting rank-deficient input."""
    U, s, _ = np.linalg.svd(H, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= 1e-10 * s[0]:
        raise RankDeficient(f"{name} is numerically rank deficient")
    return U


def random_orthonormal(p: int, r: int, seed: int) -> np.ndarray:
    """Seeded random ``p x r`` matrix with orthonormal columns.

    QR factorization of a standard normal draw, with the signs fixed so the
    diagonal of R is positive; the result is deterministic for a given seed.
    """
    if not (1 <= r <= p):
        raise InvalidInput(f"need 1 <= r <= p, got p={p}, r={r}")
    rng = np.random.Generator(np.random.Philox(seed))
    G = rng.standard_normal((p, r))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs
