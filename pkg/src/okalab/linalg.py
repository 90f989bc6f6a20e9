"""Small dense linear algebra: Jacobi eigensolver, frames, rotations.

The symmetric problems here are (m-1) x (m-1) with m <= 6, so a cyclic
Jacobi sweep is plenty and keeps the whole pipeline deterministic and
dependency-free.
"""

from __future__ import annotations

import numpy as np


def jacobi_eigh(A: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns).  Sweeps stop when
    the off-diagonal Frobenius norm drops below tol * scale.  Each eigenvector
    is oriented so its first component of magnitude > 1e-12 is positive, which
    makes degenerate eigenspaces reproducible.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 0:
        return np.array([]), V
    if n == 1:
        return A[0].copy(), V
    scale = max(1.0, np.max(np.abs(A)))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2) * 2.0)
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                A[p, q] = A[q, p] = 0.0
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
    eigvals = np.diag(A).copy()
    order = np.argsort(eigvals, kind="stable")
    eigvals = eigvals[order]
    V = V[:, order]
    for k in range(n):
        col = V[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0.0:
            V[:, k] = -col
    return eigvals, V


def hermitian_eigvals(H: np.ndarray) -> np.ndarray:
    """Eigenvalues (ascending) of a Hermitian matrix via its real embedding."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    if n == 0:
        return np.array([])
    A = np.block([[H.real, -H.imag], [H.imag, H.real]])
    vals, _ = jacobi_eigh(A)
    # real embedding doubles every eigenvalue
    return vals[::2].copy()


def orthonormal_tangent_basis(nu: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to the unit vector nu.

    Gram-Schmidt on the m-1 coordinate directions least aligned with nu,
    with ties broken by coordinate index, so frames are reproducible.
    Returns an (m-1, m) array of row vectors.
    """
    nu = np.asarray(nu, dtype=float)
    m = nu.shape[0]
    order = np.argsort(np.abs(nu), kind="stable")
    chosen = sorted(order[: m - 1])
    basis = []
    for i in chosen:
        v = np.zeros(m)
        v[i] = 1.0
        v -= np.dot(v, nu) * nu
        for t in basis:
            v -= np.dot(v, t) * t
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            continue
        basis.append(v / norm)
    if len(basis) != m - 1:
        # fall back to the remaining axis directions
        for i in range(m):
            if len(basis) == m - 1:
                break
            v = np.zeros(m)
            v[i] = 1.0
            v -= np.dot(v, nu) * nu
            for t in basis:
                v -= np.dot(v, t) * t
            norm = np.linalg.norm(v)
            if norm > 1e-12:
                basis.append(v / norm)
    return np.array(basis)


def rotation_to_last_axis(nu: np.ndarray) -> np.ndarray:
    """Orthogonal symmetric R with R @ nu = e_m (Householder reflection)."""
    nu = np.asarray(nu, dtype=float)
    m = nu.shape[0]
    e = np.zeros(m)
    e[-1] = 1.0
    v = nu - e
    norm2 = np.dot(v, v)
    if norm2 < 1e-28:
        return np.eye(m)
    return np.eye(m) - 2.0 * np.outer(v, v) / norm2


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_rotations(m: int, count: int) -> list[np.ndarray]:
    """Deterministic well-spread orthogonal matrices built from Givens chains.

    No RNG: plane angles come from the golden-ratio sequence, so repeated
    runs are bit-identical.
    """
    rotations = [np.eye(m)]
    counter = 1
    for _ in range(count - 1):
        R = np.eye(m)
        for i in range(m - 1):
            for j in range(i + 1, m):
                theta = 2.0 * np.pi * ((counter * _GOLDEN) % 1.0)
                counter += 1
                c, s = np.cos(theta), np.sin(theta)
                G = np.eye(m)
                G[i, i] = c
                G[j, j] = c
                G[i, j] = -s
                G[j, i] = s
                R = G @ R
        rotations.append(R)
    return rotations
