"""Complex structure on R^{2n}, Levi forms and pseudoconvexity checks.

Coordinate convention (fixed globally): real coordinates are ordered
(x1, y1, ..., xn, yn) with z_j = x_j + i y_j, and J maps d/dx_j to d/dy_j
and d/dy_j to -d/dx_j.  A real vector N represents the (1,0) vector
Z = N - i J(N), whose complex coordinates are X_j = N_{x_j} + i N_{y_j}.

The Levi form of a C^2 function u on Z = N - i J(N) is

    L(u)(Z, Z) = (H(u)(N, N) + H(u)(J N, J N)) / 4

with H the real Hessian; for the Hermitian matrix over a basis the same
quarter-combination appears entrywise through the complex Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import ImplicitDomain, boundary_frame
from .errors import OkalabError
from .expr import Jet2
from .linalg import hermitian_eigvals

LEVI_TOL = 1e-7


@dataclass(frozen=True)
class ComplexStructure:
    """The standard complex structure on R^{2n} in (x1,y1,...,xn,yn) order."""

    n: int

    @property
    def matrix(self) -> np.ndarray:
        J = np.zeros((2 * self.n, 2 * self.n))
        for j in range(self.n):
            J[2 * j, 2 * j + 1] = -1.0
            J[2 * j + 1, 2 * j] = 1.0
        return J


def apply_J(cs: ComplexStructure, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 2 * cs.n:
        raise ValueError(f"expected vectors of length {2 * cs.n}")
    out = np.empty_like(v)
    out[..., 0::2] = -v[..., 1::2]
    out[..., 1::2] = v[..., 0::2]
    return out


def complex_coordinates(v) -> np.ndarray:
    """Pair the real coordinates of v into complex ones: X_j = v_xj + i v_yj."""
    v = np.asarray(v, dtype=float)
    return v[..., 0::2] + 1j * v[..., 1::2]


def complex_hessian(hess: np.ndarray) -> np.ndarray:
    """Complex Hessian d^2 u / dz_j dzbar_k from the real 2n x 2n Hessian."""
    H = np.asarray(hess, dtype=float)
    xx = H[0::2, 0::2]
    yy = H[1::2, 1::2]
    xy = H[0::2, 1::2]
    yx = H[1::2, 0::2]
    return 0.25 * ((xx + yy) + 1j * (xy - yx))


def levi_form(rho_jet: Jet2, z_pair) -> float:
    """Levi form on the (1,0) vector given as the real pair (N, J(N))."""
    N, JN = (np.asarray(v, dtype=float) for v in z_pair)
    H = rho_jet.hessian
    return 0.25 * float(N @ H @ N + JN @ H @ JN)


def make_z(cs: ComplexStructure, N) -> tuple[np.ndarray, np.ndarray]:
    N = np.asarray(N, dtype=float)
    return N, apply_J(cs, N)


def complex_tangent_real_part(dom: ImplicitDomain, q, cs: ComplexStructure):
    """Totally real orthonormal basis U of the complex tangent space, plus X.

    X = -J(nu) with nu the inward normal; the complex tangent space is the
    orthogonal complement of span{nu, J(nu)} = span{X, J(X)}.  The n-1 basis
    vectors are chosen greedily from projections of the standard x-axis
    directions (then y-axis), orthogonalized against each chosen W and J(W),
    so U is perpendicular to J(U), U + J(U) spans the complex tangent space,
    and the construction is deterministic.  Whenever the intersection of the
    standard real subspace with the complex tangent space has full dimension
    n-1, U coincides with it.
    """
    q = np.asarray(q, dtype=float)
    if dom.dim != 2 * cs.n:
        raise OkalabError(f"domain has dim {dom.dim}, complex structure wants {2 * cs.n}")
    frame = boundary_frame(dom, q)
    nu = frame.nu
    X = -apply_J(cs, nu)
    constraints = [nu, apply_J(cs, nu)]
    basis = []
    axes = [np.eye(2 * cs.n)[2 * j] for j in range(cs.n)] + [
        np.eye(2 * cs.n)[2 * j + 1] for j in range(cs.n)
    ]
    while len(basis) < cs.n - 1:
        best = None
        best_norm = 1e-9
        for a in axes:
            v = a.copy()
            for c in constraints:
                v -= np.dot(v, c) * c
            norm = np.linalg.norm(v)
            if norm > best_norm + 1e-12:
                best = v / norm
                best_norm = norm
        if best is None:
            raise OkalabError("failed to build a totally real tangent basis")
        basis.append(best)
        constraints.extend([best, apply_J(cs, best)])
    U = np.array(basis) if basis else np.empty((0, 2 * cs.n))
    return U, X


@dataclass(frozen=True)
class LeviEval:
    """Levi form of the defining function on the complex tangent space at q."""

    q: np.ndarray
    basis: np.ndarray            # rows W_s; the complex vectors are W_s - iJ(W_s)
    levi_matrix: np.ndarray      # (n-1, n-1) Hermitian
    min_eig: float

    @property
    def pseudoconvex(self) -> bool:
        return self.min_eig >= -LEVI_TOL

    def to_dict(self):
        return {
            "q": self.q.tolist(),
            "min_eig": self.min_eig,
            "pseudoconvex": bool(self.pseudoconvex),
        }


def pseudoconvexity_check(
    dom: ImplicitDomain, q, cs: ComplexStructure
) -> LeviEval:
    """Assemble the Levi matrix of F over the complex tangent basis at q."""
    q = np.asarray(q, dtype=float)
    U, _ = complex_tangent_real_part(dom, q, cs)
    jet = dom.jet2(q)
    H = complex_hessian(jet.hessian)
    if len(U) == 0:
        return LeviEval(q, U, np.empty((0, 0), dtype=complex), np.inf)
    Xc = complex_coordinates(U)
    L = Xc @ H @ Xc.conj().T
    L = 0.5 * (L + L.conj().T)
    eigs = hermitian_eigvals(L)
    return LeviEval(q, U, L, float(eigs[0]))


@dataclass(frozen=True)
class CurvatureSelectionRecord:
    q: np.ndarray
    kappas: np.ndarray
    drop_min_sum: float
    nonneg_count: int
    levi_min_eig: float

    def to_dict(self):
        return {
            "q": self.q.tolist(),
            "kappas": self.kappas.tolist(),
            "drop_min_sum": self.drop_min_sum,
            "nonneg_count": self.nonneg_count,
            "levi_min_eig": self.levi_min_eig,
        }


def curvature_selection_check(
    dom: ImplicitDomain, q, cs: ComplexStructure, tol: float = LEVI_TOL
) -> CurvatureSelectionRecord:
    """Drop-the-smallest curvature sum and the nonnegative count at q.

    For a pseudoconvex boundary the best selectable sum (all kappas minus
    the smallest) is nonnegative and at least n-1 curvatures are >= -tol.
    Violations are reported in the record, never raised: finding where the
    hypotheses fail is part of the tool's job.
    """
    q = np.asarray(q, dtype=float)
    frame = boundary_frame(dom, q)
    kappas = frame.kappas
    drop_min = float(np.sum(kappas) - kappas[0]) if len(kappas) else 0.0
    nonneg = int(np.sum(kappas >= -tol))
    levi = pseudoconvexity_check(dom, q, cs)
    return CurvatureSelectionRecord(
        q=q,
        kappas=kappas,
        drop_min_sum=drop_min,
        nonneg_count=nonneg,
        levi_min_eig=levi.min_eig,
    )


@dataclass(frozen=True)
class KyFanRecord:
    lhs: float
    rhs: float
    diag_entries: np.ndarray

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self):
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "diag_entries": self.diag_entries.tolist(),
        }


def ky_fan_trace_check(kappas, u_basis, j_restricted) -> KyFanRecord:
    """Trace bound from the maximum principle for sums of eigenvalues.

    kappas live on R^{2n-1} (principal coordinates), u_basis rows e_s are
    orthonormal and J-orthogonal there, j_restricted is the restriction of
    the complex structure.  B stacks the pairs (e_s, J e_s) and (J e_s, e_s)
    as columns; with M = diag(K, K),

        2 * max_j sum_{i != j} kappa_i  >=  tr(B^T M B),

    and each diagonal entry of B^T M B is 4x a Levi-form value of the local
    defining graph function, hence nonnegative on pseudoconvex boundaries.
    """
    kappas = np.asarray(kappas, dtype=float)
    U = np.atleast_2d(np.asarray(u_basis, dtype=float))
    if U.shape[0] and U.shape[1] != len(kappas):
        raise OkalabError("basis vectors must live in R^{2n-1}")
    gram = U @ U.T
    if U.shape[0] and not np.allclose(gram, np.eye(len(U)), atol=1e-10):
        raise OkalabError("u_basis is not orthonormal")
    J = np.asarray(j_restricted, dtype=float)
    JU = U @ J.T
    K = np.diag(kappas)
    dim = len(kappas)
    cols = []
    for e, je in zip(U, JU):
        cols.append(np.concatenate([e, je]))
    for e, je in zip(U, JU):
        cols.append(np.concatenate([je, e]))
    if cols:
        B = np.stack(cols, axis=1)
        # columns have squared norm 2 and are mutually orthogonal
        btb = B.T @ B
        if not np.allclose(btb, 2.0 * np.eye(B.shape[1]), atol=1e-9):
            raise OkalabError("stacked basis columns are not J-orthogonal")
        M = np.zeros((2 * dim, 2 * dim))
        M[:dim, :dim] = K
        M[dim:, dim:] = K
        prod = B.T @ M @ B
        rhs = float(np.trace(prod))
        diag = np.diag(prod).copy()
    else:
        rhs = 0.0
        diag = np.array([])
    lhs = 2.0 * float(np.sum(kappas) - np.min(kappas)) if dim else 0.0
    return KyFanRecord(lhs=lhs, rhs=rhs, diag_entries=diag)


def principal_frame_rows(frame) -> np.ndarray:
    """Orthogonal map to principal coordinates: rows P_1..P_{m-1}, nu."""
    return np.vstack([frame.principal_dirs, frame.nu[None, :]])


def ky_fan_at(dom: ImplicitDomain, q, cs: ComplexStructure) -> KyFanRecord:
    """Ky Fan trace check built from the frame and tangent splitting at q."""
    q = np.asarray(q, dtype=float)
    frame = boundary_frame(dom, q)
    rows = principal_frame_rows(frame)
    J_t = rows @ cs.matrix @ rows.T
    U_amb, _ = complex_tangent_real_part(dom, q, cs)
    dim = 2 * cs.n - 1
    U_t = (U_amb @ rows.T)[:, :dim] if len(U_amb) else np.empty((0, dim))
    return ky_fan_trace_check(frame.kappas, U_t, J_t[:dim, :dim])
