"""Fundamental forms and mean curvature in frame, graph and implicit form.

The same quantities are computed through three independent routes so they
can cross-validate each other:

  * orthonormal frame: kappas as eigenvalues of the projected Hessian,
  * graph: a local height function psi over the tangent plane,
  * implicit: the closed expression in grad F and the Hessian of F.

Mean curvature follows the averaged convention H = (sum kappa_i)/(m-1)
with the inward normal -grad F/||grad F||, so the unit ball has H = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import BoundaryFrame, ImplicitDomain
from .errors import CriticalBoundaryError, OkalabError
from .expr import Jet2
from .linalg import jacobi_eigh, rotation_to_last_axis

TOL_GRAD = 1e-8


@dataclass(frozen=True)
class GraphJet:
    """Height-function jet at a chart parameter point: psi, grad psi, Hess psi."""

    psi: Jet2
    ambient_dim: int


def sherman_morrison_inverse(v) -> np.ndarray:
    """Inverse of Id + v v^T in closed form: Id - v v^T / (1 + ||v||^2)."""
    v = np.asarray(v, dtype=float)
    return np.eye(len(v)) - np.outer(v, v) / (1.0 + float(v @ v))


def second_form_implicit(dom: ImplicitDomain, frame: BoundaryFrame) -> np.ndarray:
    """Second fundamental form in the orthonormal tangent frame.

    II(X, Y) = Hess(F)(X, Y) / ||grad F|| restricted to the tangent space.
    """
    jet = dom.jet2(frame.w)
    second = frame.tangent @ jet.hessian @ frame.tangent.T / frame.grad_norm
    return 0.5 * (second + second.T)


def mean_curvature_implicit(dom: ImplicitDomain, w) -> float:
    """H from the defining function alone:

        H = grad F^T ((lap F) Id - Hess F) grad F / ((m-1) ||grad F||^3).
    """
    jet = dom.jet2(np.asarray(w, dtype=float))
    g = jet.gradient
    norm = float(np.linalg.norm(g))
    if norm < TOL_GRAD:
        raise CriticalBoundaryError(
            f"degenerate gradient at {np.asarray(w).tolist()}"
        )
    m = dom.dim
    lap = float(np.trace(jet.hessian))
    num = float(g @ (lap * np.eye(m) - jet.hessian) @ g)
    return num / ((m - 1) * norm**3)


def mean_curvature_graph(g: GraphJet) -> float:
    """H of a graph hypersurface with the epigraph as the inside:

        H = sum_ij (delta_ij - psi_i psi_j / (1+|grad psi|^2)) psi_ij
            / ((m-1) sqrt(1+|grad psi|^2)).
    """
    grad = g.psi.gradient
    hess = g.psi.hessian
    m = g.ambient_dim
    g2 = float(grad @ grad)
    proj = np.eye(m - 1) - np.outer(grad, grad) / (1.0 + g2)
    return float(np.sum(proj * hess)) / ((m - 1) * np.sqrt(1.0 + g2))


def first_form_graph(grad_psi) -> np.ndarray:
    grad_psi = np.asarray(grad_psi, dtype=float)
    return np.eye(len(grad_psi)) + np.outer(grad_psi, grad_psi)


def second_form_graph(g: GraphJet) -> np.ndarray:
    grad = g.psi.gradient
    return g.psi.hessian / np.sqrt(1.0 + float(grad @ grad))


def principal_curvatures_graph(g: GraphJet) -> np.ndarray:
    """Eigenvalues of B = I^{-1} II in the (non-orthonormal) graph basis.

    B is not symmetric, but it is similar to the symmetric matrix
    I^{-1/2} II I^{-1/2}, whose eigenvalues the Jacobi solver returns.
    """
    I = first_form_graph(g.psi.gradient)
    II = second_form_graph(g)
    vals, vecs = jacobi_eigh(I)
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    sym = inv_sqrt @ II @ inv_sqrt
    kappas, _ = jacobi_eigh(sym)
    return kappas


class GraphChart:
    """Local graph parameterization of the boundary around a base point.

    Rotates the inward normal onto the last axis, so the boundary is the
    zero set of G(t, s) = F(w + R^T (t, s)) and the height psi(t) solves
    G(t, psi(t)) = 0 with psi(0) = 0, grad psi(0) = 0.  The inside of the
    domain is the epigraph.
    """

    def __init__(self, dom: ImplicitDomain, w):
        self.dom = dom
        self.w = np.asarray(w, dtype=float)
        jet = dom.jet2(self.w)
        norm = float(np.linalg.norm(jet.gradient))
        if norm < TOL_GRAD:
            raise CriticalBoundaryError("degenerate gradient: no graph chart")
        self.nu = -jet.gradient / norm
        # rows of R map ambient offsets to chart coordinates; R nu = e_m
        self.R = rotation_to_last_axis(self.nu)

    def ambient(self, t, s: float) -> np.ndarray:
        y = np.concatenate([np.asarray(t, dtype=float), [s]])
        return self.w + self.R.T @ y

    def height(self, t, tol: float = 1e-12, max_iter: int = 60) -> float:
        """Solve G(t, s) = 0 for the height by 1-D Newton from s = 0."""
        s = 0.0
        for _ in range(max_iter):
            p = self.ambient(t, s)
            v, g, _ = self.dom.jets(p[None, :], order=1)
            gs = float(g[0] @ self.R.T[:, -1])
            if gs == 0.0:
                raise OkalabError("chart height solve hit a vanishing slope")
            step = -float(v[0]) / gs
            s += step
            if abs(step) < tol:
                return s
        raise OkalabError(f"chart height solve did not converge at t={t}")

    def psi_jet(self, t) -> GraphJet:
        """Implicit-function jets of the height at parameter t.

        psi_i = -G_i/G_s and
        psi_ij = -(G_ij + G_is psi_j + G_js psi_i + G_ss psi_i psi_j)/G_s.
        """
        t = np.asarray(t, dtype=float)
        s = self.height(t)
        p = self.ambient(t, s)
        jet = self.dom.jet2(p)
        grad_chart = self.R @ jet.gradient
        hess_chart = self.R @ jet.hessian @ self.R.T
        m = self.dom.dim
        G_t = grad_chart[: m - 1]
        G_s = float(grad_chart[m - 1])
        if abs(G_s) < TOL_GRAD:
            raise OkalabError("chart leaves its validity region (G_s ~ 0)")
        psi_grad = -G_t / G_s
        G_tt = hess_chart[: m - 1, : m - 1]
        G_ts = hess_chart[: m - 1, m - 1]
        G_ss = float(hess_chart[m - 1, m - 1])
        psi_hess = -(
            G_tt
            + np.outer(G_ts, psi_grad)
            + np.outer(psi_grad, G_ts)
            + G_ss * np.outer(psi_grad, psi_grad)
        ) / G_s
        return GraphJet(Jet2(s, psi_grad, 0.5 * (psi_hess + psi_hess.T)), m)

    def boundary_point(self, t) -> np.ndarray:
        return self.ambient(t, self.height(t))


def mean_curvature_routes(dom: ImplicitDomain, frame: BoundaryFrame, t_offset=None):
    """H through all three routes at one boundary point.

    With t_offset the graph route is evaluated at a nearby chart parameter
    (and the other two routes at the matching boundary point), so the full
    nonzero-gradient graph formula is exercised, not just its reduction.
    """
    chart = GraphChart(dom, frame.w)
    if t_offset is None:
        t = np.zeros(dom.dim - 1)
        w_eval = frame.w
        frame_eval = frame
    else:
        from .domain import boundary_frame

        t = np.asarray(t_offset, dtype=float)
        w_eval = chart.boundary_point(t)
        frame_eval = boundary_frame(dom, w_eval)
    h_graph = mean_curvature_graph(chart.psi_jet(t))
    h_implicit = mean_curvature_implicit(dom, w_eval)
    h_frame = float(np.sum(frame_eval.kappas) / (dom.dim - 1))
    return {"graph": h_graph, "implicit": h_implicit, "frame": h_frame}
