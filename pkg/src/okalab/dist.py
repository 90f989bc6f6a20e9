"""Distance to the boundary: nearest points, medial axis, distance Hessians.

The nearest-point solver is a multistart: boundary seeds come from casting
rays from the query point toward a well-spread direction set (every sign
change of F along a ray is bisected), and each seed is refined by damped
closest-point iteration followed by Newton on the Lagrange system

    (w - x) - lambda * grad F(w) = 0,   F(w) = 0.

Distinct minimizers within a relative factor (1 + tol_multi) of the optimum
are all reported; two or more of them separated by more than sep_min flag
the point as lying on the medial axis.

For scan workloads there is a warm-start path: distances of many points
near a resolved query are obtained by continuing each known nearest-branch
point, which is orders of magnitude cheaper than a fresh multistart and
exact off the medial axis because the distance is stationary in the foot
point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import ImplicitDomain, contains
from .errors import (
    FocalPointError,
    MedialStencilError,
    OkalabError,
    SolverConvergenceError,
)
from .quadrature import sphere_directions

TOL_MULTI = 1e-6
SEP_MIN_FACTOR = 1e-3
K_MAX_DEFAULT = 8


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned product grid: per-axis (min, max, n)."""

    axes: tuple

    def points(self) -> np.ndarray:
        ticks = [np.linspace(lo, hi, int(n)) for lo, hi, n in self.axes]
        mesh = np.meshgrid(*ticks, indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh], axis=1)

    @property
    def shape(self):
        return tuple(int(n) for _, _, n in self.axes)

    def to_dict(self):
        return {"axes": [[lo, hi, int(n)] for lo, hi, n in self.axes]}


def grid_for_domain(dom: ImplicitDomain, n_per_axis: int, margin: float = 0.0) -> GridSpec:
    axes = tuple(
        (lo + margin, hi - margin, n_per_axis) for lo, hi in dom.bbox
    )
    return GridSpec(axes)


@dataclass(frozen=True)
class DistanceResult:
    """Distance query answer at a point.

    nearest holds every minimizer within a factor (1 + tol_multi) of d;
    candidates additionally keeps near-optimal feet (used to warm-start
    neighboring queries); grad is None exactly on the medial axis.
    """

    x: np.ndarray
    d: float
    signed: float
    nearest: np.ndarray
    grad: np.ndarray | None
    medial_axis: bool
    saturated: bool
    candidates: np.ndarray
    candidate_dists: np.ndarray

    @property
    def gap(self) -> float:
        """Distance margin between the optimal and the next distinct branch."""
        if len(self.candidate_dists) < 2:
            return np.inf
        return float(self.candidate_dists[1] - self.candidate_dists[0])

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "d": self.d,
            "signed": self.signed,
            "nearest": self.nearest.tolist(),
            "grad": None if self.grad is None else self.grad.tolist(),
            "medial_axis": self.medial_axis,
            "saturated": self.saturated,
        }


@dataclass(frozen=True)
class DomainMetrics:
    inradius: float
    incenter: np.ndarray
    grid_resolution: float

    def to_dict(self):
        return {
            "inradius": self.inradius,
            "incenter": self.incenter.tolist(),
            "grid_resolution": self.grid_resolution,
        }


@dataclass
class MedialAxisReport:
    points: np.ndarray
    d: np.ndarray
    n_nearest: np.ndarray
    flags: np.ndarray
    skipped: list = field(default_factory=list)

    @property
    def flagged_points(self) -> np.ndarray:
        return self.points[self.flags]

    @property
    def fraction_flagged(self) -> float:
        return float(np.mean(self.flags)) if len(self.flags) else 0.0

    def to_dict(self):
        return {
            "n_points": int(len(self.points)),
            "n_flagged": int(np.sum(self.flags)),
            "fraction_flagged": self.fraction_flagged,
            "n_skipped": len(self.skipped),
        }


class DistanceField:
    """Distance solver bound to one domain; queries are pure and reusable."""

    def __init__(
        self,
        dom: ImplicitDomain,
        n_rays: int = 18,
        samples_per_ray: int = 24,
        pool_seeds: int = 32,
        tol_multi: float = TOL_MULTI,
        sep_min_factor: float = SEP_MIN_FACTOR,
    ):
        self.dom = dom
        self.directions = sphere_directions(dom.dim, n_rays)
        self.samples_per_ray = samples_per_ray
        self.pool_seeds = pool_seeds
        self.scale = dom.diameter
        self.tol_multi = tol_multi
        self.sep_min = sep_min_factor * self.scale
        self._pool = None
        self.pool_spacing = np.inf

    @property
    def pool(self) -> np.ndarray:
        """Coarse global cover of the boundary, built once per field.

        Sign changes of F along the lines of a bbox grid are bisected to
        boundary points.  Rays alone can miss small far-away boundary
        components (a tiny inner wall subtends a tiny solid angle); the
        nearest pool points are always added to the seed set, which makes
        the multistart cover every component at pool resolution.
        """
        if self._pool is None:
            self._pool = self._build_pool()
        return self._pool

    def _build_pool(self) -> np.ndarray:
        m = self.dom.dim
        per_axis = {1: 512, 2: 96, 3: 36, 4: 18}.get(m, 11)
        widths = self.dom.bbox[:, 1] - self.dom.bbox[:, 0]
        self.pool_spacing = float(np.max(widths)) / (per_axis - 1)
        ticks = [np.linspace(lo, hi, per_axis) for lo, hi in self.dom.bbox]
        mesh = np.meshgrid(*ticks, indexing="ij")
        pts = np.stack([g.reshape(-1) for g in mesh], axis=1)
        vals = self._values(pts).reshape([per_axis] * m)
        grid = np.stack(mesh, axis=-1)
        seg_a = []
        seg_b = []
        for axis in range(m):
            sl_a = [slice(None)] * m
            sl_b = [slice(None)] * m
            sl_a[axis] = slice(None, -1)
            sl_b[axis] = slice(1, None)
            va = vals[tuple(sl_a)]
            vb = vals[tuple(sl_b)]
            mask = np.isfinite(va) & np.isfinite(vb) & (va * vb < 0)
            if not mask.any():
                continue
            pa = grid[tuple(sl_a)][mask]
            pb = grid[tuple(sl_b)][mask]
            seg_a.append(pa)
            seg_b.append(pb)
        if not seg_a:
            return np.empty((0, m))
        A = np.concatenate(seg_a)
        B = np.concatenate(seg_b)
        fa = self._values(A)
        for _ in range(40):
            mid = 0.5 * (A + B)
            fm = self._values(mid)
            fm = np.where(np.isfinite(fm), fm, 0.0)
            same = fm * fa > 0
            A = np.where(same[:, None], mid, A)
            fa = np.where(same, fm, fa)
            B = np.where(same[:, None], B, mid)
        return 0.5 * (A + B)

    # -- low-level field evaluation ------------------------------------

    def _values(self, pts: np.ndarray) -> np.ndarray:
        """F on a batch; undefined points become nan instead of raising."""
        try:
            v, _, _ = self.dom.jets(pts, order=0)
            return v
        except OkalabError:
            pass
        if len(pts) == 1:
            return np.array([np.nan])
        half = len(pts) // 2
        return np.concatenate([self._values(pts[:half]), self._values(pts[half:])])

    def _jet1(self, pts: np.ndarray):
        """(F, grad F) on a batch; undefined points become nan rows."""
        try:
            v, g, _ = self.dom.jets(pts, order=1)
            return v, g
        except OkalabError:
            pass
        if len(pts) == 1:
            return np.array([np.nan]), np.full((1, pts.shape[1]), np.nan)
        half = len(pts) // 2
        va, ga = self._jet1(pts[:half])
        vb, gb = self._jet1(pts[half:])
        return np.concatenate([va, vb]), np.concatenate([ga, gb])

    def _jet2(self, pts: np.ndarray):
        try:
            return self.dom.jets(pts, order=2)
        except OkalabError:
            pass
        if len(pts) == 1:
            m = pts.shape[1]
            return (
                np.array([np.nan]),
                np.full((1, m), np.nan),
                np.full((1, m, m), np.nan),
            )
        half = len(pts) // 2
        a = self._jet2(pts[:half])
        b = self._jet2(pts[half:])
        return tuple(np.concatenate([x, y]) for x, y in zip(a, b))

    # -- seeding ---------------------------------------------------------

    def _ray_seeds(self, x: np.ndarray) -> np.ndarray:
        dirs = self.directions
        lo = self.dom.bbox[:, 0]
        hi = self.dom.bbox[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (lo[None, :] - x[None, :]) / dirs
            t_hi = (hi[None, :] - x[None, :]) / dirs
        t_exit = np.where(dirs > 0, t_hi, np.where(dirs < 0, t_lo, np.inf)).min(axis=1)
        t_exit = np.minimum(t_exit, 2.0 * self.scale)
        ts = np.linspace(0.0, 1.0, self.samples_per_ray)[None, :] * t_exit[:, None]
        pts = x[None, None, :] + ts[:, :, None] * dirs[:, None, :]
        vals = self._values(pts.reshape(-1, self.dom.dim)).reshape(ts.shape)
        sign = np.sign(vals)
        flip = np.zeros_like(sign, dtype=bool)
        flip[:, 1:] = (sign[:, :-1] * sign[:, 1:] < 0) & np.isfinite(
            vals[:, :-1]
        ) & np.isfinite(vals[:, 1:])
        exact = np.argwhere(vals == 0.0)
        exact_pts = (
            pts[exact[:, 0], exact[:, 1]] if exact.size else np.empty((0, self.dom.dim))
        )
        rows, cols = np.nonzero(flip)
        if rows.size == 0:
            return exact_pts
        t_a = ts[rows, cols - 1]
        t_b = ts[rows, cols]
        v_a = vals[rows, cols - 1]
        u = dirs[rows]
        # vectorized bisection preserving the sign of the left endpoint;
        # seeds only need to land in the right basin, Newton polishes them
        for _ in range(26):
            t_mid = 0.5 * (t_a + t_b)
            v_mid = self._values(x[None, :] + t_mid[:, None] * u)
            bad = ~np.isfinite(v_mid)
            v_mid = np.where(bad, 0.0, v_mid)
            same = v_mid * v_a > 0
            t_a = np.where(same, t_mid, t_a)
            v_a = np.where(same, v_mid, v_a)
            t_b = np.where(same, t_b, t_mid)
        t_root = 0.5 * (t_a + t_b)
        seeds = x[None, :] + t_root[:, None] * u
        if len(exact_pts):
            seeds = np.concatenate([seeds, exact_pts])
        return seeds

    # -- refinement ------------------------------------------------------

    @staticmethod
    def _safe_norm2(g):
        gn2 = np.einsum("ni,ni->n", g, g)
        return np.where(~np.isfinite(gn2) | (gn2 < 1e-28), 1.0, gn2)

    def _project(self, W):
        """One first-order Newton step of F = 0 along the gradient."""
        v, g = self._jet1(W)
        v = np.where(np.isfinite(v), v, 0.0)
        g = np.where(np.isfinite(g), g, 0.0)
        return W - (v / self._safe_norm2(g))[:, None] * g, g

    def _closest_point_iterate(self, Y: np.ndarray, W: np.ndarray, iters: int):
        """Damped tangential descent with reprojection; batched over rows."""
        for _ in range(iters):
            W, g = self._project(W)
            gn2 = self._safe_norm2(g)
            diff = Y - W
            tang = diff - (np.einsum("ni,ni->n", diff, g) / gn2)[:, None] * g
            base = np.linalg.norm(diff, axis=1)
            accepted = np.zeros(len(W), dtype=bool)
            result = W.copy()
            scale_row = np.ones(len(W))
            for _ in range(8):
                trial, _ = self._project(W + scale_row[:, None] * tang)
                better = np.linalg.norm(Y - trial, axis=1) <= base + 1e-15
                newly = better & ~accepted
                result[newly] = trial[newly]
                accepted |= better
                if accepted.all():
                    break
                scale_row = np.where(accepted, scale_row, 0.5 * scale_row)
            W = result
        return W

    def _foot_validity(self, Y: np.ndarray, W: np.ndarray) -> np.ndarray:
        """A foot is valid when it sits on the surface and is stationary.

        Off-surface feet must never enter a distance minimum: they can
        underestimate the true distance.
        """
        v, g = self._jet1(W)
        gn = np.sqrt(self._safe_norm2(g))
        diff = Y - W
        tang = diff - (np.einsum("ni,ni->n", diff, g) / gn**2)[:, None] * g
        # positional off-surface error |F|/||grad F|| at rounding level
        on_surface = np.isfinite(v) & (np.abs(v) <= 1e-10 * self.scale * gn)
        stationary = np.linalg.norm(tang, axis=1) <= 1e-7 * self.scale
        return on_surface & stationary

    def _newton_lagrange(
        self, Y: np.ndarray, W: np.ndarray, iters: int = 8, step_tol: float = 1e-13
    ):
        """Newton on the Lagrange system, iterating only unconverged rows.

        Rows are independent, so converged rows drop out of the working set
        and the batch shrinks fast once the quadratic regime is reached.
        Divergent rows keep their last iterate; callers decide validity.
        """
        n, m = W.shape
        W = W.copy()
        lam = np.zeros(n)
        active = np.arange(n)
        first = True
        for _ in range(iters):
            if active.size == 0:
                break
            Wa = W[active]
            Ya = Y[active]
            v, g, h = self._jet2(Wa)
            if first:
                lam0 = np.einsum("ni,ni->n", Wa - Ya, g) / self._safe_norm2(g)
                lam[active] = np.where(np.isfinite(lam0), lam0, 0.0)
                first = False
            lama = lam[active]
            finite = (
                np.isfinite(v)
                & np.all(np.isfinite(g), axis=1)
                & np.all(np.isfinite(h), axis=(1, 2))
            )
            g = np.where(finite[:, None], g, 0.0)
            r1 = (Wa - Ya) - lama[:, None] * g
            r2 = np.where(finite, v, 0.0)
            k = active.size
            J = np.zeros((k, m + 1, m + 1))
            J[:, :m, :m] = np.eye(m)[None, :, :]
            J[finite, :m, :m] -= lama[finite, None, None] * h[finite]
            J[:, :m, m] = -g
            J[:, m, :m] = g
            J[~finite, m, m] = 1.0
            rhs = np.concatenate([-r1, -r2[:, None]], axis=1)
            try:
                delta = np.linalg.solve(J, rhs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
            step = delta[:, :m]
            step_norm = np.linalg.norm(step, axis=1)
            ok = finite & np.isfinite(step_norm) & (step_norm < 0.25 * self.scale)
            moved = active[ok]
            W[moved] += step[ok]
            lam[moved] += delta[ok, m]
            active = active[ok & (step_norm > step_tol * self.scale)]
        return W

    def branch_corrector(self, w_b, d_b: float):
        """First-order foot-shift matrix at a branch foot seen from distance d_b.

        A query offset delta moves the foot by about T (I - d K)^{-1} T^T delta
        (the same denominators as the distance Hessian), which puts the warm
        start second-order close and lets Newton converge in one or two steps.
        Returns None when d_b is too close to the focal bound.
        """
        from .linalg import orthonormal_tangent_basis

        jet = self.dom.jet2(np.asarray(w_b, dtype=float))
        gn = np.linalg.norm(jet.gradient)
        if gn < 1e-12:
            return None
        nu = -jet.gradient / gn
        T = orthonormal_tangent_basis(nu)
        K = T @ jet.hessian @ T.T / gn
        M = np.eye(len(K)) - d_b * K
        try:
            if np.linalg.cond(M) > 1e3:
                # at the focal bound the shift blows up; fall back to the
                # plain tangent projector and let Newton do the work
                return T.T @ T
            inv = np.linalg.inv(M)
        except np.linalg.LinAlgError:
            return T.T @ T
        return T.T @ inv @ T

    def distance_from_starts(
        self,
        Y: np.ndarray,
        starts: np.ndarray,
        normals=None,
        correctors=None,
        step_tol: float = 1e-13,
    ):
        """Per-row foot continuation: distances of Y from given start feet.

        Returns (d, valid).  Feet are transported along the tangent plane at
        the start (with the curvature corrector when provided), polished by
        Newton, and validated (on-surface and stationary); invalid rows are
        retried with the damped iteration.
        """
        Y = np.asarray(Y, dtype=float)
        starts = np.asarray(starts, dtype=float)
        offsets = Y - starts
        if correctors is not None:
            shift = np.einsum("nij,nj->ni", correctors, offsets)
        else:
            if normals is None:
                _, g = self._jet1(starts)
                normals = g / np.sqrt(self._safe_norm2(g))[:, None]
            shift = (
                offsets
                - np.einsum("ni,ni->n", offsets, normals)[:, None] * normals
            )
        W = self._newton_lagrange(Y, starts + shift, step_tol=step_tol)
        valid = self._foot_validity(Y, W)
        if not valid.all():
            idx = np.nonzero(~valid)[0]
            W_retry = self._closest_point_iterate(Y[idx], starts[idx], iters=8)
            W_retry = self._newton_lagrange(Y[idx], W_retry, iters=4)
            W[idx] = W_retry
            valid = self._foot_validity(Y, W)
        return np.linalg.norm(Y - W, axis=1), valid

    def continue_feet_fast(self, Y: np.ndarray, starts: np.ndarray, correctors):
        """One-Newton foot continuation for second-order-close warm starts.

        The curvature-corrected transport leaves foot errors of order
        offset^2, one Newton step drives them to rounding level, and a
        single fused jet both projects the foot onto the surface and
        validates it.  Distances inherit second-order accuracy from the
        stationarity of the distance in the foot point.  Returns (d, valid);
        invalid rows must be recomputed by the caller.
        """
        Y = np.asarray(Y, dtype=float)
        offsets = Y - starts
        shift = np.einsum("nij,nj->ni", correctors, offsets)
        W = self._newton_lagrange(Y, starts + shift, iters=1, step_tol=1e30)
        v, g = self._jet1(W)
        v = np.where(np.isfinite(v), v, np.inf)
        gn2 = self._safe_norm2(g)
        gn = np.sqrt(gn2)
        g = np.where(np.isfinite(g), g, 0.0)
        W = W - (np.where(np.isfinite(v), v, 0.0) / gn2)[:, None] * g
        diff = Y - W
        tang = diff - (np.einsum("ni,ni->n", diff, g) / gn2)[:, None] * g
        valid = (np.abs(v) <= 1e-6 * self.scale * gn) & (
            np.linalg.norm(tang, axis=1) <= 1e-6 * self.scale
        )
        return np.linalg.norm(Y - W, axis=1), valid

    def distance_pool_fallback(self, Y: np.ndarray) -> np.ndarray:
        """Robust batched distances seeded from the global boundary pool.

        Used for the rare rows where branch continuation is inconsistent
        (near focal or umbilic degeneracies): the 16 nearest pool points of
        each row cover every competitive branch at pool resolution.
        """
        Y = np.asarray(Y, dtype=float)
        pool = self.pool
        k = min(16, len(pool))
        out = np.full(len(Y), np.inf)
        for lo in range(0, len(Y), 1024):
            hi = min(lo + 1024, len(Y))
            block = Y[lo:hi]
            dists = np.linalg.norm(
                pool[None, :, :] - block[:, None, :], axis=2
            )
            idx = np.argpartition(dists, k - 1, axis=1)[:, :k]
            starts = pool[idx.reshape(-1)]
            YY = np.repeat(block, k, axis=0)
            d_rows, valid = self.distance_from_starts(YY, starts, step_tol=1e-8)
            d_rows = np.where(valid, d_rows, np.inf)
            out[lo:hi] = d_rows.reshape(-1, k).min(axis=1)
        for i in np.nonzero(~np.isfinite(out))[0]:
            out[i] = self.query(Y[i]).d
        return out

    # -- public queries ----------------------------------------------------

    def _pool_candidate_seeds(self, x: np.ndarray) -> np.ndarray:
        """Pool points near every competitive boundary branch, thinned.

        Keeps pool points within a factor ~1.8 of the nearest one (plus the
        pool resolution), then greedily thins them to pool_seeds by farthest
        point selection so all branches keep representatives.
        """
        pool = self.pool
        if not len(pool):
            return np.empty((0, self.dom.dim))
        dists = np.linalg.norm(pool - x[None, :], axis=1)
        d_est = float(dists.min())
        cutoff = max(1.8 * d_est, d_est + 2.0 * self.pool_spacing)
        near = pool[dists <= cutoff]
        if len(near) <= self.pool_seeds:
            return near
        order = np.argsort(dists[dists <= cutoff], kind="stable")
        near = near[order]
        chosen = [0]
        min_dist = np.linalg.norm(near - near[0], axis=1)
        for _ in range(self.pool_seeds - 1):
            idx = int(np.argmax(min_dist))
            if min_dist[idx] <= 1e-12:
                break
            chosen.append(idx)
            min_dist = np.minimum(
                min_dist, np.linalg.norm(near - near[idx], axis=1)
            )
        return near[chosen]

    def query(self, x, k_max: int = K_MAX_DEFAULT) -> DistanceResult:
        """Full multistart distance query; raises if nothing converges."""
        x = np.asarray(x, dtype=float)
        seeds = self._ray_seeds(x)
        pool_seeds = self._pool_candidate_seeds(x)
        if len(pool_seeds):
            seeds = (
                np.concatenate([seeds, pool_seeds]) if len(seeds) else pool_seeds
            )
        if len(seeds) == 0:
            raise SolverConvergenceError(
                f"no boundary crossing found from {x.tolist()} in {self.dom.label}"
            )
        X_rep = np.repeat(x[None, :], len(seeds), axis=0)
        W = self._closest_point_iterate(X_rep, seeds, iters=5)
        W = self._newton_lagrange(X_rep, W)
        vals, grads = self._jet1(W)
        gn = np.sqrt(self._safe_norm2(grads))
        valid = np.isfinite(vals) & (np.abs(vals) <= 1e-9 * self.scale * gn)
        W = W[valid]
        if len(W) == 0:
            raise SolverConvergenceError(
                f"multistart budget exhausted at {x.tolist()} in {self.dom.label}"
            )
        dists = np.linalg.norm(W - x[None, :], axis=1)
        order = np.lexsort(tuple(W[:, i] for i in range(W.shape[1] - 1, -1, -1)))
        order = order[np.argsort(dists[order], kind="stable")]
        W = W[order]
        dists = dists[order]
        d = float(dists[0])
        # deduplicate feet, closest representative first
        reps = []
        rep_d = []
        for k in range(len(W)):
            if dists[k] > 1.75 * d + 1e-12:
                break
            if all(np.linalg.norm(W[k] - r) > 0.25 * self.sep_min for r in reps):
                reps.append(W[k])
                rep_d.append(dists[k])
            if len(reps) >= 2 * k_max:
                break
        candidates = np.array(reps)
        candidate_dists = np.array(rep_d)
        near_mask = candidate_dists <= d * (1.0 + self.tol_multi) + 1e-15
        near = candidates[near_mask]
        saturated = len(near) > k_max
        near = near[:k_max]
        medial = False
        if len(near) >= 2:
            span = max(
                np.linalg.norm(a - b) for i, a in enumerate(near) for b in near[i + 1 :]
            )
            medial = bool(span > self.sep_min)
        grad = None
        if not medial:
            w = near[0]
            delta = x - w
            norm = np.linalg.norm(delta)
            grad = delta / norm if norm > 0 else None
        f_x = self._values(x[None, :])[0]
        signed = -d if (np.isfinite(f_x) and f_x < 0) else d
        return DistanceResult(
            x=x,
            d=d,
            signed=signed,
            nearest=near,
            grad=grad,
            medial_axis=medial,
            saturated=saturated,
            candidates=candidates,
            candidate_dists=candidate_dists,
        )

    def distance_from_branches(self, Y: np.ndarray, branches: np.ndarray):
        """Distances of many points by continuing known nearest-branch feet.

        Returns (d, gap) where gap is the margin between the winning branch
        and the runner-up (inf for a single branch).  d has second-order
        accuracy in the foot-point error since distance is stationary there.
        """
        Y = np.asarray(Y, dtype=float)
        branches = np.atleast_2d(np.asarray(branches, dtype=float))
        B, N = len(branches), len(Y)
        _, gB = self._jet1(branches)
        normalsB = gB / np.sqrt(self._safe_norm2(gB))[:, None]
        YY = np.tile(Y, (B, 1))
        SS = np.repeat(branches, N, axis=0)
        NN = np.repeat(normalsB, N, axis=0)
        d_rows, valid = self.distance_from_starts(
            YY, SS, normals=NN, step_tol=1e-8
        )
        per_branch = np.where(valid, d_rows, np.inf).reshape(B, N)
        d = per_branch.min(axis=0)
        # rows with no converged branch get a fresh multistart (rare)
        for i in np.nonzero(~np.isfinite(d))[0]:
            d[i] = self.query(Y[i]).d
        if B == 1:
            gap = np.full(N, np.inf)
        else:
            part = np.sort(per_branch, axis=0)
            gap = part[1] - part[0]
        return d, gap

    def signed_distance(self, x) -> float:
        return self.query(x).signed


# ---------------------------------------------------------------------------
# spec-level free functions
# ---------------------------------------------------------------------------

def nearest_boundary_points(
    dom: ImplicitDomain, x, k_max: int = K_MAX_DEFAULT
) -> DistanceResult:
    return DistanceField(dom).query(x, k_max=k_max)


def signed_distance(dom: ImplicitDomain, x) -> float:
    return DistanceField(dom).query(np.asarray(x, dtype=float)).signed


def medial_axis_scan(dom: ImplicitDomain, grid: GridSpec, field: DistanceField | None = None) -> MedialAxisReport:
    """Flag all interior grid points with multiple nearest boundary points."""
    field = field or DistanceField(dom)
    pts = grid.points()
    keep = []
    for p in pts:
        try:
            if contains(dom, p):
                keep.append(p)
        except OkalabError:
            continue
    report = MedialAxisReport(
        points=np.array(keep) if keep else np.empty((0, dom.dim)),
        d=np.zeros(len(keep)),
        n_nearest=np.zeros(len(keep), dtype=int),
        flags=np.zeros(len(keep), dtype=bool),
    )
    for i, p in enumerate(report.points):
        try:
            res = field.query(p)
        except OkalabError as exc:
            report.skipped.append((p.tolist(), str(exc)))
            continue
        report.d[i] = res.d
        report.n_nearest[i] = len(res.nearest)
        report.flags[i] = res.medial_axis
    return report


def inradius(
    dom: ImplicitDomain,
    grid: GridSpec | None = None,
    refinement_rounds: int = 6,
    field: DistanceField | None = None,
) -> DomainMetrics:
    """Largest inscribed ball radius by grid search plus local refinement.

    Monotone under refinement: the best point is never discarded.
    """
    field = field or DistanceField(dom)
    grid = grid or grid_for_domain(dom, 9)
    pts = grid.points()
    best_d = -np.inf
    best_x = None
    for p in pts:
        try:
            if not contains(dom, p):
                continue
            res = field.query(p)
        except OkalabError:
            continue
        if res.d > best_d:
            best_d, best_x = res.d, p
    if best_x is None:
        raise OkalabError("empty interior grid: no interior point found")
    widths = np.array([(hi - lo) / (n - 1 if n > 1 else 1) for lo, hi, n in grid.axes])
    h = widths.max()
    for _ in range(refinement_rounds):
        h *= 0.5
        offsets = np.array(
            np.meshgrid(*[[-h, 0.0, h]] * dom.dim, indexing="ij")
        ).reshape(dom.dim, -1).T
        for off in offsets:
            p = best_x + off
            try:
                if not contains(dom, p):
                    continue
                res = field.query(p)
            except OkalabError:
                continue
            if res.d > best_d:
                best_d, best_x = res.d, p
    return DomainMetrics(inradius=float(best_d), incenter=best_x, grid_resolution=float(h))


def distance_hessian_closed_form(kappas, t: float) -> np.ndarray:
    """Hessian of the distance in principal coordinates: diag(-k/(1-t k), 0).

    Valid while every denominator 1 - t*kappa_i stays positive; a violation
    means t reaches the focal bound and raises FocalPointError.
    """
    kappas = np.asarray(kappas, dtype=float)
    denom = 1.0 - t * kappas
    if np.any(denom <= 0.0):
        raise FocalPointError(
            f"1 - t*kappa <= 0 for t={t}: point beyond the focal distance"
        )
    m = len(kappas) + 1
    out = np.zeros((m, m))
    out[: m - 1, : m - 1] = np.diag(-kappas / denom)
    return out


def distance_hessian_numeric(
    dom: ImplicitDomain, x, field: DistanceField | None = None
) -> np.ndarray:
    """Central-difference Hessian of the signed distance, one Richardson level.

    Refuses when the stencil may touch the medial axis (multiplicity within
    reach of the stencil), so the kink never silently corrupts derivatives.
    """
    field = field or DistanceField(dom)
    x = np.asarray(x, dtype=float)
    res = field.query(x)
    m = dom.dim
    h = max(1e-4, 1e-3 * res.d)
    reach = 4.0 * h * np.sqrt(m)
    if res.medial_axis or res.gap < reach:
        raise MedialStencilError(
            f"stencil of width {h:.2e} at {x.tolist()} touches the medial axis"
        )
    branches = res.candidates

    def hess_at_step(step):
        pts = [x]
        for i in range(m):
            ei = np.zeros(m)
            ei[i] = step
            pts.extend([x + ei, x - ei])
        pairs = []
        for i in range(m):
            for j in range(i + 1, m):
                ei = np.zeros(m)
                ej = np.zeros(m)
                ei[i] = step
                ej[j] = step
                pairs.append((i, j))
                pts.extend([x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej])
        d_all, gap = field.distance_from_branches(np.array(pts), branches)
        if np.any(gap < 0.5 * reach):
            raise MedialStencilError(
                f"stencil at {x.tolist()} reaches a multiplicity region"
            )
        u = d_all  # the stencil never crosses the boundary, so |delta| = d
        H = np.zeros((m, m))
        u0 = u[0]
        for i in range(m):
            up, um = u[1 + 2 * i], u[2 + 2 * i]
            H[i, i] = (up - 2.0 * u0 + um) / step**2
        base = 1 + 2 * m
        for k, (i, j) in enumerate(pairs):
            upp, upm, ump, umm = u[base + 4 * k : base + 4 * k + 4]
            H[i, j] = H[j, i] = (upp - upm - ump + umm) / (4.0 * step**2)
        return H

    coarse = hess_at_step(h)
    fine = hess_at_step(0.5 * h)
    H = (4.0 * fine - coarse) / 3.0
    return 0.5 * (H + H.T)
