"""Ball means, the generalized upper Laplace parameter, and theorem scans.

The generalized upper Laplace parameter of u at x is

    2 (m+2) limsup_{r -> 0} (M_u(x, r) - u(x)) / r^2

with M_u the ball mean.  It is estimated on a dyadic radius ladder with
Richardson extrapolation; at points where u is not C^2 (medial-axis kinks)
the limsup is realized conservatively as the max quotient over the smallest
radii, which by the sup-representation of the distance potentials is still
bounded below by the closed-form family floor.

The scans certify, at desk scale, the subharmonicity statements for
-log d, d^(2-m) and -d, and the plurisubharmonicity of -log d on
pseudoconvex domains in C^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ImplicitDomain, contains_safe
from .dist import DistanceField, GridSpec
from .errors import BallNotContainedError, FocalPointError, OkalabError
from .levi import (
    ComplexStructure,
    complex_hessian,
    complex_tangent_real_part,
    principal_frame_rows,
)
from .linalg import hermitian_eigvals
from .quadrature import ball_nodes

DEFAULT_TOL = 1e-4
LADDER_LEVELS = 6


@dataclass(frozen=True)
class LadderSpec:
    """Dyadic radius ladder r_k = r0 * 2^-k for k = 0..levels."""

    r0: float
    levels: int = LADDER_LEVELS
    shrink: bool = True

    def radii(self) -> np.ndarray:
        return self.r0 * 0.5 ** np.arange(self.levels + 1)


def auto_ladder(d_at_x: float, diameter: float, levels: int = LADDER_LEVELS) -> LadderSpec:
    return LadderSpec(r0=min(0.2 * d_at_x, 0.05 * diameter), levels=levels)


@dataclass(frozen=True)
class LaplacianEstimate:
    """Ladder of ball means and the extrapolated Laplace parameter at x."""

    x: np.ndarray
    radii: np.ndarray
    means: np.ndarray
    quotients: np.ndarray
    extrapolated: float
    conservative_sup: float
    order: float
    misfit: bool

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "radii": self.radii.tolist(),
            "quotients": self.quotients.tolist(),
            "extrapolated": self.extrapolated,
            "conservative_sup": self.conservative_sup,
            "order": self.order,
            "misfit": self.misfit,
        }


def ball_mean(u, x, r: float, m: int, d_at_x: float | None = None) -> float:
    """Quadrature mean of u over B(x, r).

    u maps an (N, m) batch of points to N values.  The product rule (16
    Gauss-Legendre radii x a degree-5-exact spherical set) is exact for
    polynomials of total degree <= 5; for smooth u the error is O(r^6).
    """
    x = np.asarray(x, dtype=float)
    if d_at_x is not None and d_at_x <= r:
        raise BallNotContainedError(
            f"ball of radius {r} at {x.tolist()} is not inside the domain (d={d_at_x})"
        )
    offsets, weights = ball_nodes(m)
    return float(weights @ u(x[None, :] + r * offsets))


def upper_laplace_parameter(
    u, x, ladder: LadderSpec, m: int, d_at_x: float | None = None
) -> LaplacianEstimate:
    """Estimate the generalized upper Laplace parameter of u at x."""
    x = np.asarray(x, dtype=float)
    r0 = ladder.r0
    if d_at_x is not None and r0 >= d_at_x:
        if not ladder.shrink:
            raise BallNotContainedError(
                f"ladder r0={r0} does not fit at distance {d_at_x}"
            )
        r0 = 0.2 * d_at_x
    radii = r0 * 0.5 ** np.arange(ladder.levels + 1)
    offsets, weights = ball_nodes(m)
    nodes = x[None, None, :] + radii[:, None, None] * offsets[None, :, :]
    values = u(nodes.reshape(-1, m)).reshape(len(radii), -1)
    u_x = float(u(x[None, :])[0])
    means = values @ weights
    quotients = 2.0 * (m + 2) * (means - u_x) / radii**2
    extrapolated, order, misfit = _richardson(quotients)
    half = max(3, (ladder.levels + 1) // 2)
    conservative = float(np.max(quotients[-half:]))
    return LaplacianEstimate(
        x=x,
        radii=radii,
        means=means,
        quotients=quotients,
        extrapolated=extrapolated,
        conservative_sup=conservative,
        order=order,
        misfit=misfit,
    )


def _richardson(quotients: np.ndarray):
    """Two Richardson levels on a ratio-2 ladder, plus an observed order.

    Returns (extrapolated, order, misfit).  Flat sequences (exact
    polynomials) report order = inf; sequences whose differences do not
    decay like r^2 are flagged as misfits so callers can fall back to the
    conservative sup, honoring the limsup in the definition.
    """
    q = np.asarray(quotients, dtype=float)
    if len(q) < 3:
        return float(q[-1]), math.inf, False
    scale = max(1.0, float(np.max(np.abs(q))))
    diffs = np.abs(np.diff(q))
    noise = 1e-11 * scale
    orders = []
    for k in range(len(diffs) - 1):
        if diffs[k] > noise and diffs[k + 1] > noise:
            orders.append(math.log2(diffs[k] / diffs[k + 1]))
    if not orders:
        return float(q[-1]), math.inf, False
    order = float(np.median(orders))
    q1 = (4.0 * q[1:] - q[:-1]) / 3.0
    q2 = (16.0 * q1[1:] - q1[:-1]) / 15.0 if len(q1) >= 2 else q1
    extrapolated = float(q2[-1])
    misfit = order < 1.0 or not np.isfinite(extrapolated)
    return extrapolated, order, misfit


# ---------------------------------------------------------------------------
# closed forms for the distance potentials
# ---------------------------------------------------------------------------

def _check_focal(d: float, kappas: np.ndarray):
    if np.any(1.0 - d * kappas <= 0.0):
        raise FocalPointError(f"1 - d*kappa <= 0 at d={d}")


def laplacian_neg_log_distance_closed(d: float, kappas) -> float:
    """Laplacian of -log d off the cut locus: 1/d^2 + sum k/(d (1 - d k))."""
    kappas = np.asarray(kappas, dtype=float)
    _check_focal(d, kappas)
    return float(1.0 / d**2 + np.sum(kappas / (d * (1.0 - d * kappas))))


def laplacian_neg_distance_closed(d: float, kappas) -> float:
    """Laplacian of -d off the cut locus: sum k/(1 - d k)."""
    kappas = np.asarray(kappas, dtype=float)
    _check_focal(d, kappas)
    return float(np.sum(kappas / (1.0 - d * kappas)))


def laplacian_power_distance_closed(d: float, kappas, m: int) -> float:
    """Laplacian of d^(2-m), m > 2, off the cut locus (raw two-term sum)."""
    if m <= 2:
        raise OkalabError(f"d^(2-m) potential requires m > 2, got m={m}")
    kappas = np.asarray(kappas, dtype=float)
    _check_focal(d, kappas)
    lead = (m - 2) * (m - 1) / d**m
    tail = (m - 2) * np.sum(kappas / (d ** (m - 1) * (1.0 - d * kappas)))
    return float(lead + tail)


def power_distance_jensen_floor(d: float, sum_kappa: float, m: int) -> float:
    """Jensen floor of the d^(2-m) Laplacian: (m-2)(m-1)^2/(d^m (m-1 - d S)).

    This is a lower bound for the raw sum (equality only for equal kappas),
    and it is strictly positive below the focal bound.
    """
    if m <= 2:
        raise OkalabError(f"requires m > 2, got m={m}")
    denom = m - 1 - d * sum_kappa
    if denom <= 0.0:
        raise FocalPointError(f"m - 1 - d*sum(kappa) <= 0 at d={d}")
    return float((m - 2) * (m - 1) ** 2 / (d**m * denom))


def jensen_lower_bound_neg_log(d: float, sum_kappa: float, m: int) -> float:
    """Jensen floor of the -log d Laplacian:

        (m - 1 + (m-2) d S) / (d^2 (m - 1 - d S)),  S = sum kappa_i.

    Its sign matches the sign of 1 + (m-2) d H with H = S/(m-1).
    """
    denom = m - 1 - d * sum_kappa
    if denom <= 0.0:
        raise FocalPointError(f"m - 1 - d*sum(kappa) <= 0 at d={d}")
    return float((m - 1 + (m - 2) * d * sum_kappa) / (d**2 * denom))


def step3_floor_neg_log(d: float, m: int) -> float:
    """Family floor for the generalized Laplacian of -log d: -(m-2)/d^2.

    Each member -log||x - w|| of the sup family has Laplacian
    -(m-2)/||x - w||^2 >= -(m-2)/d^2, and the bound survives the supremum,
    kinks included.
    """
    return -(m - 2) / d**2


def step3_floor_neg_d(d: float, m: int) -> float:
    """Family floor for the generalized Laplacian of -d: -(m-1)/d."""
    return -(m - 1) / d


def pseudoconvex_split_bound(d: float, kappas, n: int) -> dict:
    """Split the -log d Laplacian into the smallest-curvature term plus rest.

    Returns the guaranteed positive floor 1/(d (1 - d kappa_min)), the
    two-term split bound (smallest-curvature term absorbed into 1/d^2 plus
    the Jensen bound of the others), and the full closed form, with the
    chain verdicts.  The chain full >= split >= floor requires the sum of
    the remaining curvatures to be nonnegative, which is the content of the
    curvature-selection property on pseudoconvex domains.
    """
    kappas = np.sort(np.asarray(kappas, dtype=float))
    if len(kappas) != 2 * n - 1:
        raise OkalabError(f"expected 2n-1 = {2 * n - 1} curvatures")
    _check_focal(d, kappas)
    k_min = kappas[0]
    rest = kappas[1:]
    floor = 1.0 / (d * (1.0 - d * k_min))
    combined = 1.0 / (d**2 * (1.0 - d * k_min))
    if len(rest):
        s = float(np.sum(rest))
        denom = len(rest) - d * s
        if denom <= 0.0:
            raise FocalPointError("Jensen denominator vanished in the split bound")
        two_term = combined + len(rest) * (s / len(rest)) / (d * (1.0 - d * s / len(rest)))
        rest_nonneg = s >= -1e-12
    else:
        two_term = combined
        rest_nonneg = True
    full = laplacian_neg_log_distance_closed(d, kappas)
    chain_ok = (not rest_nonneg) or (
        full >= two_term - 1e-9 * max(1.0, abs(full))
        and two_term >= floor - 1e-9 * max(1.0, abs(two_term))
    )
    return {
        "floor": floor,
        "two_term": two_term,
        "full": full,
        "rest_nonneg": rest_nonneg,
        "chain_ok": bool(chain_ok),
    }


# ---------------------------------------------------------------------------
# certificate for the plurisubharmonicity computation at a point
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertificateRecord:
    """One (W, alpha) evaluation of the Levi-positivity chain at p."""

    w_coefficients: np.ndarray
    alpha: float
    A: float
    square_completion_bound: float
    levi_term: float
    chain_ok: bool

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "A": self.A,
            "square_completion_bound": self.square_completion_bound,
            "levi_term": self.levi_term,
            "chain_ok": bool(self.chain_ok),
        }


def oka_certificate(
    dom: ImplicitDomain,
    p,
    cs: ComplexStructure,
    samples: int = 8,
    alphas=(0.0, 0.5, 1.0),
    seed: int = 0,
    field: DistanceField | None = None,
) -> dict:
    """Evaluate the positivity chain of the complex Hessian of -log d at p.

    In principal coordinates at the unique nearest boundary point, for a
    complex tangent direction W + alpha X,

        A = sum_s (w_s^2 + o_s^2 + a^2 x_s^2 + 2 a w_s x_s) k_s / (d (1 - d k_s))
            + a^2 / d^2

    is bounded below by the square-completion bound and then, via
    k/(1-dk) >= k, by the Levi term of the local defining graph function
    (scaled by 4/d), which is nonnegative exactly when the boundary is
    Levi pseudoconvex at the foot point.
    """
    from .domain import boundary_frame

    field = field or DistanceField(dom)
    p = np.asarray(p, dtype=float)
    res = field.query(p)
    if res.medial_axis:
        raise OkalabError(
            f"certificate point {p.tolist()} lies on the medial axis"
        )
    q = res.nearest[0]
    d = res.d
    frame = boundary_frame(dom, q)
    kappas = frame.kappas
    _check_focal(d, kappas)
    rows = principal_frame_rows(frame)
    J_t = rows @ cs.matrix @ rows.T
    dim = 2 * cs.n
    e_last = np.zeros(dim)
    e_last[-1] = 1.0
    chi = (-J_t @ e_last)[: dim - 1]
    U_amb, _ = complex_tangent_real_part(dom, q, cs)
    rng = np.random.default_rng(seed)
    w_list = [np.zeros(max(len(U_amb), 0))]
    for _ in range(samples):
        if len(U_amb) == 0:
            break
        coeff = rng.normal(size=len(U_amb))
        norm = np.linalg.norm(coeff)
        w_list.append(coeff / norm if norm > 0 else coeff)
    records = []
    denom = d * (1.0 - d * kappas)
    for coeff in w_list:
        W_amb = coeff @ U_amb if len(U_amb) else np.zeros(dim)
        w = (rows @ W_amb)[: dim - 1]
        omega = (rows @ (cs.matrix @ W_amb))[: dim - 1]
        for alpha in alphas:
            quad = w**2 + omega**2 + alpha**2 * chi**2 + 2.0 * alpha * w * chi
            A = float(np.sum(quad * kappas / denom) + alpha**2 / d**2)
            bound_sq = float(
                np.sum(omega**2 * kappas / denom) + np.sum(w**2 * kappas) / d
            )
            levi_term = float(np.sum((w**2 + omega**2) * kappas) / d)
            tol = 1e-9 * max(1.0, abs(A), abs(bound_sq), abs(levi_term))
            chain_ok = A >= bound_sq - tol and bound_sq >= levi_term - tol
            records.append(
                CertificateRecord(
                    w_coefficients=coeff.copy(),
                    alpha=float(alpha),
                    A=A,
                    square_completion_bound=bound_sq,
                    levi_term=levi_term,
                    chain_ok=bool(chain_ok),
                )
            )
    worst_levi = min(r.levi_term for r in records)
    return {
        "p": p,
        "q": q,
        "d": d,
        "kappas": kappas,
        "records": records,
        "all_chains_ok": all(r.chain_ok for r in records),
        "worst_levi_term": worst_levi,
    }


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

POTENTIALS = ("neg_log_d", "d_pow_2_minus_m", "neg_d")


def _potential_transform(kind: str, m: int):
    if kind == "neg_log_d":
        return lambda d: -np.log(d)
    if kind == "d_pow_2_minus_m":
        if m <= 2:
            raise OkalabError("d^(2-m) scan requires m > 2")
        return lambda d: d ** (2.0 - m)
    if kind == "neg_d":
        return lambda d: -d
    raise OkalabError(f"unknown potential {kind!r}; expected one of {POTENTIALS}")


@dataclass
class ScanPoint:
    x: np.ndarray
    d: float
    margin: float
    method: str
    flagged: bool
    step3_margin: float | None = None

    def to_dict(self):
        out = {
            "x": self.x.tolist(),
            "d": self.d,
            "margin": self.margin,
            "method": self.method,
            "flagged": bool(self.flagged),
        }
        if self.step3_margin is not None:
            out["step3_margin"] = self.step3_margin
        return out


@dataclass
class ScanReport:
    domain_label: str
    potential: str
    tol: float
    grid_meta: dict
    points: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return len(self.points) + len(self.skipped)

    @property
    def margins(self) -> np.ndarray:
        return np.array([p.margin for p in self.points])

    @property
    def violations(self) -> list:
        return [p for p in self.points if p.margin < -self.tol]

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if self.points else math.inf

    @property
    def argmin_point(self):
        if not self.points:
            return None
        return self.points[int(np.argmin(self.margins))]

    @property
    def min_step3_margin(self) -> float:
        vals = [p.step3_margin for p in self.points if p.step3_margin is not None]
        return float(min(vals)) if vals else math.inf

    def to_dict(self, include_points: bool = False):
        out = {
            "schema_version": 1,
            "domain": self.domain_label,
            "potential": self.potential,
            "tol": self.tol,
            "grid": self.grid_meta,
            "n_points": self.n_points,
            "n_evaluated": len(self.points),
            "n_violations": self.n_violations,
            "n_skipped": len(self.skipped),
            "min_margin": self.min_margin,
            "argmin": None if not self.points else self.argmin_point.to_dict(),
            "min_step3_margin": self.min_step3_margin,
        }
        if include_points:
            out["points"] = [p.to_dict() for p in self.points]
            out["skipped"] = self.skipped
        return out

    def csv_rows(self):
        for p in self.points:
            yield list(p.x) + [p.d, p.margin, int(p.flagged)]


def _interior_points(dom: ImplicitDomain, grid) -> np.ndarray:
    pts = grid.points() if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    mask = contains_safe(dom, pts)
    return pts[mask]


def subharmonicity_scan(
    dom: ImplicitDomain,
    potential_kind: str,
    grid,
    tol: float = DEFAULT_TOL,
    field: DistanceField | None = None,
    levels: int = LADDER_LEVELS,
) -> ScanReport:
    """Generalized-Laplacian margins of a distance potential on a grid.

    The margin at a point is the extrapolated Laplace-parameter estimate;
    at medial-axis flags, near-flag points (a second branch within reach of
    the largest ball) and Richardson misfits, the conservative sup over the
    smallest radii is used instead, honoring the limsup definition.  For
    the -log d and -d potentials each point also records the margin against
    the sup-family floor (-(m-2)/d^2 and -(m-1)/d).
    """
    m = dom.dim
    transform = _potential_transform(potential_kind, m)
    field = field or DistanceField(dom)
    grid_meta = grid.to_dict() if isinstance(grid, GridSpec) else {"points": "custom"}
    report = ScanReport(dom.label, potential_kind, tol, grid_meta)
    offsets, weights = ball_nodes(m)
    nodes_per_point = len(offsets) * (levels + 1)

    resolved = []
    for x in _interior_points(dom, grid):
        try:
            res = field.query(x)
        except OkalabError as exc:
            report.skipped.append({"x": x.tolist(), "reason": str(exc)})
            continue
        mask = res.candidate_dists <= res.d + 2.0 * min(
            0.2 * res.d, 0.05 * field.scale
        )
        r0 = min(0.2 * res.d, 0.05 * field.scale)
        branches = res.candidates[mask]
        correctors = [
            field.branch_corrector(wb, db)
            for wb, db in zip(branches, res.candidate_dists[mask])
        ]
        resolved.append((x, res, r0, branches, correctors))

    # chunk many points into one foot-continuation batch; rows are
    # independent so this only changes batch sizes, not results
    chunk_rows = 300_000
    identity = np.eye(m)
    start = 0
    while start < len(resolved):
        stop = start
        total = 0
        while stop < len(resolved):
            rows = nodes_per_point * len(resolved[stop][3])
            if total and total + rows > chunk_rows:
                break
            total += rows
            stop += 1
        batch = resolved[start:stop]
        YY = []
        SS = []
        CC = []
        for x, res, r0, branches, correctors in batch:
            radii = r0 * 0.5 ** np.arange(levels + 1)
            nodes = (
                x[None, None, :] + radii[:, None, None] * offsets[None, :, :]
            ).reshape(-1, m)
            for wb, corr in zip(branches, correctors):
                YY.append(nodes)
                SS.append(np.broadcast_to(wb, nodes.shape))
                C = corr if corr is not None else identity
                CC.append(np.broadcast_to(C, (len(nodes), m, m)))
        YY = np.concatenate(YY)
        SS = np.ascontiguousarray(np.concatenate(SS))
        CC = np.ascontiguousarray(np.concatenate(CC))
        d_rows, valid = field.continue_feet_fast(YY, SS, CC)
        d_rows = np.where(valid, d_rows, np.inf)
        cursor = 0
        rung_radii = np.repeat(0.5 ** np.arange(levels + 1), len(offsets))
        for x, res, r0, branches, correctors in batch:
            per_branch = d_rows[
                cursor : cursor + nodes_per_point * len(branches)
            ].reshape(len(branches), nodes_per_point)
            cursor += nodes_per_point * len(branches)
            d_nodes = per_branch.min(axis=0)
            # the 1-Lipschitz bound |d(y) - d(x)| <= |y - x| catches feet
            # that silently converged to the wrong branch (focal points,
            # surfaces of revolution); those nodes are recomputed robustly
            node_r = r0 * rung_radii
            bad = ~np.isfinite(d_nodes) | (
                np.abs(d_nodes - res.d) > node_r + 1e-10 * field.scale
            )
            if bad.any():
                radii = r0 * 0.5 ** np.arange(levels + 1)
                nodes = (
                    x[None, None, :] + radii[:, None, None] * offsets[None, :, :]
                ).reshape(-1, m)
                d_nodes[bad] = field.distance_pool_fallback(nodes[bad])
            report.points.append(
                _scan_point(
                    x, res, r0, d_nodes, transform, weights, levels, m,
                    potential_kind,
                )
            )
        start = stop
    return report


def _scan_point(x, res, r0, d_nodes, transform, weights, levels, m, potential_kind):
    d = res.d
    radii = r0 * 0.5 ** np.arange(levels + 1)
    values = transform(d_nodes).reshape(len(radii), -1)
    means = values @ weights
    u_x = float(transform(np.array([d]))[0])
    quotients = 2.0 * (m + 2) * (means - u_x) / radii**2
    extrapolated, order, misfit = _richardson(quotients)
    half = max(3, (levels + 1) // 2)
    conservative = float(np.max(quotients[-half:]))
    near_kink = res.medial_axis or res.gap < 2.0 * r0
    if near_kink or misfit:
        margin, method = conservative, "sup"
    else:
        margin, method = extrapolated, "extrapolated"
    step3 = None
    if potential_kind == "neg_log_d":
        step3 = conservative - step3_floor_neg_log(d, m)
    elif potential_kind == "neg_d":
        step3 = conservative - step3_floor_neg_d(d, m)
    return ScanPoint(
        x=x,
        d=d,
        margin=margin,
        method=method,
        flagged=bool(res.medial_axis),
        step3_margin=step3,
    )


def plurisubharmonicity_scan(
    dom: ImplicitDomain,
    grid,
    tol: float = DEFAULT_TOL,
    field: DistanceField | None = None,
) -> ScanReport:
    """Minimum complex-Hessian eigenvalue of -log d over interior points.

    The real Hessian is estimated by Richardson-extrapolated central
    differences on warm-started distances; the quarter-combination turns it
    into the complex Hessian on C^n.  Points whose stencil can reach the
    medial axis are skipped and listed.
    """
    m = dom.dim
    if m % 2 != 0:
        raise OkalabError("plurisubharmonicity scan needs an even ambient dimension")
    field = field or DistanceField(dom)
    grid_meta = grid.to_dict() if isinstance(grid, GridSpec) else {"points": "custom"}
    report = ScanReport(dom.label, "neg_log_d_complex_hessian", tol, grid_meta)
    for x in _interior_points(dom, grid):
        try:
            res = field.query(x)
        except OkalabError as exc:
            report.skipped.append({"x": x.tolist(), "reason": str(exc)})
            continue
        d = res.d
        h = max(1e-4, 1e-3 * d)
        reach = 4.0 * h * np.sqrt(m)
        if res.medial_axis or res.gap < reach:
            report.skipped.append(
                {"x": x.tolist(), "reason": "stencil touches the medial axis"}
            )
            continue
        branches = res.candidates
        try:
            H = _neg_log_d_hessian(field, x, d, h, branches, reach)
        except OkalabError as exc:
            report.skipped.append({"x": x.tolist(), "reason": str(exc)})
            continue
        eigs = hermitian_eigvals(complex_hessian(H))
        report.points.append(
            ScanPoint(
                x=x,
                d=d,
                margin=float(eigs[0]),
                method="fd_complex_hessian",
                flagged=False,
            )
        )
    return report


def _neg_log_d_hessian(field, x, d, h, branches, reach) -> np.ndarray:
    m = len(x)

    def hess_at_step(step):
        pts = [x]
        pairs = []
        for i in range(m):
            e = np.zeros(m)
            e[i] = step
            pts.extend([x + e, x - e])
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
            raise OkalabError("stencil reached a multiplicity region")
        u = -np.log(d_all)
        H = np.zeros((m, m))
        u0 = u[0]
        for i in range(m):
            H[i, i] = (u[1 + 2 * i] - 2.0 * u0 + u[2 + 2 * i]) / step**2
        base = 1 + 2 * m
        for k, (i, j) in enumerate(pairs):
            upp, upm, ump, umm = u[base + 4 * k : base + 4 * k + 4]
            H[i, j] = H[j, i] = (upp - upm - ump + umm) / (4.0 * step**2)
        return H

    coarse = hess_at_step(h)
    fine = hess_at_step(0.5 * h)
    H = (4.0 * fine - coarse) / 3.0
    return 0.5 * (H + H.T)
