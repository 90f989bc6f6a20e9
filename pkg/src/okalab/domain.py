"""Implicit domains Omega = {F < 0}: catalog, membership, boundary frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CriticalBoundaryError, OkalabError
from .expr import ExpressionAst, Jet2, eval_jet2, eval_jets, parse_expression
from .linalg import jacobi_eigh, orthonormal_tangent_basis

TOL_GRAD = 1e-8
TOL_F = 1e-10


@dataclass(frozen=True)
class ImplicitDomain:
    """A domain {F < 0} with its dimension, a bounding box and a label.

    `bbox` is an (m, 2) array of per-axis [lo, hi] guaranteed to contain the
    closure of the domain.
    """

    f: ExpressionAst
    dim: int
    bbox: np.ndarray
    label: str

    def jets(self, X, order=2):
        return eval_jets(self.f, np.asarray(X, dtype=float), order=order)

    def jet2(self, x) -> Jet2:
        return eval_jet2(self.f, x)

    def value(self, x) -> float:
        v, _, _ = self.jets(np.asarray(x, dtype=float)[None, :], order=0)
        return float(v[0])

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox[:, 1] - self.bbox[:, 0]))


@dataclass(frozen=True)
class BoundaryFrame:
    """Boundary point with inward normal, tangent frame and curvature data.

    kappas are sorted ascending; principal_dirs rows are the matching
    orthonormal tangent directions; mean_curv is the average of the kappas.
    """

    w: np.ndarray
    nu: np.ndarray
    tangent: np.ndarray          # (m-1, m) orthonormal rows spanning T_w
    first_form: np.ndarray       # identity in the orthonormal frame
    second_form: np.ndarray      # (m-1, m-1) symmetric
    kappas: np.ndarray
    principal_dirs: np.ndarray   # (m-1, m) rows, ambient coordinates
    mean_curv: float
    grad_norm: float

    def to_dict(self):
        return {
            "w": self.w.tolist(),
            "nu": self.nu.tolist(),
            "kappas": self.kappas.tolist(),
            "H": self.mean_curv,
        }


def _format(x: float) -> str:
    return repr(float(x))


def _box(half_widths) -> np.ndarray:
    hw = np.asarray(half_widths, dtype=float)
    return np.stack([-hw, hw], axis=1)


def builtin(name: str, params: dict) -> ImplicitDomain:
    """Construct a catalog domain.

    Names: ball(m, R), annulus(m, r), ellipsoid(a1..am), complex_egg(n, p1..pn),
    powersum(m, r, d).  Raises on unknown names or invalid parameter ranges.
    """
    params = dict(params)
    if name == "ball":
        m = int(params.pop("m"))
        R = float(params.pop("R", 1.0))
        if m < 1 or R <= 0:
            raise OkalabError(f"ball requires m >= 1 and R > 0, got m={m}, R={R}")
        _reject_extra(name, params)
        src = f"normsq(1,{m}) - {_format(R * R)}"
        return ImplicitDomain(
            parse_expression(src, m), m, _box([1.1 * R] * m), f"ball({m},R={R:g})"
        )
    if name == "annulus":
        m = int(params.pop("m"))
        r = float(params.pop("r"))
        if not (0.0 < r < 1.0):
            raise OkalabError(f"annulus requires 0 < r < 1, got r={r}")
        _reject_extra(name, params)
        src = f"(normsq(1,{m}) - {_format(r * r)}) * (normsq(1,{m}) - 1)"
        return ImplicitDomain(
            parse_expression(src, m), m, _box([1.1] * m), f"annulus({m},r={r:g})"
        )
    if name == "ellipsoid":
        axes = _semiaxes(params)
        m = len(axes)
        if m < 1 or any(a <= 0 for a in axes):
            raise OkalabError(f"ellipsoid requires positive semiaxes, got {axes}")
        terms = " + ".join(
            f"x{i + 1}^2 / {_format(a * a)}" for i, a in enumerate(axes)
        )
        src = f"{terms} - 1"
        label = "ellipsoid(" + ",".join(f"{a:g}" for a in axes) + ")"
        return ImplicitDomain(
            parse_expression(src, m), m, _box([1.1 * a for a in axes]), label
        )
    if name == "complex_egg":
        n = int(params.pop("n", 2))
        exps = [int(params.pop(f"p{j + 1}", 1 if j == 0 else 2)) for j in range(n)]
        if n < 1 or any(p < 1 for p in exps):
            raise OkalabError(f"complex_egg requires n >= 1 and exponents >= 1")
        _reject_extra(name, params)
        terms = []
        for j, p in enumerate(exps):
            block = f"normsq({2 * j + 1},{2 * j + 2})"
            terms.append(block if p == 1 else f"{block}^{p}")
        src = " + ".join(terms) + " - 1"
        label = "complex_egg(" + ",".join(str(p) for p in exps) + ")"
        return ImplicitDomain(
            parse_expression(src, 2 * n), 2 * n, _box([1.1] * (2 * n)), label
        )
    if name == "powersum":
        m = int(params.pop("m"))
        r = float(params.pop("r"))
        d = float(params.pop("d"))
        if not (0.0 < r < 1.0):
            raise OkalabError(f"powersum requires 0 < r < 1, got r={r}")
        if not d < 2 - m:
            raise OkalabError(f"powersum requires d < 2 - m, got d={d}, m={m}")
        _reject_extra(name, params)
        # ||x||^d + (1 + r - ||x||)^d - (1 + r^d); the exp/log form pins the
        # natural branch 0 < ||x|| < 1 + r, evaluation errors outside it.
        src = (
            f"normsq(1,{m})^({_format(d / 2.0)})"
            f" + exp({_format(d)} * log({_format(1.0 + r)} - normsq(1,{m})^0.5))"
            f" - {_format(1.0 + r ** d)}"
        )
        return ImplicitDomain(
            parse_expression(src, m),
            m,
            _box([1.1] * m),
            f"powersum({m},r={r:g},d={d:g})",
        )
    raise OkalabError(f"unknown builtin domain {name!r}")


def _semiaxes(params: dict):
    if "semiaxes" in params:
        axes = [float(a) for a in params.pop("semiaxes")]
        _reject_extra("ellipsoid", params)
        return axes
    axes = []
    i = 1
    while f"a{i}" in params:
        axes.append(float(params.pop(f"a{i}")))
        i += 1
    _reject_extra("ellipsoid", params)
    if not axes:
        raise OkalabError("ellipsoid requires semiaxes a1..am")
    return axes


def _reject_extra(name, params):
    if params:
        raise OkalabError(f"unknown parameters for {name}: {sorted(params)}")


def from_expression(source: str, dim: int, bbox=None, label=None) -> ImplicitDomain:
    """Domain from an expression string; bbox defaults to [-10, 10]^dim."""
    ast = parse_expression(source, dim)
    if bbox is None:
        box = _box([10.0] * dim)
    else:
        box = np.asarray(bbox, dtype=float).reshape(dim, 2)
    return ImplicitDomain(ast, dim, box, label or source)


def contains(dom: ImplicitDomain, x) -> bool:
    """True iff F(x) < 0.  Evaluation domain errors propagate."""
    return dom.value(x) < 0.0


def contains_safe(dom: ImplicitDomain, X) -> np.ndarray:
    """Vectorized membership; points where F is undefined count as outside."""
    X = np.asarray(X, dtype=float)
    try:
        v, _, _ = dom.jets(X, order=0)
        return v < 0.0
    except OkalabError:
        pass
    out = np.zeros(len(X), dtype=bool)
    for k, x in enumerate(X):
        try:
            out[k] = dom.value(x) < 0.0
        except OkalabError:
            out[k] = False
    return out


def boundary_frame(
    dom: ImplicitDomain,
    w,
    tol_f: float = TOL_F,
    tol_grad: float = TOL_GRAD,
) -> BoundaryFrame:
    """Normal, tangent frame, fundamental forms and curvatures at w.

    The inward normal is -grad F/||grad F||; in the orthonormal tangent frame
    the first form is the identity and the second form is the projected
    Hessian of F divided by ||grad F||, whose eigenvalues are the principal
    curvatures (ascending).
    """
    w = np.asarray(w, dtype=float)
    jet = dom.jet2(w)
    scale = 1.0 + abs(jet.value)
    if abs(jet.value) > tol_f * scale:
        raise OkalabError(
            f"point is not on the boundary: |F(w)| = {abs(jet.value):.3e}"
        )
    grad_norm = float(np.linalg.norm(jet.gradient))
    if grad_norm < tol_grad:
        raise CriticalBoundaryError(
            f"degenerate gradient at boundary point: ||grad F|| = {grad_norm:.3e}"
        )
    nu = -jet.gradient / grad_norm
    tangent = orthonormal_tangent_basis(nu)
    second = tangent @ jet.hessian @ tangent.T / grad_norm
    second = 0.5 * (second + second.T)
    kappas, vecs = jacobi_eigh(second)
    principal = (tangent.T @ vecs).T
    # deterministic orientation in ambient coordinates
    for k in range(principal.shape[0]):
        nz = np.nonzero(np.abs(principal[k]) > 1e-12)[0]
        if nz.size and principal[k, nz[0]] < 0.0:
            principal[k] = -principal[k]
    m = dom.dim
    mean = float(np.sum(kappas) / (m - 1)) if m > 1 else 0.0
    return BoundaryFrame(
        w=w,
        nu=nu,
        tangent=tangent,
        first_form=np.eye(m - 1),
        second_form=second,
        kappas=kappas,
        principal_dirs=principal,
        mean_curv=mean,
        grad_norm=grad_norm,
    )


def _interior_anchor(dom: ImplicitDomain) -> np.ndarray:
    """A deterministic interior point used to seed boundary ray casting."""
    m = dom.dim
    center = dom.bbox.mean(axis=1)
    candidates = [center]
    # radial sweep along +e1 catches shell-like domains with hollow centers
    hi = dom.bbox[0, 1]
    for t in np.linspace(0.05, 0.95, 19):
        p = center.copy()
        p[0] += t * (hi - center[0])
        candidates.append(p)
    for x in candidates:
        try:
            if dom.value(x) < 0.0:
                return x
        except OkalabError:
            continue
    raise OkalabError(f"could not find an interior anchor for {dom.label}")


def sample_boundary(dom: ImplicitDomain, count: int, seed: int = 0) -> np.ndarray:
    """Sample `count` boundary points by seeded ray casting plus bisection.

    Rays start at a deterministic interior anchor; every sign change of F
    along a ray is bisected to |segment| < 1e-13 and polished so |F| is at
    rounding level.  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    anchor = _interior_anchor(dom)
    m = dom.dim
    found = []
    attempts = 0
    while len(found) < count and attempts < 80:
        attempts += 1
        dirs = rng.normal(size=(max(8, count), m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for u in dirs:
            if len(found) >= count:
                break
            w = _first_crossing(dom, anchor, u)
            if w is not None:
                found.append(w)
    if len(found) < count:
        raise OkalabError(
            f"boundary sampling found only {len(found)}/{count} points"
        )
    return np.array(found[:count])


def _ray_values(dom, origin, direction, ts):
    pts = origin[None, :] + ts[:, None] * direction[None, :]
    vals = np.full(len(ts), np.nan)
    try:
        v, _, _ = dom.jets(pts, order=0)
        return v, pts
    except OkalabError:
        pass
    for k in range(len(ts)):
        try:
            vals[k] = dom.value(pts[k])
        except OkalabError:
            vals[k] = np.nan
    return vals, pts


def _exit_parameter(dom, origin, direction) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (dom.bbox[:, 0] - origin) / direction
        hi = (dom.bbox[:, 1] - origin) / direction
    t_hi = np.where(direction > 0, hi, np.where(direction < 0, lo, np.inf))
    return float(np.min(t_hi))


def _first_crossing(dom, origin, direction):
    t_max = _exit_parameter(dom, origin, direction)
    ts = np.linspace(0.0, t_max, 96)
    vals, _ = _ray_values(dom, origin, direction, ts)
    for k in range(1, len(ts)):
        a, b = vals[k - 1], vals[k]
        if np.isnan(a) or np.isnan(b):
            continue
        if a < 0.0 <= b:
            t = _bisect(dom, origin, direction, ts[k - 1], ts[k])
            if t is not None:
                return origin + t * direction
    return None


def _bisect(dom, origin, direction, t_lo, t_hi, iters=60):
    def val(t):
        try:
            return dom.value(origin + t * direction)
        except OkalabError:
            return np.nan

    f_lo = val(t_lo)
    f_hi = val(t_hi)
    if np.isnan(f_lo) or np.isnan(f_hi) or f_lo >= 0.0 or f_hi < 0.0:
        return None
    for _ in range(iters):
        t_mid = 0.5 * (t_lo + t_hi)
        f_mid = val(t_mid)
        if np.isnan(f_mid):
            return None
        if f_mid < 0.0:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)
