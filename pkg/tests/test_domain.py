import numpy as np
import pytest

from okalab.domain import (
    boundary_frame,
    builtin,
    contains,
    contains_safe,
    from_expression,
    sample_boundary,
)
from okalab.errors import CriticalBoundaryError, OkalabError


def test_annulus_membership_and_bbox():
    dom = builtin("annulus", {"m": 3, "r": 0.1})
    assert contains(dom, [0.3, 0.0, 0.0])
    assert not contains(dom, [0.05, 0.0, 0.0])
    assert np.allclose(dom.bbox, np.array([[-1.1, 1.1]] * 3))


def test_ball_boundary_excluded():
    dom = builtin("ball", {"m": 2, "R": 1.0})
    assert contains(dom, [0.5, 0.0])
    assert not contains(dom, [1.0, 0.0])


def test_builtin_errors():
    with pytest.raises(OkalabError, match="unknown builtin"):
        builtin("torus", {"m": 3})
    with pytest.raises(OkalabError, match="0 < r < 1"):
        builtin("annulus", {"m": 3, "r": 1.5})
    with pytest.raises(OkalabError, match="d < 2 - m"):
        builtin("powersum", {"m": 3, "r": 0.1, "d": 0.0})


def test_powersum_matches_annulus_membership():
    annulus = builtin("annulus", {"m": 3, "r": 0.1})
    powersum = builtin("powersum", {"m": 3, "r": 0.1, "d": -2.0})
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1.1, 1.1, size=(1000, 3))
    inside_a = contains_safe(annulus, pts)
    inside_p = contains_safe(powersum, pts)
    assert np.array_equal(inside_a, inside_p)


def test_sphere_frame():
    dom = builtin("ball", {"m": 3, "R": 1.0})
    frame = boundary_frame(dom, [1.0, 0.0, 0.0])
    assert np.allclose(frame.nu, [-1.0, 0.0, 0.0])
    assert np.allclose(frame.kappas, [1.0, 1.0], atol=1e-12)
    assert frame.mean_curv == pytest.approx(1.0, abs=1e-12)
    # frame invariants
    assert np.allclose(frame.tangent @ frame.nu, 0.0, atol=1e-12)
    assert np.allclose(frame.tangent @ frame.tangent.T, np.eye(2), atol=1e-12)
    assert frame.mean_curv == pytest.approx(np.sum(frame.kappas) / 2, abs=1e-10)


def test_annulus_inner_wall_frame():
    dom = builtin("annulus", {"m": 3, "r": 0.1})
    frame = boundary_frame(dom, [0.1, 0.0, 0.0])
    assert np.allclose(frame.nu, [1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(frame.kappas, [-10.0, -10.0], atol=1e-8)
    assert frame.mean_curv == pytest.approx(-10.0, abs=1e-8)


def test_ellipsoid_axis_endpoint_frame():
    # Oracle: second-order Taylor of the graph at the endpoint of the major
    # axis.  For x = a*sqrt(1 - y^2/b^2 - z^2/c^2), the height along -e1 is
    # psi(y, z) = a - x = (a/(2 b^2)) y^2 + (a/(2 c^2)) z^2 + O(4), so the
    # principal curvatures are a/b^2 and a/c^2.
    a, b, c = 2.0, 1.0, 1.0
    dom = builtin("ellipsoid", {"a1": a, "a2": b, "a3": c})
    frame = boundary_frame(dom, [a, 0.0, 0.0])
    assert np.allclose(frame.kappas, [a / b**2, a / c**2], atol=1e-10)
    assert frame.mean_curv == pytest.approx(2.0, abs=1e-10)


def test_taylor_oracle_confirms_ellipsoid_curvature():
    # finite-difference osculating paraboloid fit, independent of the frame code
    a, b = 2.0, 1.0
    h = 1e-4

    def height(y):
        # graph of the boundary over the tangent plane at (a, 0), inward = -e1
        return a - a * np.sqrt(1.0 - y * y / b**2)

    kappa_fd = (height(h) - 2 * height(0.0) + height(-h)) / h**2
    assert kappa_fd == pytest.approx(a / b**2, rel=1e-6)


def test_flipping_sign_negates_curvatures():
    dom = builtin("ball", {"m": 3, "R": 1.0})
    flipped = from_expression(
        "1 - normsq(1,3)", 3, bbox=[[-1.1, 1.1]] * 3, label="outside-ball"
    )
    frame = boundary_frame(dom, [0.0, 1.0, 0.0])
    frame_f = boundary_frame(flipped, [0.0, 1.0, 0.0])
    assert np.allclose(frame_f.kappas, -frame.kappas[::-1], atol=1e-10)
    assert frame_f.mean_curv == pytest.approx(-frame.mean_curv, abs=1e-10)
    assert np.allclose(frame_f.nu, -frame.nu, atol=1e-12)


def test_degenerate_gradient_refused():
    dom = from_expression("normsq(1,2)^2 - 0", 2, bbox=[[-1, 1]] * 2)
    with pytest.raises(CriticalBoundaryError):
        boundary_frame(dom, [0.0, 0.0])


def test_off_boundary_point_refused():
    dom = builtin("ball", {"m": 2, "R": 1.0})
    with pytest.raises(OkalabError, match="not on the boundary"):
        boundary_frame(dom, [0.5, 0.0])


def test_sample_boundary_all_walls():
    dom = builtin("annulus", {"m": 3, "r": 0.1})
    pts = sample_boundary(dom, 64, seed=3)
    radii = np.linalg.norm(pts, axis=1)
    inner = np.isclose(radii, 0.1, atol=1e-9)
    outer = np.isclose(radii, 1.0, atol=1e-9)
    assert np.all(inner | outer)
    assert inner.any() and outer.any()
    # every sampled point admits a frame
    for w in pts[:8]:
        boundary_frame(dom, w)


def test_complex_egg_frame_as_expected():
    dom = builtin("complex_egg", {"n": 2})
    frame = boundary_frame(dom, [1.0, 0.0, 0.0, 0.0])
    # |z1|^2 + |z2|^4 - 1: hessian diag(2,2,0,0) at (1,0,0,0), grad (2,0,0,0)
    assert np.allclose(sorted(frame.kappas), [0.0, 0.0, 1.0], atol=1e-10)
