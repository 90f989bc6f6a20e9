import numpy as np
import pytest

from okalab.dist import (
    DistanceField,
    GridSpec,
    distance_hessian_closed_form,
    distance_hessian_numeric,
    grid_for_domain,
    inradius,
    medial_axis_scan,
    nearest_boundary_points,
    signed_distance,
)
from okalab.domain import boundary_frame, builtin, from_expression
from okalab.errors import FocalPointError, MedialStencilError

ANNULUS = builtin("annulus", {"m": 3, "r": 0.1})


@pytest.fixture(scope="module")
def annulus_field():
    return DistanceField(ANNULUS)


def test_annulus_interior_unique_nearest(annulus_field):
    res = annulus_field.query([0.3, 0.0, 0.0])
    assert res.d == pytest.approx(0.2, abs=1e-10)
    assert not res.medial_axis
    assert len(res.nearest) == 1
    assert np.allclose(res.nearest[0], [0.1, 0.0, 0.0], atol=1e-9)
    assert np.allclose(res.grad, [1.0, 0.0, 0.0], atol=1e-9)
    assert np.linalg.norm(res.grad) == pytest.approx(1.0, abs=1e-10)


def test_annulus_midshell_is_medial(annulus_field):
    res = annulus_field.query([0.55, 0.0, 0.0])
    assert res.d == pytest.approx(0.45, abs=1e-9)
    assert res.medial_axis
    assert res.grad is None
    radii = np.linalg.norm(res.nearest, axis=1)
    assert np.isclose(radii, 0.1, atol=1e-8).any()
    assert np.isclose(radii, 1.0, atol=1e-8).any()


def test_disc_center_saturates():
    disc = builtin("ball", {"m": 2, "R": 1.0})
    res = nearest_boundary_points(disc, [0.0, 0.0], k_max=8)
    assert res.d == pytest.approx(1.0, abs=1e-10)
    assert res.medial_axis
    assert res.saturated
    assert len(res.nearest) == 8


def test_signed_distance_values(annulus_field):
    assert annulus_field.query([0.3, 0.0, 0.0]).signed == pytest.approx(-0.2, abs=1e-10)
    assert annulus_field.query([0.05, 0.0, 0.0]).signed == pytest.approx(
        0.05, abs=1e-10
    )
    ball = builtin("ball", {"m": 3, "R": 1.0})
    assert signed_distance(ball, [0.0, 0.0, 2.0]) == pytest.approx(1.0, abs=1e-9)


def test_annulus_closed_form_agreement(annulus_field):
    # oracle: d(x) = min(||x|| - r, 1 - ||x||) for the annulus
    rng = np.random.default_rng(11)
    for _ in range(25):
        x = rng.uniform(-0.8, 0.8, size=3)
        rho = np.linalg.norm(x)
        if not (0.12 < rho < 0.98):
            continue
        expected = min(rho - 0.1, 1.0 - rho)
        res = annulus_field.query(x)
        assert res.d == pytest.approx(expected, abs=1e-10)


def test_warm_branch_distances_match_full_queries(annulus_field):
    rng = np.random.default_rng(5)
    x = np.array([0.5, 0.1, -0.2])
    res = annulus_field.query(x)
    Y = x[None, :] + rng.uniform(-0.05, 0.05, size=(64, 3))
    d_warm, gap = annulus_field.distance_from_branches(Y, res.candidates)
    rho = np.linalg.norm(Y, axis=1)
    d_true = np.minimum(rho - 0.1, 1.0 - rho)
    assert np.max(np.abs(d_warm - d_true)) < 1e-9
    assert np.all(gap > 0)


def test_warm_branch_distances_across_medial_axis(annulus_field):
    # query point on the medial sphere; warm distances must pick the right wall
    x = np.array([0.55, 0.0, 0.0])
    res = annulus_field.query(x)
    ts = np.linspace(-0.08, 0.08, 33)
    Y = x[None, :] + ts[:, None] * np.array([1.0, 0.0, 0.0])[None, :]
    d_warm, _ = annulus_field.distance_from_branches(Y, res.candidates)
    rho = np.linalg.norm(Y, axis=1)
    d_true = np.minimum(rho - 0.1, 1.0 - rho)
    assert np.max(np.abs(d_warm - d_true)) < 1e-9


def test_lipschitz_property(annulus_field):
    rng = np.random.default_rng(99)
    checked = 0
    while checked < 400:
        x = rng.uniform(-1.0, 1.0, size=3)
        rho = np.linalg.norm(x)
        if not (0.11 < rho < 0.99):
            continue
        res = annulus_field.query(x)
        Y = x[None, :] + rng.uniform(-0.1, 0.1, size=(25, 3))
        rhoY = np.linalg.norm(Y, axis=1)
        keep = (rhoY > 0.11) & (rhoY < 0.99)
        if not keep.any():
            continue
        d_warm, _ = annulus_field.distance_from_branches(Y[keep], res.candidates)
        steps = np.linalg.norm(Y[keep] - x[None, :], axis=1)
        assert np.all(np.abs(d_warm - res.d) <= steps + 1e-9)
        checked += int(np.sum(keep))


def test_eikonal_property(annulus_field):
    rng = np.random.default_rng(123)
    h = 1e-6
    count = 0
    while count < 40:
        x = rng.uniform(-0.9, 0.9, size=3)
        rho = np.linalg.norm(x)
        if not (0.15 < rho < 0.5) and not (0.6 < rho < 0.95):
            continue
        res = annulus_field.query(x)
        if res.medial_axis or res.gap < 0.05:
            continue
        grads = np.zeros(3)
        pts = []
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            pts.extend([x + e, x - e])
        d_all, _ = annulus_field.distance_from_branches(np.array(pts), res.candidates)
        for i in range(3):
            grads[i] = (d_all[2 * i] - d_all[2 * i + 1]) / (2 * h)
        assert np.linalg.norm(grads) == pytest.approx(1.0, abs=1e-6)
        count += 1


def test_medial_axis_scan_annulus(annulus_field):
    # radial line grid through the annulus; flags concentrate at rho = 0.55
    grid = GridSpec(((0.125, 0.975, 69), (0.0, 0.0, 1), (0.0, 0.0, 1)))
    report = medial_axis_scan(ANNULUS, grid, field=annulus_field)
    assert not report.skipped
    flagged_rho = np.linalg.norm(report.flagged_points, axis=1)
    cell = (0.975 - 0.125) / 68
    assert len(flagged_rho) >= 1
    assert np.all(np.abs(flagged_rho - 0.55) <= cell + 1e-12)
    assert report.fraction_flagged < 0.1


def test_medial_axis_scan_disc():
    disc = builtin("ball", {"m": 2, "R": 1.0})
    grid = GridSpec(((-0.6, 0.6, 7), (-0.6, 0.6, 7)))
    report = medial_axis_scan(disc, grid)
    cell = 1.2 / 6
    for p in report.flagged_points:
        assert np.linalg.norm(p) <= cell * np.sqrt(2) + 1e-12


def test_medial_axis_scan_ellipse():
    ell = builtin("ellipsoid", {"a1": 2.0, "a2": 1.0})
    grid = GridSpec(((-1.8, 1.8, 41), (-0.55, 0.55, 11)))
    report = medial_axis_scan(ell, grid)
    # classical medial segment of the ellipse: y = 0, |x| <= a - b^2/a = 1.5
    cell = 3.6 / 40
    for p in report.flagged_points:
        assert abs(p[1]) <= 0.55 / 5 + 1e-12
        assert abs(p[0]) <= 1.5 + cell + 1e-12


def test_inradius_annulus(annulus_field):
    metrics = inradius(ANNULUS, grid_for_domain(ANNULUS, 9), field=annulus_field)
    assert metrics.inradius == pytest.approx(0.45, abs=5e-3)
    assert np.linalg.norm(metrics.incenter) == pytest.approx(0.55, abs=1e-2)


def test_inradius_ball():
    ball = builtin("ball", {"m": 3, "R": 1.0})
    metrics = inradius(ball, grid_for_domain(ball, 7))
    assert metrics.inradius == pytest.approx(1.0, abs=2e-3)


def test_inradius_ellipse():
    ell = builtin("ellipsoid", {"a1": 2.0, "a2": 1.0})
    metrics = inradius(ell, grid_for_domain(ell, 9))
    assert metrics.inradius == pytest.approx(1.0, abs=2e-3)


def test_distance_hessian_closed_form_values():
    H = distance_hessian_closed_form([1.0, 1.0], 0.5)
    assert np.allclose(H, np.diag([-2.0, -2.0, 0.0]))
    assert np.allclose(distance_hessian_closed_form([0.0, 0.0], 0.7), 0.0)
    H = distance_hessian_closed_form([-10.0, -10.0], 0.2)
    assert np.allclose(H, np.diag([10.0 / 3.0, 10.0 / 3.0, 0.0]))
    with pytest.raises(FocalPointError):
        distance_hessian_closed_form([2.0, 1.0], 0.5)


def test_distance_hessian_numeric_annulus(annulus_field):
    H = distance_hessian_numeric(ANNULUS, [0.3, 0.0, 0.0], field=annulus_field)
    eig = np.sort(np.linalg.eigvalsh(H))
    assert np.allclose(eig, [0.0, 10.0 / 3.0, 10.0 / 3.0], atol=1e-5)


def test_distance_hessian_numeric_ball():
    ball = builtin("ball", {"m": 3, "R": 1.0})
    H = distance_hessian_numeric(ball, [0.5, 0.0, 0.0])
    eig = np.sort(np.linalg.eigvalsh(H))
    assert np.allclose(eig, [-2.0, -2.0, 0.0], atol=1e-5)


def test_distance_hessian_numeric_halfspace():
    half = from_expression("x1", 2, bbox=[[-4.0, 4.0], [-4.0, 4.0]])
    H = distance_hessian_numeric(half, [-1.0, 0.0])
    assert np.allclose(H, 0.0, atol=1e-6)


def test_distance_hessian_refuses_medial_stencil(annulus_field):
    with pytest.raises(MedialStencilError):
        distance_hessian_numeric(ANNULUS, [0.55, 0.0, 0.0], field=annulus_field)


def test_frame_consistency_lemma(annulus_field):
    # executable content of the Hessian-of-distance lemma on the annulus
    rng = np.random.default_rng(2024)
    count = 0
    while count < 12:
        x = rng.uniform(-0.9, 0.9, size=3)
        rho = np.linalg.norm(x)
        if not (0.15 < rho < 0.5):
            continue
        res = annulus_field.query(x)
        if res.medial_axis:
            continue
        frame = boundary_frame(ANNULUS, res.nearest[0])
        closed = distance_hessian_closed_form(frame.kappas, res.d)
        numeric = distance_hessian_numeric(ANNULUS, x, field=annulus_field)
        ev_closed = np.sort(np.diag(closed))
        ev_num = np.sort(np.linalg.eigvalsh(numeric))
        assert np.allclose(ev_num, ev_closed, atol=1e-5)
        # positivity guard 1 - d*kappa > 0
        assert np.all(1.0 - res.d * frame.kappas > 0)
        count += 1


def test_grid_spec_points_lexicographic():
    grid = GridSpec(((0.0, 1.0, 2), (0.0, 2.0, 3)))
    pts = grid.points()
    assert pts.shape == (6, 2)
    assert np.allclose(pts[0], [0.0, 0.0])
    assert np.allclose(pts[1], [0.0, 1.0])
    assert np.allclose(pts[-1], [1.0, 2.0])
