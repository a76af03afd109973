import math

import numpy as np
import pytest

from riemap import manifold as mf, rmap, scenario, transport as tr
from riemap.errors import GeometryError

SQ2 = math.sqrt(2)
SPHERE = rmap.sphere_immersion(1)
E3 = mf.euclidean(3)
START = [math.pi / 2, math.pi]
EAST = [math.pi / 2, 0.1]  # leaves room to run east before phi reaches 2 pi
ALONG_EQUATOR = [[0, 1], [1, 0], [0, 0]]  # V1 = d/dphi, V2 = d/dtheta at the equator


@pytest.fixture(scope="module")
def sphere_circle():
    # centred on the equator, so the full circle of length 2 pi sin(pi/4) stays in the chart
    frame = [[0, SQ2], [1, 0], [0, 0]]
    return mf.generate_frenet_curve(SPHERE.source, [math.pi / 4, math.pi], frame, 1.0, 0.0, 4.4, 1e-3)


@pytest.fixture(scope="module")
def great_circle():
    return mf.generate_frenet_curve(SPHERE.source, EAST, ALONG_EQUATOR, 1e-12, 0.0, 6.0, 1e-3)


@pytest.fixture(scope="module")
def identity_helix():
    return mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 1.0, 1.0, 2 * math.pi, 1e-3)


@pytest.fixture(scope="module")
def sphere3_report():
    sc = scenario.load_builtin("sphere3_helix")
    curve = scenario.generate_curve(sc)
    return sc.map, curve, tr.helix_condition_check(sc.map, curve)


def test_spread_helpers():
    v = np.r_[[9.0] * 5, np.linspace(1, 2, 20), [-9.0] * 5]
    assert tr.spread(v) == pytest.approx(1.0)
    assert math.isnan(tr.spread(np.full(20, np.nan)))
    with pytest.raises(GeometryError):
        tr.interior(np.arange(10.0))


# ------------------------------------------------------------ pushforward

def test_pushforward_identity_is_same_curve(identity_helix):
    pc = tr.pushforward_curve(rmap.identity_map(3), identity_helix)
    np.testing.assert_array_equal(pc.path.positions, identity_helix.u)
    assert pc.horizontality_drift == 0.0


def test_pushforward_great_circle_is_unit_equator(great_circle):
    pc = tr.pushforward_curve(SPHERE, great_circle)
    q = pc.path.positions
    np.testing.assert_allclose(np.linalg.norm(q[:, :2], axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(q[:, 2], 0.0, atol=1e-10)
    assert pc.horizontality_drift < 1e-12


def test_pushforward_projection_keeps_planar_circle():
    T = rmap.projection(3, 2)
    c = mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 1.0, 0.0, 2.0, 1e-3)
    pc = tr.pushforward_curve(T, c)
    np.testing.assert_allclose(pc.path.positions, c.u[:, :2], atol=0)
    assert pc.horizontality_drift == 0.0


# ------------------------------------------------------------ image curvature

def test_image_curvature_identity_circle():
    c = mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 1.0, 0.0, 2.0, 1e-3)
    ic = tr.image_curvature(rmap.identity_map(3), c)
    assert np.max(np.abs(tr.interior(ic.kappa_tilde) - 1.0)) < 1e-6
    assert ic.eq31_residual <= 1e-6


def test_image_curvature_sphere_small_circle(sphere_circle, oracles):
    ic = tr.image_curvature(SPHERE, sphere_circle)
    k = tr.interior(ic.kappa_tilde)
    assert np.max(np.abs(k - SQ2)) < 1e-4
    assert tr.spread(ic.kappa_tilde) <= 1e-4
    assert ic.eq31_residual <= 1e-4
    # ambient curvature of the matching latitude circle, computed without riemap
    assert np.mean(k) == pytest.approx(oracles["sphere_small_circle_ambient_kappa"], abs=1e-4)


def test_image_curvature_great_circle(great_circle):
    ic = tr.image_curvature(SPHERE, great_circle)
    assert np.max(np.abs(tr.interior(ic.kappa_tilde) - 1.0)) < 1e-4


def test_image_curvature_warns_on_non_riemannian():
    c = mf.generate_frenet_curve(mf.euclidean(2), [0, 0], np.eye(2), 1.0, 0.0, 0.5, 1e-3)
    with pytest.warns(UserWarning, match="not Riemannian"):
        tr.image_curvature(rmap.scaling(2), c)


# ------------------------------------------------------------ theorem 3.1 checks

def test_theorem31_sphere():
    rep = tr.theorem31_check(SPHERE, START, 1.0, trials=10, seed=0, s_max=math.pi)
    assert rep.trials == 10 and rep.skipped + len(rep.spreads) == 10
    assert len(rep.spreads) >= 5
    assert rep.max_spread <= 1e-4 and rep.isotropic and rep.biconditional_holds
    assert max(rep.drifts) <= 1e-4


def test_theorem31_quadric():
    rep = tr.theorem31_check(rmap.quadric(), [0.0, 0.0], 1.0, trials=10, seed=0, s_max=math.pi)
    assert rep.max_spread > 1e-2
    assert not rep.isotropic and rep.biconditional_holds


def test_theorem31_identity():
    rep = tr.theorem31_check(rmap.identity_map(3), [0, 0, 0], 2.0, trials=10, seed=0, s_max=math.pi)
    assert rep.skipped == 0
    assert rep.max_spread <= 1e-6 and rep.isotropic


def test_random_frames_are_orthonormal_and_seeded():
    j = rmap.jet(rmap.projection(3, 2), [0.1, 0.2, 0.3])
    F = tr.random_frames(j, 4, seed=5, with_v3=True)
    for fr in F:
        np.testing.assert_allclose(fr @ fr.T, np.eye(3), atol=1e-12)
        assert abs(fr[0, 2]) < 1e-12 and abs(fr[1, 2]) < 1e-12
    np.testing.assert_array_equal(F, tr.random_frames(j, 4, seed=5, with_v3=True))


# ------------------------------------------------------------ helix condition

def test_sphere3_helix_condition_side(sphere3_report, oracles):
    _, _, rep = sphere3_report
    assert rep.mode == "helix"
    assert rep.umbilic_residual <= 1e-6
    assert rep.helix_condition_residual == pytest.approx(oracles["sphere3_helix_condition_residual"], abs=1e-3)
    assert not rep.condition_holds


def test_sphere3_helix_image_matches_ambient_oracle(sphere3_report, oracles):
    _, _, rep = sphere3_report
    ref = oracles["sphere3_helix_image"]
    assert np.mean(tr.interior(rep.image_kappa_samples)) == pytest.approx(ref["kappa_mean"], abs=1e-6)
    assert np.mean(tr.interior(rep.image_tau_samples)) == pytest.approx(ref["tau_mean"], abs=1e-6)
    # the oracle finds constant image torsion as well
    assert rep.tau_spread < 1e-6 and ref["tau_spread"] < 1e-6


def test_sphere3_helix_image_is_not_an_ordinary_helix(sphere3_report):
    _, _, rep = sphere3_report
    assert rep.eq41.residual > 1e-2
    assert not rep.image_is_helix
    assert rep.biconditional_holds


def test_projection_circle_routes_to_circle_mode():
    c = mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 1.0, 0.0, 2 * math.pi, 1e-3)
    rep = tr.helix_condition_check(rmap.projection(3, 2), c)
    assert rep.mode == "circle"
    assert rep.kappa_spread <= 1e-6 and rep.tau_spread <= 1e-6
    assert rep.condition_holds and rep.image_is_helix


def test_identity_helix_both_sides_true(identity_helix):
    rep = tr.helix_condition_check(rmap.identity_map(3), identity_helix)
    assert rep.helix_condition_residual == 0.0 and rep.umbilic_residual == 0.0
    assert rep.kappa_spread <= 1e-6 and rep.tau_spread <= 1e-6
    assert rep.condition_holds and rep.image_is_helix and rep.biconditional_holds


# ------------------------------------------------------------ eq41 residual

def test_eq41_identity_helix(identity_helix):
    res = tr.eq41_residual(rmap.identity_map(3), identity_helix)
    assert res.applicable and res.residual <= 1e-3
    assert res.K2 == pytest.approx(2.0, abs=1e-6)


def test_eq41_sphere_great_circle(great_circle):
    res = tr.eq41_residual(SPHERE, great_circle)
    assert res.residual <= 1e-3
    assert res.K2 == pytest.approx(1.0, abs=1e-4)


# ------------------------------------------------------------ interior convention

@pytest.mark.parametrize("which", ["circle", "helix"])
def test_spreads_stable_when_dropping_more_boundary_samples(which, sphere_circle, identity_helix):
    if which == "circle":
        k = tr.image_curvature(SPHERE, sphere_circle).kappa_tilde
        vals = [k]
    else:
        rep = tr.helix_condition_check(rmap.identity_map(3), identity_helix)
        vals = [rep.image_kappa_samples, rep.image_tau_samples]
    for v in vals:
        s5, s8 = tr.spread(v, 5), tr.spread(v, 8)
        assert s8 <= s5
        assert abs(s5 - s8) <= 1e-6
