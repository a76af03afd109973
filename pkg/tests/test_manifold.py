import math

import numpy as np
import pytest

from riemap import manifold as mf
from riemap.errors import ChartExitError, GeometryError, NotPositiveDefiniteError

E3 = mf.euclidean(3)
S1 = mf.sphere(1)


def test_registry_names():
    assert mf.manifold_from_name("sphere{2}") == mf.sphere(2)
    assert mf.manifold_from_name("sphere{1,3}").dim == 3
    assert mf.manifold_from_name("euclidean{4}").dim == 4
    assert mf.manifold_from_name("sphere{pi}").name.startswith("sphere{3.14159")
    with pytest.raises(ValueError):
        mf.manifold_from_name("torus{1}")


def test_sphere_christoffel_closed_form():
    th = math.pi / 4
    G = mf.christoffel(S1, [th, 1.0])
    assert G[0, 1, 1] == pytest.approx(-math.sin(th) * math.cos(th))
    assert G[1, 0, 1] == pytest.approx(1 / math.tan(th))
    assert G[1, 1, 0] == G[1, 0, 1]


@pytest.mark.parametrize("M,u", [(mf.sphere(2), [1.1, 2.0]), (mf.sphere(1, 3), [0.9, 1.7, 4.0])])
def test_christoffel_against_fd_oracle(M, u):
    np.testing.assert_allclose(mf.christoffel(M, u), mf.fd_christoffel(M, u), atol=1e-8)


def test_custom_metric_reads_upper_triangle():
    M = mf.custom([["1 + x1^2", "x1 * x2"], ["999", "2"]], 2)
    g = M.metric([1.0, 3.0])
    np.testing.assert_allclose(g, [[2.0, 3.0], [3.0, 2.0]])
    np.testing.assert_allclose(mf.christoffel(M, [0.3, 0.1]), mf.fd_christoffel(M, [0.3, 0.1]), atol=1e-8)


def test_not_positive_definite():
    M = mf.custom([["x1", "0"], ["0", "1"]], 2)
    with pytest.raises(NotPositiveDefiniteError):
        mf.christoffel(M, [-1.0, 0.0])


def test_flat_covariant_derivative_is_plain_derivative():
    s = np.linspace(0, 1, 21)
    path = mf.SampledPath(s, np.stack([s, s**2, 0 * s], axis=1))
    W = np.stack([s**3, s, s * 0 + 1], axis=1)
    D = mf.covariant_derivative_along(E3, path, W)
    np.testing.assert_allclose(D, np.stack([3 * s**2, 1 + 0 * s, 0 * s], axis=1), atol=1e-10)


def test_covariant_derivative_rejects_bad_grid():
    path = mf.SampledPath(np.array([0, 0.1, 0.3, 0.4, 0.5]), np.zeros((5, 3)))
    with pytest.raises(GeometryError):
        mf.covariant_derivative_along(E3, path, np.zeros((5, 3)))


def test_euclidean_helix_round_trip():
    c = mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 2.0, 0.5, 2.0, 1e-3)
    assert c.frame_deviation() < 1e-10
    # closed form about the Darboux axis A = (t T0 + k B0) / w, w^2 = k^2 + t^2
    k, t = 2.0, 0.5
    w = math.hypot(k, t)
    T0, N0, B0 = np.eye(3)
    A = (t * T0 + k * B0) / w
    S = c.s[-1]
    end = (t / w) * A * S + math.sin(w * S) * k * (k * T0 - t * B0) / w**3 + (1 - math.cos(w * S)) * k * N0 / w**2
    np.testing.assert_allclose(c.u[-1], end, atol=1e-10)
    app = mf.frenet_apparatus(E3, c)
    assert np.max(np.abs(app.kappa - 2.0)) < 1e-9
    assert np.max(np.abs(app.tau - 0.5)) < 1e-8
    assert mf.helix_residual(E3, c) < 1e-3


def test_apparatus_from_positions_only():
    c = mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 2.0, 0.5, 2.0, 1e-3)
    path = mf.SampledPath(c.s, c.u)
    app = mf.frenet_apparatus(E3, path)
    # one-sided stencils at the ends lose some accuracy in the third derivative
    assert np.max(np.abs(app.kappa - 2.0)) < 1e-6
    assert np.max(np.abs(app.tau[5:-5] - 0.5)) < 1e-6
    assert np.max(np.abs(app.tau - 0.5)) < 1e-5


def test_sphere_circle_round_trip():
    frame = [[1, 0], [0, 1], [0, 0]]
    c = mf.generate_frenet_curve(S1, [math.pi / 2, math.pi], frame, 1.0, 0.0, 2 * math.pi, 1e-3)
    assert c.frame_deviation() < 1e-10
    app = mf.frenet_apparatus(S1, c)
    assert np.max(np.abs(app.kappa - 1.0)) < 1e-9
    assert np.all(app.tau == 0.0)


def test_torsion_undefined_on_geodesic():
    s = np.linspace(0, 1, 41)
    path = mf.SampledPath(s, np.stack([s, 0 * s, 0 * s], axis=1))
    app = mf.frenet_apparatus(E3, path)
    assert np.all(app.kappa == 0.0)
    assert np.all(np.isnan(app.tau))


def test_signed_torsion_in_dimension_three():
    frame = np.eye(3)
    left = mf.generate_frenet_curve(E3, [0, 0, 0], frame, 1.0, -0.7, 1.0, 1e-3)
    app = mf.frenet_apparatus(E3, mf.SampledPath(left.s, left.u))
    assert np.median(app.tau) == pytest.approx(-0.7, abs=1e-6)


def test_generator_preconditions():
    with pytest.raises(ValueError):
        mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 0.0, 0.0, 1.0, 1e-3)
    with pytest.raises(ValueError):
        mf.generate_frenet_curve(E3, [0, 0, 0], np.eye(3), 1.0, 0.0, 1.0, 0.1)
    with pytest.raises(GeometryError):
        mf.generate_frenet_curve(S1, [1.0, 1.0], [[1, 0], [0, 1]], 1.0, 0.5, 1.0, 1e-3)
    with pytest.raises(GeometryError):
        mf.generate_frenet_curve(E3, [0, 0, 0], 2 * np.eye(3), 1.0, 0.0, 1.0, 1e-3)


def test_chart_exit_reports_arc_length():
    frame = [[-1, 0], [0, 1 / math.sin(0.3)], [0, 0]]
    with pytest.raises(ChartExitError) as info:
        mf.generate_frenet_curve(S1, [0.3, 1.0], frame, 0.01, 0.0, 1.0, 1e-3)
    assert 0.2 < info.value.s_exit < 0.3


def test_batched_integration_matches_single():
    frames = np.array([np.eye(3), np.eye(3)[[1, 2, 0]]])
    s, U, V, exit_s = mf.integrate_frenet(E3, np.zeros((2, 3)), frames, [1.0, 2.0], [0.0, 0.3], 1e-3, 500)
    single = mf.generate_frenet_curve(E3, [0, 0, 0], frames[1], 2.0, 0.3, 0.5, 1e-3)
    np.testing.assert_allclose(U[1], single.u, atol=1e-14)
    assert np.all(np.isnan(exit_s))
