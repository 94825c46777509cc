import warnings

import numpy as np
import pytest

from calderonlab.geometry import interior_quadrature, make_domain
from calderonlab.laplace import (ConditioningError, DirichletProblem, GreenAccuracyWarning, LaplaceSolver,
                                 MultiplyConnectedDomain, field_to_csv, green_kernel, h1_norm, l2_norm,
                                 solve_dirichlet, spectral_tail)

from conftest import disc_points


def polar(x):
    return np.hypot(x[:, 0], x[:, 1]), np.arctan2(x[:, 1], x[:, 0])


def test_linear_data_reproduced(unit_disc, rng):
    x = disc_points(rng, 2000, 0.999999)
    u = solve_dirichlet(unit_disc, unit_disc.points[:, 0])
    assert np.max(np.abs(u(x) - x[:, 0])) < 1e-10
    np.testing.assert_allclose(u.gradient(x).real, np.tile([1.0, 0.0], (len(x), 1)), atol=1e-8)


def test_constant_data(unit_disc, rng):
    u = solve_dirichlet(DirichletProblem(unit_disc, np.ones(unit_disc.M)))
    assert np.max(np.abs(u(disc_points(rng, 500)) - 1)) < 1e-12


@pytest.mark.parametrize("k", [2, 3, 7])
def test_separation_of_variables_oracle(unit_disc, rng, k):
    th = np.arctan2(unit_disc.points[:, 1], unit_disc.points[:, 0])
    u = solve_dirichlet(unit_disc, np.cos(k * th) + 1j * np.sin(k * th))
    x = disc_points(rng, 1000, 0.999)
    r, t = polar(x)
    assert np.max(np.abs(u(x) - r**k * np.exp(1j * k * t))) < 1e-8
    assert np.max(np.abs(u.normal_derivative() - k * np.exp(1j * k * th))) < 1e-8


def test_trace_and_boundary_evaluation(tangent_disc):
    g = np.exp(tangent_disc.points[:, 0]) * np.cos(tangent_disc.points[:, 1])
    u = solve_dirichlet(tangent_disc, g)
    assert np.max(np.abs(u.trace - g)) < 1e-12
    assert np.max(np.abs(u(tangent_disc.points) - g)) < 1e-12


def test_ellipse_against_harmonic_closed_form(rng):
    e = make_domain("ellipse", 256, a=1.5, b=0.7, angle=0.3)
    f = lambda p: np.exp(p[:, 0]) * np.cos(p[:, 1]) + 1j * np.log(np.hypot(p[:, 0] - 3, p[:, 1] - 1))  # noqa: E731
    u = solve_dirichlet(e, f(e.points))
    x = rng.uniform(-1.6, 1.6, (4000, 2))
    x = x[e.contains(x)]
    assert np.max(np.abs(u(x) - f(x))) < 1e-9


def test_multiply_connected(rng):
    outer = make_domain("circle", 256, radius=2.0)
    holes = (make_domain("circle", 128, radius=0.4, center=(0.8, 0.3)),
             make_domain("ellipse", 128, a=0.3, b=0.2, center=(-0.7, -0.5)))
    d = MultiplyConnectedDomain(outer, holes)
    f = lambda p: (np.log(np.hypot(p[:, 0] - 0.8, p[:, 1] - 0.3))  # noqa: E731
                   + 2 * np.log(np.hypot(p[:, 0] + 0.6, p[:, 1] + 0.5)) + p[:, 0] * p[:, 1])
    u = solve_dirichlet(d, f(d.points))
    x = rng.uniform(-2, 2, (6000, 2))
    x = x[d.contains(x)]
    assert np.max(np.abs(u(x) - f(x))) < 1e-8
    with pytest.raises(ValueError, match="inside"):
        MultiplyConnectedDomain(outer, (make_domain("circle", 128, radius=0.4, center=(1.9, 0.0)),))


def test_maximum_principle(tangent_disc, rng):
    g = np.cos(5 * tangent_disc.points[:, 1]) * tangent_disc.points[:, 0]
    u = solve_dirichlet(tangent_disc, g)
    x = disc_points(rng, 3000, 0.999, (-1.0, 0.0))
    assert np.max(np.abs(u(x))) <= np.max(np.abs(g)) + 1e-8


def test_spectral_convergence():
    errs = []
    for M in (64, 128, 256):
        d = make_domain("fourier", M, amplitude=0.2, mode=3)
        f = lambda p: np.exp(p[:, 0]) * np.sin(p[:, 1])  # noqa: E731
        u = solve_dirichlet(d, f(d.points))
        x = np.array([[0.1, 0.2], [-0.5, 0.3], [0.6, -0.4]])
        errs.append(np.max(np.abs(u(x) - f(x))))
    assert errs[2] < 1e-12
    assert errs[1] < errs[0] / 100 or errs[1] < 1e-13


def test_bad_inputs(unit_disc):
    with pytest.raises(ValueError, match="samples"):
        solve_dirichlet(unit_disc, np.ones(10))
    with pytest.raises(ValueError, match="finite"):
        solve_dirichlet(unit_disc, np.full(unit_disc.M, np.nan))


def test_conditioning_error_carries_estimate(unit_disc):
    with pytest.raises(ConditioningError) as exc:
        LaplaceSolver(unit_disc, cond_limit=1.0)
    assert exc.value.condition > 1.0


def test_green_kernel_oracles(unit_disc, rng):
    G = green_kernel(unit_disc)
    y = disc_points(rng, 20, 0.9)
    np.testing.assert_allclose(G.matrix([[0.0, 0.0]], y)[0], -np.log(np.hypot(*y.T)) / (2 * np.pi), atol=1e-12)
    x, yy = np.array([0.3, 0.0]), np.array([-0.2, 0.4])
    ny = np.linalg.norm(yy)
    ref = -(np.log(np.linalg.norm(x - yy)) - np.log(ny * np.linalg.norm(x - yy / ny**2))) / (2 * np.pi)
    assert abs(G(x, yy)[0] - ref) < 1e-8
    # vanishes on the boundary, any domain
    e = make_domain("stadium", 256)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GreenAccuracyWarning)
        assert np.max(np.abs(green_kernel(e).matrix([[0.2, 0.1]], e.points))) < 1e-12


def test_green_reciprocity():
    e = make_domain("ellipse", 256, a=1.4, b=0.8)
    rng = np.random.default_rng(5)
    x = disc_points(rng, 100, 0.6)
    y = disc_points(rng, 100, 0.6)
    G = green_kernel(e)
    assert np.max(np.abs(G(x, y) - G(y, x))) < 1e-8


def test_green_near_boundary_warns(unit_disc):
    G = green_kernel(unit_disc)
    with pytest.warns(GreenAccuracyWarning):
        G.matrix([[0.0, 0.0]], [[0.9999, 0.0]])


def test_h1_norm_oracles(unit_disc):
    q = interior_quadrature(unit_disc, 32)
    one = solve_dirichlet(unit_disc, np.ones(unit_disc.M))
    assert h1_norm(one, q) == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    x1 = solve_dirichlet(unit_disc, unit_disc.points[:, 0])
    assert h1_norm(x1, q) == pytest.approx(np.sqrt(np.pi / 4 + np.pi), rel=1e-12)
    two = solve_dirichlet(unit_disc, 2 * unit_disc.points[:, 0])
    assert h1_norm(two, q) == pytest.approx(2 * h1_norm(x1, q), rel=1e-13)
    assert l2_norm(one, q) == pytest.approx(np.sqrt(np.pi), rel=1e-12)


def test_spectral_tail_and_csv(unit_disc, tmp_path):
    assert spectral_tail(np.zeros(64)) == 0.0
    assert spectral_tail(np.cos(2 * np.pi * np.arange(64) / 64)) < 1e-14
    u = solve_dirichlet(unit_disc, unit_disc.points[:, 1])
    field_to_csv(u, [[0.1, 0.2]], tmp_path / "u.csv")
    row = (tmp_path / "u.csv").read_text().splitlines()[1].split(",")
    assert float(row[2]) == pytest.approx(0.2, abs=1e-12)
