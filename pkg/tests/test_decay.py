import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from eigenbranch.assembly import assemble
from eigenbranch.decay import (
    BETA_GENERAL,
    BETA_MONOTONE,
    certify_theorem1,
    certify_theorem2,
    fit_decay_rate,
    maslov_check,
    slice_norm,
    tail_norm,
)
from eigenbranch.errors import InsufficientDataError, InvalidInputError
from eigenbranch.geometry import build_elongated_polygon, robin
from eigenbranch.meshing import refine, triangulate
from eigenbranch.thresholds import threshold_curve

PI2 = math.pi**2


def test_slice_norm_constant(neumann_square_mesh):
    u = np.ones(neumann_square_mesh.n_vertices)
    for x in (0.1, 0.37, 0.5, 0.93):
        assert_allclose(slice_norm(neumann_square_mesh, u, x), 1.0, rtol=1e-13)
    assert slice_norm(neumann_square_mesh, u, 2.0) == 0.0


def test_slice_norm_exact_for_linear(neumann_square_mesh):
    mesh = neumann_square_mesh
    u = mesh.vertices[:, 1]
    # int_0^1 y^2 dy = 1/3
    assert_allclose(slice_norm(mesh, u, 0.41), math.sqrt(1 / 3), rtol=1e-13)
    assert_allclose(slice_norm(mesh, u, 0.5, y_range=(0.0, 0.5)), math.sqrt(1 / 24), rtol=1e-13)


def test_slice_norm_hat_vanishing_on_chord(neumann_square_mesh):
    mesh = neumann_square_mesh
    u = np.zeros(mesh.n_vertices)
    i = int(np.argmin(np.linalg.norm(mesh.vertices - 0.5, axis=1)))
    u[i] = 1.0
    x = mesh.vertices[i, 0]
    nbrs = np.unique(mesh.triangles[np.any(mesh.triangles == i, axis=1)])
    left = mesh.vertices[nbrs, 0].min()
    assert slice_norm(mesh, u, left - 1e-9) == 0.0
    assert slice_norm(mesh, u, x) > 0


def test_tail_norm_limits(neumann_square_mesh):
    mesh = neumann_square_mesh
    sys = assemble(mesh)
    u = np.cos(np.pi * mesh.vertices[:, 0]) + 0.3
    u = u / math.sqrt(u @ (sys.M @ u))
    assert_allclose(tail_norm(mesh, u, 0.0), 1.0, rtol=1e-12)
    assert tail_norm(mesh, u, 1.0) == 0.0
    assert_allclose(tail_norm(mesh, np.ones(mesh.n_vertices), 0.25), math.sqrt(0.75), rtol=1e-12)


def test_tail_slice_identity(sine_case):
    _, mesh, pairs = sine_case
    u = pairs[0].u
    z = np.linspace(1.0, 5.0, 801)
    s2 = np.array([slice_norm(mesh, u, x) ** 2 for x in z])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (s2[1:] + s2[:-1]) * np.diff(z))])
    tails = np.array([tail_norm(mesh, u, x) ** 2 for x in z[::100]])
    assert_allclose(tails, integral[-1] - integral[::100], rtol=1e-4, atol=1e-12)
    assert np.all(np.diff(tails) <= 0)


def test_theorem1_sine(sine_case):
    dom, mesh, pairs = sine_case
    mu = threshold_curve(dom.branch_profile).mu
    rep = certify_theorem1(mesh, pairs[0].u, pairs[0].eigenvalue, mu, 0.0, z_end=5.0)
    assert rep.verdict == "pass"
    assert rep.beta == BETA_GENERAL
    assert rep.fitted_rate >= rep.predicted_rate * 0.95
    assert np.all(np.diff(rep.tail_norms) <= 1e-15)
    for p in pairs[1:]:
        other = certify_theorem1(mesh, p.u, p.eigenvalue, mu, 0.0, z_end=5.0)
        assert other.verdict == "not_applicable"
        assert other.bound is None


def test_boundary_case_lambda_equals_mu(sine_case):
    _, mesh, pairs = sine_case
    lam = pairs[0].eigenvalue
    assert certify_theorem1(mesh, pairs[0].u, lam, lam, 0.0).verdict == "not_applicable"
    assert certify_theorem2(mesh, pairs[0].u, lam, lam, 0.0).verdict == "not_applicable"


def test_invariance_sign_and_scale(sine_case):
    _, mesh, pairs = sine_case
    u, lam = pairs[0].u, pairs[0].eigenvalue
    ref = certify_theorem1(mesh, u, lam, PI2, 0.0, z_end=5.0)
    for v in (-u, 7.0 * u):
        rep = certify_theorem1(mesh, v, lam, PI2, 0.0, z_end=5.0)
        assert rep.verdict == ref.verdict
        assert_allclose(rep.slice_norms / rep.slice_norms[0], ref.slice_norms / ref.slice_norms[0], rtol=1e-12)


def test_theorem2_triangle(triangle_case):
    dom, mesh, pairs = triangle_case
    prof = dom.branch_profile
    mu = threshold_curve(prof).mu
    u, lam = pairs[0].u, pairs[0].eigenvalue
    assert lam < mu
    rep = certify_theorem2(mesh, u, lam, mu, prof.origin, z_end=prof.origin + prof.a)
    assert rep.verdict == "pass"
    assert rep.beta == BETA_GENERAL
    assert_allclose(rep.bound_margins[0], 0.0, atol=1e-15)
    mono = certify_theorem1(mesh, u, lam, mu, prof.origin, monotone=True, z_end=prof.origin + prof.a)
    assert mono.beta == BETA_MONOTONE
    assert mono.verdict == "pass"
    assert certify_theorem2(mesh, pairs[1].u, pairs[1].eigenvalue, mu, prof.origin).verdict == "not_applicable"


def test_report_io(tmp_path, triangle_case):
    dom, mesh, pairs = triangle_case
    rep = certify_theorem2(mesh, pairs[0].u, pairs[0].eigenvalue, PI2, 2.0, n_grid=16)
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 17
    assert lines[0] == "z,slice_norm,tail_norm,bound,margin"


def test_maslov_triangle(triangle_case):
    dom, mesh, pairs = triangle_case
    prof = dom.branch_profile
    x = np.linspace(prof.origin, prof.origin + prof.a, 64)
    rep = maslov_check(mesh, pairs[0].u, pairs[0].eigenvalue, PI2, x)
    assert rep.fraction >= 0.95
    assert rep.passed
    assert rep.endpoint["I_end_ok"] and rep.endpoint["I_prime_end_ok"]
    assert rep.I_prime_negative


def test_maslov_negative_control():
    # u = exp(-x) sin(pi y) on a strip: I'' = 4 I up to the far-end term
    dom = build_elongated_polygon([(0, 0), (6, 0), (6, 1), (0, 1)], 3.0, robin(0.0))
    mesh = refine(triangulate(dom, 0.05))
    u = np.exp(-mesh.vertices[:, 0]) * np.sin(np.pi * mesh.vertices[:, 1])
    x = np.linspace(0.0, 4.0, 64)
    ok = maslov_check(mesh, u, 0.0, 1.5, x, closed_end=False)
    assert ok.passed
    bad = maslov_check(mesh, u, 0.0, 5.0, x, closed_end=False)
    assert not bad.passed
    assert bad.fraction < 0.05


def test_maslov_input_checks(triangle_case):
    _, mesh, pairs = triangle_case
    u = pairs[0].u
    with pytest.raises(InvalidInputError):
        maslov_check(mesh, u, 9.0, PI2, np.linspace(2, 8, 7))
    with pytest.raises(InvalidInputError):
        maslov_check(mesh, u, 9.0, PI2, np.geomspace(2, 8, 20))
    with pytest.raises(InvalidInputError):
        maslov_check(mesh, u, 10.0, PI2, np.linspace(2, 8, 20))


def test_fit_decay_rate():
    z = np.linspace(0, 5, 40)
    norms = 3.0 * np.exp(-2.5 * z)
    assert_allclose(fit_decay_rate(z, norms), 2.5, rtol=1e-10)
    norms[20] = 0.0
    assert_allclose(fit_decay_rate(z, norms), 2.5, rtol=1e-10)
    with pytest.raises(InsufficientDataError):
        fit_decay_rate(z, np.full_like(z, 1e-14))
