import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import euclidean_oracle
from schwarzlab import (
    AmbientGeometry,
    HorizonViolation,
    Rotation,
    ScalarField,
    SphereGrid,
    SurfaceGeometry,
    TangentField,
    build_surface,
    codazzi_residual,
    export_surface,
    gauss_curvature,
    import_surface,
    laplace_beltrami,
    potential_gradient_residual,
    potential_laplace_residual,
    re_ylm,
)

def _round(m, r0, L):
    grid = SphereGrid(L)
    return build_surface(AmbientGeometry(m), grid, ScalarField.constant(grid, r0))


def _perturbed(m, L, amp=0.05):
    grid = SphereGrid(L)
    return build_surface(AmbientGeometry(m), grid, 3 * (1 + amp * re_ylm(grid, 2, 2)))


def _frame(surf, T):
    return surf.grid.to_frame(T)


# -- coordinate spheres -------------------------------------------------------------


def test_round_sphere_closed_forms():
    s = _round(1.0, 3.0, 24)
    v = np.sqrt(1 / 3)
    assert_allclose(_frame(s, s.g), 9 * np.broadcast_to(np.eye(2), s.grid.shape + (2, 2)), atol=1e-12)
    assert_allclose(_frame(s, s.h), 3 * v * np.broadcast_to(np.eye(2), s.grid.shape + (2, 2)), atol=1e-12)
    assert_allclose(s.H, 2 * v / 3, atol=1e-12)
    assert_allclose(s.H, 0.3849002, atol=1e-7)
    assert_allclose(s.K, 1 / 9, atol=1e-12)
    assert_allclose(s.intrinsic_gauss_curvature, 1 / 9, atol=1e-12)
    assert_allclose(s.area, 36 * np.pi, rtol=1e-13)
    assert_allclose(s.area, 113.0973355, atol=1e-7)
    assert_allclose(s.ric_nn, -2 / 27, atol=1e-13)
    assert_allclose(s.V, v, atol=1e-15)
    assert_allclose(s.nu_V, v * 1 / (9 * v), rtol=1e-13)  # nu = Vbar d_r
    assert s.is_convex and s.is_mean_convex


def test_near_horizon_is_nearly_minimal():
    s = _round(1.0, 2 + 1e-6, 15)
    assert np.max(np.abs(s.H)) < 1e-3


@pytest.mark.parametrize("r0", [2.0, 1.5])
def test_horizon_violation(r0):
    with pytest.raises(HorizonViolation):
        _round(1.0, r0, 7)


@pytest.mark.parametrize("m", [0.0, 1.0])
def test_round_residuals_vanish(m):
    s = _round(m, 3.0, 15)
    assert np.max(np.abs(gauss_curvature(s)[1].values)) < 1e-10
    assert max(c.sup() for c in codazzi_residual(s)) < 1e-10
    assert potential_laplace_residual(s).sup() < 1e-10
    assert max(c.sup() for c in potential_gradient_residual(s)) < 1e-10


def test_flat_potential_residuals():
    s = _perturbed(0.0, 15)
    assert potential_laplace_residual(s).sup() < 1e-10
    assert max(c.sup() for c in potential_gradient_residual(s)) < 1e-12


# -- convergence ------------------------------------------------------------------


def _sup_residuals(s):
    return {
        "gauss": gauss_curvature(s)[1].sup(),
        "codazzi": max(c.sup() for c in codazzi_residual(s)),
        "laplace": potential_laplace_residual(s).sup(),
        "gradient": max(c.sup() for c in potential_gradient_residual(s)),
    }


@pytest.fixture(scope="module")
def convergence():
    return {L: _sup_residuals(_perturbed(1.0, L)) for L in (15, 31)}


@pytest.mark.parametrize("name", ["gauss", "codazzi", "laplace", "gradient"])
def test_residual_decay(convergence, name):
    assert convergence[15][name] / convergence[31][name] >= 50


def test_flat_gauss_residual_decay():
    coarse = gauss_curvature(_perturbed(0.0, 15))[1].sup()
    fine = gauss_curvature(_perturbed(0.0, 31))[1].sup()
    # in the flat limit the residual is already at rounding level at L = 15
    assert coarse / fine >= 50 or max(coarse, fine) < 1e-13


def test_flat_codazzi_decay_on_ellipsoid_like_graph():
    def surf(L):
        grid = SphereGrid(L)
        rho = 3 * (1 + 0.08 * re_ylm(grid, 2, 0) + 0.04 * re_ylm(grid, 2, 2))
        return build_surface(AmbientGeometry(0.0), grid, rho)

    coarse = max(c.sup() for c in codazzi_residual(surf(15)))
    fine = max(c.sup() for c in codazzi_residual(surf(31)))
    assert coarse / fine >= 50 or fine < 1e-12


@pytest.mark.parametrize("m", [0.0, 1.0])
def test_gauss_bonnet(m):
    grid = SphereGrid(31)
    rho = 3 * (1 + 0.1 * re_ylm(grid, 2, 2) + 0.05 * re_ylm(grid, 3, 1))
    s = build_surface(AmbientGeometry(m), grid, rho)
    assert abs(s.integrate(s.K) - 4 * np.pi) < 1e-8


# -- intrinsic calculus -------------------------------------------------------------


def test_divergence_theorem_and_self_adjointness():
    s = _perturbed(1.0, 20, amp=0.1)
    rng = np.random.default_rng(0)
    f = ScalarField.random(s.grid, rng)
    g = ScalarField.random(s.grid, rng)
    assert abs(s.integrate(laplace_beltrami(s, f))) < 1e-9
    lhs = s.integrate(f.values * s.laplacian(g) - g.values * s.laplacian(f))
    assert abs(lhs) < 1e-8


def test_area_element_is_sqrt_det():
    s = _perturbed(1.0, 15, amp=0.1)
    g2 = _frame(s, s.g)
    assert_allclose(s.mu, np.sqrt(np.linalg.det(g2)), rtol=1e-14)
    assert np.all(np.linalg.eigvalsh(g2) > 0)


def test_convexity_flag_matches_eigenvalues():
    s = _perturbed(1.0, 15, amp=0.1)
    k = s.principal_curvatures
    assert s.is_convex == bool(k.min() > 0)
    assert_allclose(k.sum(axis=-1), s.H, atol=1e-12)
    grid = SphereGrid(15)
    dented = build_surface(AmbientGeometry(0.5), grid, 3 * (1 + 0.9 * re_ylm(grid, 2, 2)))
    assert not dented.is_convex and dented.principal_curvatures.min() < 0


def test_laplacian_on_round_sphere():
    s = _round(1.0, 3.0, 12)
    y = re_ylm(s.grid, 2, 2)
    assert_allclose(s.laplacian(y), -6 / 9 * y, atol=1e-12)


# -- flat-limit oracle --------------------------------------------------------------


@pytest.mark.parametrize("amp, L, tol", [(0.0, 16, 1e-9), (0.05, 31, 1e-10), (0.2, 31, 1e-8)])
def test_flat_limit_matches_euclidean_formulas(amp, L, tol):
    grid = SphereGrid(L)
    s = build_surface(AmbientGeometry(0.0), grid, 3 * (1 + amp * re_ylm(grid, 2, 2)))
    ref = euclidean_oracle(amp)(grid)
    assert_allclose(s.H, ref["H"], atol=tol)
    assert_allclose(s.K, ref["K"], atol=tol)
    assert_allclose(s.intrinsic_gauss_curvature, ref["K"], atol=tol)
    assert_allclose(s.mu, ref["mu"], rtol=tol)
    assert_allclose(s.V, 1.0)
    assert np.all(s.nu_V == 0) and np.all(s.ric_nn == 0)


# -- symmetry and serialization -------------------------------------------------------


def test_rotation_equivariance():
    s = _perturbed(1.0, 31, amp=0.08)
    grid = s.grid
    R = Rotation.random(np.random.default_rng(1)).matrix
    src = grid.omega @ R  # R^T omega
    th = np.arccos(np.clip(src[..., 2], -1, 1))
    ph = np.arctan2(src[..., 1], src[..., 0])
    rho_rot = grid.interpolate(s.rho.coefficients(), th, ph)
    s_rot = build_surface(s.ambient, grid, ScalarField(grid, rho_rot))
    for name in ("H", "K", "V", "mu", "ric_nn"):
        pulled = grid.interpolate(grid.analyze(getattr(s, name)), th, ph)
        assert_allclose(getattr(s_rot, name), pulled, atol=1e-9, err_msg=name)


def test_rotated_copy_keeps_intrinsic_and_extrinsic_data():
    s = _perturbed(1.0, 15, amp=0.08)
    c = s.rotated(Rotation.random(np.random.default_rng(2)))
    for name in ("g", "h", "H", "K", "V", "mu", "ric_nn"):
        assert_allclose(getattr(c, name), getattr(s, name), atol=1e-12, err_msg=name)


def test_from_embedding_reproduces_graph():
    s = _perturbed(1.0, 15, amp=0.08)
    e = SurfaceGeometry.from_embedding(s.ambient, s.grid, s.X)
    assert_allclose(e.H, s.H, atol=1e-11)
    assert_allclose(e.g, s.g, atol=1e-11)


def test_export_import_round_trip(tmp_path):
    s = _perturbed(1.0, 12, amp=0.08)
    text = export_surface(s)
    path = tmp_path / "surf.json"
    path.write_text(text)
    back = import_surface(path.read_text())
    assert back.grid == s.grid and back.m == s.m
    assert np.array_equal(back.rho.values, s.rho.values)
    assert_allclose(back.H, s.H, atol=0)
    up = import_surface(text, SphereGrid(20))
    assert up.grid.L == 20
    assert_allclose(up.area, s.area, rtol=1e-12)


def test_import_rejects_incomplete_record():
    with pytest.raises(ValueError, match="rho"):
        import_surface('{"m": 1.0, "n_lat": 8, "n_lon": 16}')


# -- tangent fields -----------------------------------------------------------------


def test_tangent_field_potentials_round_trip():
    s = _perturbed(1.0, 14, amp=0.1)
    rng = np.random.default_rng(3)
    f = ScalarField.random(s.grid, rng)
    u = ScalarField.random(s.grid, rng)
    P = TangentField(s, f, u)
    Q = TangentField.from_covector(s, P.covector)
    assert_allclose(Q.f.values, P.f.values, atol=1e-10)
    assert_allclose(Q.u.values, P.u.values, atol=1e-10)
    assert abs(s.grid.integrate(P.f.values)) < 1e-13


def test_gradient_field_divergence_is_laplacian():
    s = _perturbed(1.0, 24, amp=0.1)
    f = ScalarField.random(s.grid, np.random.default_rng(4))
    P = TangentField(s, f)
    assert_allclose(P.divergence(), s.laplacian(f), atol=1e-10)
    # the co-gradient part is divergence free
    Q = TangentField(s, None, f)
    assert np.max(np.abs(Q.divergence())) < 1e-10
