import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from schwarzlab import (
    AmbientGeometry,
    Rotation,
    ScalarField,
    SphereGrid,
    TangentField,
    build_surface,
    first_variation_rhs,
    gauss_subtraction_check,
    mean_curvature_variation,
    penrose_check,
    quasilocal_mass,
    re_ylm,
)
from schwarzlab.surface import norm2


def _round(r, L=12, m=1.0):
    grid = SphereGrid(L)
    return build_surface(AmbientGeometry(m), grid, ScalarField.constant(grid, r))


def _perturbed(L=15, amp=0.05, m=1.0, r0=3.0):
    grid = SphereGrid(L)
    return build_surface(AmbientGeometry(m), grid, r0 * (1 + amp * re_ylm(grid, 2, 2)))


def _vbar(r, m=1.0):
    return np.sqrt(1 - 2 * m / r)


def test_identical_surfaces_have_zero_mass():
    s = _perturbed()
    assert quasilocal_mass(s, s).E == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_congruent_copy_has_zero_mass(seed):
    s = _perturbed()
    rep = quasilocal_mass(s.rotated(Rotation.random(np.random.default_rng(seed))), s)
    assert abs(rep.E) < 1e-10 * rep.scale


@pytest.mark.parametrize("r, r_prime", [(3.0, 3.1), (4.0, 3.0), (2.5, 6.0)])
def test_round_spheres_closed_form(r, r_prime):
    rep = quasilocal_mass(_round(r), _round(r_prime))
    v, vp = _vbar(r), _vbar(r_prime)
    expect = 4 * np.pi * r**2 * v * (2 * v / r - 2 * vp / r_prime)
    assert_allclose(rep.E, expect, rtol=1e-12)
    assert_allclose(rep.scale, 4 * np.pi * r**2 * v * 2 * v / r, rtol=1e-12)


def test_flat_round_spheres():
    rep = quasilocal_mass(_round(2.0, m=0.0), _round(5.0, m=0.0))
    assert_allclose(rep.E, 4 * np.pi * 4 * (1 / 2.0 - 1 / 5.0) * 2, rtol=1e-12)


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        quasilocal_mass(_round(3.0, L=8), _round(3.0, L=9))


def test_penrose_holds():
    v = penrose_check(quasilocal_mass(_round(3.0), _round(4.0)))
    assert v.status == "holds"
    assert v.failed_hypotheses == ()


def test_penrose_violated():
    v = penrose_check(quasilocal_mass(_round(4.0), _round(3.0)))
    assert v.status == "violated"
    assert v.E < -v.tolerance


def test_penrose_hypotheses_not_met():
    grid = SphereGrid(11)
    dented = build_surface(AmbientGeometry(0.5), grid, 3 * (1 + 0.9 * re_ylm(grid, 2, 2)))
    rep = quasilocal_mass(dented, dented)
    assert not rep.hypotheses_met
    v = penrose_check(rep)
    assert v.status == "hypotheses-not-met"
    assert "sigma_convex" in v.failed_hypotheses


def test_penrose_tolerance_scales_with_mass_scale():
    rep = quasilocal_mass(_round(3.0), _round(3.0))
    v = penrose_check(rep, rtol=1e-6)
    assert_allclose(v.tolerance, 1e-6 * rep.scale)
    assert v.status == "holds"


def test_report_serializes():
    rep = quasilocal_mass(_perturbed(L=9), _round(3.0, L=9))
    d = json.loads(rep.to_json())
    assert d["E"] == rep.E
    assert d["penrose_margin"] == rep.E
    assert set(d["hypotheses"]) == {"sigma_convex", "sigma_prime_mean_convex", "ric_nu_nonpositive"}
    assert json.loads(json.dumps(penrose_check(rep).to_dict()))["status"] in {"holds", "violated", "hypotheses-not-met"}


# -- mean curvature variation ---------------------------------------------------------


@pytest.mark.parametrize("l, mm", [(0, 0), (1, 1), (2, -2), (5, 3)])
def test_mean_curvature_variation_round_eigenmodes(l, mm):
    r = 3.0
    s = _round(r)
    y = re_ylm(s.grid, l, mm)
    H = 2 * _vbar(r) / r
    expect = (l * (l + 1) / r**2 + 2 / r**3 - H**2 / 2) * y
    assert_allclose(mean_curvature_variation(s, y).values, expect, atol=1e-12)


def test_mean_curvature_variation_tangential_part():
    s = _perturbed()
    rng = np.random.default_rng(0)
    P = TangentField(s, ScalarField.random(s.grid, rng), ScalarField.random(s.grid, rng))
    got = mean_curvature_variation(s, 0.0, P).values
    assert_allclose(got, np.einsum("...a,...a->...", P.vector, s.gradient(s.H)), atol=1e-14)
    assert_allclose(mean_curvature_variation(s, 0.0).values, 0.0)


def test_mean_curvature_variation_linear():
    s = _perturbed()
    rng = np.random.default_rng(1)
    a, b = ScalarField.random(s.grid, rng), ScalarField.random(s.grid, rng)
    lhs = mean_curvature_variation(s, a + 3 * b).values
    rhs = mean_curvature_variation(s, a).values + 3 * mean_curvature_variation(s, b).values
    assert_allclose(lhs, rhs, atol=1e-12)


# -- first variation ------------------------------------------------------------------


def _unit_traceless(grid, r):
    return r**2 * grid.from_frame(np.broadcast_to(np.diag([1.0, -1.0]) / np.sqrt(2), grid.shape + (2, 2)))


@pytest.mark.parametrize("eps", [0.0, 0.01, 0.3])
def test_first_variation_rhs_closed_form(eps):
    r = 3.0
    s = _round(r)
    A = _unit_traceless(s.grid, r)
    assert_allclose(norm2(s.g_inv, A), 1.0, atol=1e-13)
    got = first_variation_rhs(s, s, 1.0, h_prime=s.h + eps * A)
    assert_allclose(got, 0.5 * eps**2 * _vbar(r) * 4 * np.pi * r**2, rtol=1e-12, atol=1e-300)


def test_first_variation_rhs_linear_and_nonnegative():
    s, sp = _perturbed(), _round(3.0, L=15)
    rng = np.random.default_rng(2)
    f1 = 1 + 0.3 * ScalarField.random(s.grid, rng).values
    f2 = ScalarField.random(s.grid, rng).values
    a, b = first_variation_rhs(s, sp, f1), first_variation_rhs(s, sp, f2)
    assert_allclose(first_variation_rhs(s, sp, f1 - 2 * f2), a - 2 * b, rtol=1e-12)
    assert a > 0
    assert first_variation_rhs(s, s, f1) == 0.0


# -- Gauss subtraction ---------------------------------------------------------------


def test_gauss_subtraction_vanishes_for_congruent_pairs():
    s = _perturbed()
    sigma = s.rotated(Rotation.random(np.random.default_rng(3)))
    assert gauss_subtraction_check(sigma, s).sup() < 1e-8


def test_gauss_subtraction_general_pair_uses_intrinsic_curvature():
    sigma, sp = _perturbed(L=24), _perturbed(L=24, amp=0.08, r0=3.4)
    got = gauss_subtraction_check(sigma, sp).values
    expect = (sigma.intrinsic_gauss_curvature - sp.intrinsic_gauss_curvature) + 0.5 * (sp.H**2 - sigma.H**2)
    assert np.max(np.abs(got)) > 1e-3
    assert_allclose(got, expect, atol=1e-9)
