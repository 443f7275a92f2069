"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines are
printed even when output capture is on.
"""

import numpy as np
import pytest

from oracles import euclidean_oracle, random_points, ricci_from_christoffel
from schwarzlab import (
    AmbientGeometry,
    AmbientPoint,
    Rotation,
    ScalarField,
    SphereGrid,
    TangentField,
    build_surface,
    codazzi_residual,
    displace,
    fd_mass_derivative,
    first_order_mass_check,
    first_variation_rhs,
    gauss_curvature,
    isometric_continuation,
    isometry_operator,
    killing_data,
    mass_scale,
    mean_curvature_variation,
    metric,
    metric_sup,
    metric_variation,
    potential_gradient_residual,
    potential_laplace_residual,
    re_ylm,
    ricci,
    solve_linearized_isometry,
    static_residual,
    traceless_residual,
)
from schwarzlab.cli import ricci_monotonicity
from schwarzlab.linearization import tensor_l2


@pytest.fixture
def verdict(capsys):
    def report(n, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'FAIL'}]" for text, passed in checks)
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return report


def _perturbed(L, m=1.0, amp=0.05):
    grid = SphereGrid(L)
    return build_surface(AmbientGeometry(m), grid, 3 * (1 + amp * re_ylm(grid, 2, 2)))


def _round(L, r, m=1.0):
    grid = SphereGrid(L)
    return build_surface(AmbientGeometry(m), grid, ScalarField.constant(grid, r))


def _random_speed(grid, rng):
    f = ScalarField.random(grid, rng)
    return 1.0 + 0.5 * f / f.sup()


def test_criterion_1_ambient_identities(verdict):
    rng = np.random.default_rng(2024)
    static, trace, assembled = 0.0, 0.0, 0.0
    for m, r, th, ph in zip(*random_points(rng, 1000)):
        geom, p = AmbientGeometry(m), AmbientPoint(r, th, ph)
        R = ricci(geom, p)
        static = max(static, np.max(np.abs(static_residual(geom, p))))
        trace = max(trace, abs(np.einsum("ij,ij->", np.linalg.inv(metric(geom, p)), R)))
        err = np.max(np.abs(ricci_from_christoffel(geom, p, 2e-3) - R)) / max(1.0, np.max(np.abs(R)))
        assembled = max(assembled, err)
    verdict(1, [
        (f"static residual {static:.2e} < 1e-10", static < 1e-10),
        (f"Ricci trace {trace:.2e} < 1e-12", trace < 1e-12),
        (f"assembled vs closed-form Ricci {assembled:.2e} <= 1e-8", assembled <= 1e-8),
    ])


def test_criterion_2_round_sphere_closed_forms(verdict):
    s = _round(24, 3.0)
    # stated value (7 decimals), exact closed form, tolerance
    cases = {
        "H": (s.H, 0.3849002, 2 / (3 * np.sqrt(3)), 1e-8),
        "K": (s.K, 0.1111111, 1 / 9, 1e-8),
        "area": (np.array([s.area]), 113.0973355, 36 * np.pi, 1e-10),
        "Ric(nu,nu)": (s.ric_nn, -0.0740741, -2 / 27, 1e-10),
    }
    checks = []
    for name, (got, stated, exact, tol) in cases.items():
        err = np.max(np.abs(got - exact))
        checks.append((f"{name}: |computed - exact| = {err:.1e} <= {tol:g}", err <= tol))
        rounded = np.all(np.round(got, 7) == stated)
        checks.append((f"{name} rounds to {stated}", bool(rounded)))
    verdict(2, checks)


def test_criterion_3_convergence(verdict):
    def residuals(L):
        s = _perturbed(L)
        return s, {
            "Gauss": gauss_curvature(s)[1].sup(),
            "Codazzi": max(c.sup() for c in codazzi_residual(s)),
            "Laplace V": potential_laplace_residual(s).sup(),
            "grad nu(V)": max(c.sup() for c in potential_gradient_residual(s)),
        }

    _, coarse = residuals(15)
    fine_surface, fine = residuals(31)
    checks = [(f"{k} decay {coarse[k] / fine[k]:.0f} >= 50", coarse[k] / fine[k] >= 50) for k in coarse]
    gb = abs(fine_surface.integrate(fine_surface.K) - 4 * np.pi)
    checks.append((f"Gauss-Bonnet error {gb:.1e} < 1e-8", gb < 1e-8))
    verdict(3, checks)


def _central_order(exact, family, steps=(1e-3, 5e-4)):
    c1, c2 = ((family(t) - family(-t)) / (2 * t) for t in steps)
    order = np.log2(np.max(np.abs(c1 - exact)) / np.max(np.abs(c2 - exact)))
    rel = np.max(np.abs((4 * c2 - c1) / 3 - exact)) / np.max(np.abs(exact))
    return order, rel


def test_criterion_4_variation_formulas(verdict):
    s = _perturbed(31)
    rng = np.random.default_rng(4)
    G = ScalarField.random(s.grid, rng)
    P = TangentField(s, ScalarField.random(s.grid, rng), ScalarField.random(s.grid, rng))
    moved = {}

    def at(t):
        if t not in moved:
            moved[t] = displace(s, G, P, t)
        return moved[t]

    og, rg = _central_order(metric_variation(s, G, P).frame(), lambda t: s.grid.to_frame(at(t).g))
    oh, rh = _central_order(mean_curvature_variation(s, G, P).values, lambda t: at(t).H)
    verdict(4, [
        (f"metric_variation order {og:.3f} in [1.8, 2.2]", 1.8 <= og <= 2.2),
        (f"metric_variation Richardson rel. error {rg:.1e} <= 1e-5", rg <= 1e-5),
        (f"mean_curvature_variation order {oh:.3f} in [1.8, 2.2]", 1.8 <= oh <= 2.2),
        (f"mean_curvature_variation Richardson rel. error {rh:.1e} <= 1e-5", rh <= 1e-5),
    ])


def test_criterion_5_killing_kernel(verdict):
    checks = []
    for name, s in (("round", _round(31, 3.0)), ("perturbed", _perturbed(31))):
        dg = dh = 0.0
        for axis in np.eye(3):
            G, P = killing_data(s, axis)
            dg = max(dg, metric_variation(s, G, P).sup())
            dh = max(dh, mean_curvature_variation(s, G, P).sup())
        checks.append((f"{name}: |dg|_sup {dg:.1e} < 1e-8", dg < 1e-8))
        checks.append((f"{name}: |dH|_sup {dh:.1e} < 1e-8", dh < 1e-8))
    verdict(5, checks)


def test_criterion_6_linearized_solver(verdict):
    base = _perturbed(31)
    rng = np.random.default_rng(6)
    sigma = base.rotated(Rotation.random(rng))
    op = isometry_operator(sigma)
    F1, F2 = _random_speed(sigma.grid, rng), _random_speed(sigma.grid, rng)
    d1 = solve_linearized_isometry(sigma, base, F1, operator=op)
    d2 = solve_linearized_isometry(sigma, base, F2, operator=op)
    d12 = solve_linearized_isometry(sigma, base, F1 + 2 * F2, operator=op)

    target = 2 * F1.values[..., None, None] * base.h
    scale = tensor_l2(sigma, target)
    full_residual = tensor_l2(sigma, target - metric_variation(sigma, d1.G, d1.P).cartesian()) / scale
    traceless = tensor_l2(sigma, traceless_residual(sigma, base, F1, d1.G, d1.P)) / scale
    lin = max(np.max(np.abs(d12.G.values - d1.G.values - 2 * d2.G.values)),
              np.max(np.abs(d12.P.covector - d1.P.covector - 2 * d2.P.covector)))
    verdict(6, [
        (f"relative residual {full_residual:.1e} <= 1e-6", full_residual <= 1e-6),
        (f"traceless residual {traceless:.1e} <= 10 x {full_residual:.1e}", traceless <= 10 * full_residual),
        (f"linearity defect {lin:.1e} <= 1e-8", lin <= 1e-8),
    ])


def test_criterion_7_first_variation(verdict):
    L = 15
    base = _perturbed(L)
    rng = np.random.default_rng(7)
    sigma = base.rotated(Rotation.random(rng))
    F = _random_speed(base.grid, rng)
    scale = mass_scale(sigma)
    family = isometric_continuation(sigma, base, F, 0.01, 5, two_sided=True)
    fd, _ = fd_mass_derivative(family)
    rhs = first_variation_rhs(sigma, base, F)
    eps = 0.05
    P = TangentField(base, eps * ScalarField.random(base.grid, rng), eps * ScalarField.random(base.grid, rng))
    chk = first_order_mass_check(base, F, P)
    rel = abs(chk["fd"] - chk["rhs"]) / abs(chk["rhs"])
    verdict(7, [
        (f"congruent |E'(0)| = {abs(fd):.1e} <= 1e-6 x {scale:.2f}", abs(fd) <= 1e-6 * scale),
        (f"congruent rhs {abs(rhs):.1e} <= 1e-12", abs(rhs) <= 1e-12),
        (f"synthetic family rel. error {rel:.1e} <= 1e-3", rel <= 1e-3),
    ])


def test_criterion_8_penrose_consistency(verdict):
    L = 15
    base = _perturbed(L)
    rng = np.random.default_rng(8)
    sigma = base.rotated(Rotation.random(rng))
    F = _random_speed(base.grid, rng)
    assert np.min(F.values) >= 0
    drift_tol = 1e-7 * metric_sup(base)
    family = isometric_continuation(sigma, base, F, 0.05, 50, drift_tol=drift_tol)
    scale = family.scale
    e_min = float(np.min(family.E))
    drift = float(np.max(family.drifts))
    mono = [ricci_monotonicity(m, np.random.default_rng(k), 1000)["violations"]
            for k, m in enumerate((0.1, 1.0, 2.0))]
    verdict(8, [
        (f"{len(family.records)} records, min E = {e_min:.1e} >= -1e-8 x {scale:.2f}", e_min >= -1e-8 * scale),
        (f"max drift {drift:.1e} <= {drift_tol:.1e}", drift <= drift_tol),
        (f"Ricci-norm monotonicity violations {sum(mono)} on 3 x 1000 pairs", sum(mono) == 0),
    ])


def test_criterion_9_flat_limit(verdict):
    checks = []
    worst = 0.0
    for r in (0.5, 3.0, 17.0):
        s = _round(24, r, m=0.0)
        worst = max(
            worst,
            np.max(np.abs(s.H - 2 / r)),
            np.max(np.abs(s.K - 1 / r**2)),
            abs(s.area - 4 * np.pi * r**2) / (4 * np.pi * r**2),
            np.max(np.abs(s.intrinsic_gauss_curvature - 1 / r**2)),
            np.max(np.abs(s.V - 1)),
            np.max(np.abs(s.ric_nn)),
        )
    checks.append((f"round spheres within {worst:.1e} < 1e-9", worst < 1e-9))
    for amp, tol in ((0.05, 1e-10), (0.2, 1e-8)):
        grid = SphereGrid(31)
        s = build_surface(AmbientGeometry(0.0), grid, 3 * (1 + amp * re_ylm(grid, 2, 2)))
        ref = euclidean_oracle(amp)(grid)
        err = max(np.max(np.abs(s.H - ref["H"])), np.max(np.abs(s.K - ref["K"])),
                  np.max(np.abs(s.intrinsic_gauss_curvature - ref["K"])),
                  np.max(np.abs(s.mu - ref["mu"]) / ref["mu"]))
        checks.append((f"graph amp {amp}: {err:.1e} <= spectral tolerance {tol:g}", err <= tol))
    verdict(9, checks)
