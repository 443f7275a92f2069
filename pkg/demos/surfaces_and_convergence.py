"""Round and perturbed spheres in Schwarzschild: closed forms and spectral convergence.

A coordinate sphere of areal radius 3 around a unit mass has H = 2 Vbar / r,
K = 1 / r^2 and Ric(nu, nu) = -2m / r^3.  For a perturbed sphere there are no
closed forms, but the Gauss and Codazzi equations and the static equation
restricted to the surface give residuals that should decay spectrally as the
bandlimit grows.

Run with ``python demos/surfaces_and_convergence.py``.
"""

import numpy as np

from schwarzlab import (
    AmbientGeometry,
    ScalarField,
    SphereGrid,
    build_surface,
    codazzi_residual,
    gauss_curvature,
    potential_gradient_residual,
    potential_laplace_residual,
    re_ylm,
)

ambient = AmbientGeometry(1.0)

grid = SphereGrid(24)
round_sphere = build_surface(ambient, grid, ScalarField.constant(grid, 3.0))
print("coordinate sphere r = 3, m = 1")
print(f"  H          {round_sphere.H.mean():.10f}   (2/(3 sqrt 3) = {2 / (3 * np.sqrt(3)):.10f})")
print(f"  K          {round_sphere.K.mean():.10f}   (1/9)")
print(f"  area       {round_sphere.area:.10f}  (36 pi = {36 * np.pi:.10f})")
print(f"  Ric(nu,nu) {round_sphere.ric_nn.mean():.10f}  (-2/27)")

print("\nresidual sup-norms on rho = 3 (1 + 0.05 Re Y22)")
print(f"  {'L':>3} {'Gauss':>10} {'Codazzi':>10} {'Laplace V':>10} {'grad V':>10} {'GB error':>10}")
for L in (7, 11, 15, 23, 31):
    grid = SphereGrid(L)
    s = build_surface(ambient, grid, 3 * (1 + 0.05 * re_ylm(grid, 2, 2)))
    row = (
        gauss_curvature(s)[1].sup(),
        max(c.sup() for c in codazzi_residual(s)),
        potential_laplace_residual(s).sup(),
        max(c.sup() for c in potential_gradient_residual(s)),
        abs(s.integrate(s.K) - 4 * np.pi),
    )
    print(f"  {L:>3} " + " ".join(f"{v:10.2e}" for v in row))
