"""Quasi-local mass with Schwarzschild reference and its first variation.

For surfaces ``Sigma`` and ``Sigma'`` sharing one parameter grid,

    E = int_Sigma V (H - H') dsigma,

with ``V`` the static potential restricted to ``Sigma``.  The first
variation of ``E`` along a pair of families with ``H = H'`` at ``s = 0`` is
``1/2 int F V |h - h'|^2 dsigma``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .sphere import ScalarField, values_of
from .surface import SurfaceGeometry, TangentField, norm2

__all__ = [
    "MassReport",
    "PenroseVerdict",
    "first_variation_rhs",
    "gauss_subtraction_check",
    "mean_curvature_variation",
    "penrose_check",
    "quasilocal_mass",
    "mass_scale",
]

PENROSE_RTOL = 1e-8
_REPORT_FIELDS = (
    "E", "scale", "H_min", "H_prime_min", "sigma_convex",
    "sigma_prime_mean_convex", "ric_nu_max", "penrose_margin",
)


@dataclass
class MassReport:
    """Mass value together with the quantities that gate the Penrose check.

    ``penrose_margin`` equals ``E``; the hypothesis flags say whether the
    sign of ``E`` is predicted.  ``scale = int V H dsigma`` sets the absolute
    tolerance of sign decisions.
    """

    E: float
    scale: float
    H_min: float
    H_prime_min: float
    sigma_convex: bool
    sigma_prime_mean_convex: bool
    ric_nu_max: float
    penrose_margin: float
    hypotheses: dict = field(default_factory=dict)
    sigma: SurfaceGeometry | None = field(default=None, repr=False, compare=False)
    sigma_prime: SurfaceGeometry | None = field(default=None, repr=False, compare=False)

    @property
    def hypotheses_met(self) -> bool:
        return all(self.hypotheses.values())

    def to_dict(self):
        d = {k: getattr(self, k) for k in _REPORT_FIELDS}
        d["hypotheses"] = dict(self.hypotheses)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def mass_scale(surf: SurfaceGeometry) -> float:
    """``int V H dsigma``, the natural size of ``E`` for ``surf``."""
    return surf.integrate(surf.V * surf.H)


def quasilocal_mass(sigma: SurfaceGeometry, sigma_prime: SurfaceGeometry) -> MassReport:
    """``E = int_Sigma V (H - H') dsigma`` with ``H'`` read on the shared grid."""
    if sigma.grid != sigma_prime.grid:
        raise ValueError("sigma and sigma_prime must share one parameter grid")
    E = sigma.integrate(sigma.V * (sigma.H - sigma_prime.H))
    ric_max = float(np.max(sigma.ric_nn))
    hyp = {
        "sigma_convex": bool(sigma.is_convex),
        "sigma_prime_mean_convex": bool(sigma_prime.is_mean_convex),
        "ric_nu_nonpositive": bool(ric_max <= 0.0),
    }
    return MassReport(
        E=float(E),
        scale=float(mass_scale(sigma)),
        H_min=float(np.min(sigma.H)),
        H_prime_min=float(np.min(sigma_prime.H)),
        sigma_convex=hyp["sigma_convex"],
        sigma_prime_mean_convex=hyp["sigma_prime_mean_convex"],
        ric_nu_max=ric_max,
        penrose_margin=float(E),
        hypotheses=hyp,
        sigma=sigma,
        sigma_prime=sigma_prime,
    )


@dataclass(frozen=True)
class PenroseVerdict:
    status: str  # "holds" | "violated" | "hypotheses-not-met"
    E: float
    tolerance: float
    failed_hypotheses: tuple = ()

    def to_dict(self):
        return {
            "status": self.status,
            "E": self.E,
            "tolerance": self.tolerance,
            "failed_hypotheses": list(self.failed_hypotheses),
        }


def penrose_check(report: MassReport, rtol: float = PENROSE_RTOL) -> PenroseVerdict:
    """Sign verdict on ``E``, gated on convexity, mean convexity and Ric(nu,nu) <= 0."""
    tol = rtol * abs(report.scale)
    failed = tuple(k for k, v in report.hypotheses.items() if not v)
    if failed:
        return PenroseVerdict("hypotheses-not-met", report.E, tol, failed)
    status = "violated" if report.E < -tol else "holds"
    return PenroseVerdict(status, report.E, tol)


# -- variation formulas ---------------------------------------------------------------


def mean_curvature_variation(surf: SurfaceGeometry, G, P: TangentField | None = None) -> ScalarField:
    """``-Delta G - (Ric(nu,nu) + |h|^2) G + P . grad H``."""
    G = values_of(G, surf.grid)
    out = -surf.laplacian(G) - (surf.ric_nn + surf.h_norm2) * G
    if P is not None:
        out = out + np.einsum("...a,...a->...", P.vector, surf.gradient(surf.H))
    return ScalarField(surf.grid, out)


def first_variation_rhs(sigma, sigma_prime, F, h_prime=None) -> float:
    """``1/2 int F V |h - h'|^2 dsigma`` with indices raised by ``sigma``'s metric.

    ``h_prime`` (Cartesian tangent tensor on the shared grid) overrides the
    second fundamental form of ``sigma_prime``.
    """
    F = values_of(F, sigma.grid)
    hp = sigma_prime.h if h_prime is None else np.asarray(h_prime)
    d = sigma.h - hp
    return 0.5 * sigma.integrate(F * sigma.V * norm2(sigma.g_inv, d))


def gauss_subtraction_check(sigma, sigma_prime) -> ScalarField:
    """``1/2 (|h'|^2 - |h|^2) - (Ric(nu,nu) - Ric(nu',nu'))``.

    Each norm uses its own surface's metric.  By the two Gauss equations the
    result equals ``(K - K') + 1/2 (H'^2 - H^2)``, so it vanishes for
    isometric pairs with equal mean curvature.
    """
    res = 0.5 * (sigma_prime.h_norm2 - sigma.h_norm2) - (sigma.ric_nn - sigma_prime.ric_nn)
    return ScalarField(sigma.grid, res)
