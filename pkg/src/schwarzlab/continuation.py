"""Discrete isometric continuation of a surface pair.

``Sigma'`` is flowed in the normal direction, ``d/ds Sigma' = F nu'``, and
kept a radial graph.  ``Sigma`` follows so that it stays isometric to
``Sigma'`` under the identification by the shared parameter grid: each step
solves the linearized isometry system for ``(G, P)``, moves ``Sigma`` by
``ds (G nu + P^sharp)``, composes with the relabelling that the graph
re-representation of ``Sigma'`` performed, and removes the remaining metric
mismatch by Gauss-Newton.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DriftUncorrectable, MeanCurvatureDegenerate, StarShapeLost
from .linearization import (
    IsometryOperator,
    VariationDatum,
    isometry_operator,
    metric_variation,
    solve_linearized_isometry,
)
from .mass import mass_scale, mean_curvature_variation, quasilocal_mass
from .sphere import ScalarField, SymTensorField, values_of
from .surface import SurfaceGeometry, TangentField, build_surface

__all__ = [
    "ContinuationFamily",
    "StepRecord",
    "congruence_distance",
    "displace",
    "drift_correction",
    "fd_mass_derivative",
    "first_order_mass_check",
    "isometric_continuation",
    "killing_speed",
    "metric_drift",
    "metric_sup",
    "normal_flow_step",
]

DRIFT_RTOL = 1e-7
NEWTON_TOL = 1e-14


# -- elementary motions ---------------------------------------------------------------


def displace(surf: SurfaceGeometry, G, P: TangentField | None, s: float) -> SurfaceGeometry:
    """Embedding ``X + s (G nu + dX P^sharp)`` refit to the grid bandlimit."""
    G = values_of(G, surf.grid)
    W = G[..., None] * surf.nu
    if P is not None:
        W = W + P.chart_vector
    return SurfaceGeometry.from_embedding(surf.ambient, surf.grid, surf.X + s * W)


def _speed_values(F, surf):
    if callable(F) and not isinstance(F, ScalarField):
        F = F(surf)
    return values_of(F, surf.grid)


def killing_speed(axis) -> Callable[[SurfaceGeometry], ScalarField]:
    """Normal speed ``<axis x X, nu>`` of a rotation, evaluated on the current surface."""
    axis = np.asarray(axis, dtype=float)

    def speed(surf):
        Y = np.cross(np.broadcast_to(axis, surf.X.shape), surf.X)
        return ScalarField(surf.grid, np.einsum("...k,...k->...", surf.nu_flat, Y))

    return speed


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _angles(w):
    theta = np.arccos(np.clip(w[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(w[..., 1], w[..., 0]), 2 * np.pi)
    return theta, phi


def _preimage_directions(grid, coeffs, guess, max_iter=30):
    """Solve ``Y(w) / |Y(w)| = omega_node`` for ``w`` at every node by Newton.

    ``coeffs`` are the harmonic coefficients of the chart positions ``Y``.
    """
    target = grid.omega.reshape(-1, 3)
    w = guess.reshape(-1, 3).copy()
    for _ in range(max_iter):
        th, ph = _angles(w)
        Y, Yt, Yp = grid.interpolate(coeffs, th, ph, derivatives=True)
        r = np.linalg.norm(Y, axis=-1)
        d = Y / r[:, None]
        res = d - target
        err = np.max(np.linalg.norm(res, axis=-1))
        if err < NEWTON_TOL:
            return w, Y
        st = np.sin(th)
        et = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -st], axis=-1)
        ep = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=-1)
        proj = np.eye(3) - d[:, :, None] * d[:, None, :]
        J = np.einsum("pij,pjk->pik", proj, np.stack([Yt, Yp / st[:, None]], axis=-1)) / r[:, None, None]
        JtJ = np.einsum("pia,pib->pab", J, J)
        if np.min(np.linalg.det(JtJ)) <= 1e-12 * np.max(np.linalg.det(JtJ)):
            raise StarShapeLost("radial projection of the displaced surface is singular")
        delta = -np.linalg.solve(JtJ, np.einsum("pia,pi->pa", J, res)[..., None])[..., 0]
        w = _unit(w + delta[:, :1] * et + delta[:, 1:] * ep)
    raise StarShapeLost(f"radial re-parametrization did not converge (residual {err:.2e})")


def _initial_directions(surf, Y):
    if surf.rho is not None:
        return surf.grid.omega
    # nearest node by direction, for embeddings far from graph form
    dirs = _unit(Y.reshape(-1, 3))
    idx = np.argmax(surf.grid.omega.reshape(-1, 3) @ dirs.T, axis=1)
    return surf.grid.omega.reshape(-1, 3)[idx]


def _flow(surf: SurfaceGeometry, F, ds: float):
    """Normal flow step returning the new graph and the node preimages."""
    grid = surf.grid
    Fv = _speed_values(F, surf)
    Y = surf.X + ds * Fv[..., None] * surf.nu
    coeffs = grid.analyze_centered(Y)
    w, Yw = _preimage_directions(grid, coeffs, _initial_directions(surf, Y))
    # refit at degree L - 1 so that rho * omega is an exact degree-L embedding
    a = grid.analyze_centered(np.linalg.norm(Yw, axis=-1).reshape(grid.shape))
    a[grid.L] = 0.0
    rho = grid.synthesize(a)
    new = build_surface(surf.ambient, grid, ScalarField(grid, rho))
    star = np.einsum("...k,...k->...", new.nu_flat, grid.omega)
    if np.min(star) <= 0:
        raise StarShapeLost("flowed surface is not a radial graph")
    return new, w


def normal_flow_step(surf: SurfaceGeometry, F, ds: float) -> SurfaceGeometry:
    """Move every point by ``ds F nu`` and re-represent the result as a radial graph.

    ``F`` is a field on the grid or a callable ``F(surf)``.  The new radius at
    a node direction is found by a Newton solve for the displaced point lying
    on that ray, followed by a spectral refit.
    """
    if not np.any(_speed_values(F, surf)) and surf.rho is not None:
        return surf
    return _flow(surf, F, ds)[0]


# -- drift ------------------------------------------------------------------------------


def _sup(T):
    return float(np.max(np.abs(T)))


def metric_sup(surf: SurfaceGeometry) -> float:
    """Sup-norm of the coordinate components of the induced metric."""
    return _sup(surf.grid.to_frame(surf.g))


def metric_drift(surf: SurfaceGeometry, target) -> float:
    """Sup-norm (orthonormal-frame components) of ``g(surf) - target``."""
    if isinstance(target, SymTensorField):
        target = target.cartesian()
    return _sup(surf.grid.to_frame(surf.g - target))


def _gn_update(op: IsometryOperator, surf: SurfaceGeometry, mismatch):
    x, _ = op.lstsq(op.rhs(mismatch))
    G, P = op.fields(x, surf)
    return displace(surf, G, P, 1.0)


def drift_correction(
    surf: SurfaceGeometry,
    target_metric,
    drift_tol: float | None = None,
    *,
    operator: IsometryOperator | None = None,
    history: list | None = None,
    max_iter: int = 30,
) -> SurfaceGeometry:
    """Gauss-Newton on ``(G, P) -> g(X + G nu + P^sharp)`` towards ``target_metric``.

    Each iteration solves ``2 G h + L_P g = target - g`` in least squares and
    moves the surface.  A fresh factorization is used per iteration unless
    ``operator`` is supplied, in which case it is reused (chord iteration).
    Iteration continues past ``drift_tol`` while the drift still drops by a
    factor of ten, so accepted surfaces sit near the discretization floor.

    Drift values, starting with the initial one, are appended to ``history``.

    Raises
    ------
    DriftUncorrectable
        If the drift stays above ``drift_tol`` and decreased by less than 10%
        over the last 10 iterations, or after ``max_iter`` iterations.
    """
    target = target_metric.cartesian() if isinstance(target_metric, SymTensorField) else target_metric
    gnorm = _sup(surf.grid.to_frame(target))
    tol = DRIFT_RTOL * gnorm if drift_tol is None else drift_tol
    drifts = [metric_drift(surf, target)]
    if history is not None:
        history.append(drifts[0])
    if drifts[0] == 0.0:
        return surf
    best = surf
    for _ in range(max_iter):
        op = operator if operator is not None else isometry_operator(best)
        trial = _gn_update(op, best, target - best.g)
        d = metric_drift(trial, target)
        if history is not None:
            history.append(d)
        progress = d < 0.5 * drifts[-1]
        if d < drifts[-1]:
            best = trial
        drifts.append(min(d, drifts[-1]))
        if drifts[-1] <= tol and not progress:
            return best
        if len(drifts) > 10 and drifts[-1] > 0.9 * drifts[-11]:
            raise DriftUncorrectable(f"Gauss-Newton stalled at drift {drifts[-1]:.3e} (tol {tol:.3e})")
    if drifts[-1] <= tol:
        return best
    raise DriftUncorrectable(f"drift {drifts[-1]:.3e} above {tol:.3e} after {max_iter} iterations")


# -- continuation -------------------------------------------------------------------


@dataclass
class StepRecord:
    s: float
    sigma: SurfaceGeometry = field(repr=False)
    sigma_prime: SurfaceGeometry = field(repr=False)
    datum: VariationDatum | None = field(repr=False)
    drift: float
    E: float
    H_min: float
    H_prime_min: float
    sigma_convex: bool
    sigma_prime_mean_convex: bool
    residual: float

    def to_dict(self):
        return {
            "s": self.s,
            "E": self.E,
            "drift": self.drift,
            "H_min": self.H_min,
            "H_prime_min": self.H_prime_min,
            "sigma_convex": self.sigma_convex,
            "sigma_prime_mean_convex": self.sigma_prime_mean_convex,
            "solver_residual": self.residual,
        }


@dataclass
class ContinuationFamily:
    """Retained steps of a continuation, ordered by ``s`` (negative side first)."""

    ds: float
    N: int
    records: list
    drift_tol: float
    scale: float
    two_sided: bool = False

    @property
    def s(self):
        return np.array([r.s for r in self.records])

    @property
    def E(self):
        return np.array([r.E for r in self.records])

    @property
    def drifts(self):
        return np.array([r.drift for r in self.records])

    def at(self, s):
        for r in self.records:
            if abs(r.s - s) <= 1e-12 * max(1.0, abs(s)):
                return r
        raise KeyError(s)

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        for r in self.records:
            buf.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        return buf.getvalue()


def _record(s, sigma, sigma_prime, datum, target=None):
    rep = quasilocal_mass(sigma, sigma_prime)
    return StepRecord(
        s=float(s),
        sigma=sigma,
        sigma_prime=sigma_prime,
        datum=datum,
        drift=metric_drift(sigma, sigma_prime.g if target is None else target),
        E=rep.E,
        H_min=rep.H_min,
        H_prime_min=rep.H_prime_min,
        sigma_convex=rep.sigma_convex,
        sigma_prime_mean_convex=rep.sigma_prime_mean_convex,
        residual=0.0 if datum is None else float(datum.residual_norm),
    )


def _march(sigma, sigma_prime, F, ds, N, tol, h_floor, log, refactor_every):
    grid = sigma.grid
    records = []
    op = None
    zero = not callable(F) and not np.any(_speed_values(F, sigma_prime))
    for k in range(1, N + 1):
        if zero:
            records.append(_record(k * ds, sigma, sigma_prime, None))
            _emit(log, records[-1])
            continue
        if op is None or (k - 1) % refactor_every == 0:
            op = isometry_operator(sigma)
        datum = solve_linearized_isometry(sigma, sigma_prime, _speed_values(F, sigma_prime), operator=op)
        new_prime, w = _flow(sigma_prime, F, ds)
        moved = sigma.X + ds * (datum.G.values[..., None] * sigma.nu + datum.P.chart_vector)
        th, ph = _angles(w)
        X = grid.interpolate(grid.analyze_centered(moved), th, ph).reshape(grid.shape + (3,))
        trial = SurfaceGeometry.from_embedding(sigma.ambient, grid, X)
        corrected = drift_correction(trial, new_prime.g, tol, operator=op)
        sigma, sigma_prime = corrected, new_prime
        _check_mean_curvature(sigma_prime, h_floor)
        rec = _record(k * ds, sigma, sigma_prime, datum)
        if rec.drift > tol:
            raise DriftUncorrectable(f"drift {rec.drift:.3e} above {tol:.3e} at s = {rec.s:g}")
        records.append(rec)
        _emit(log, rec)
    return records


def _emit(log, rec):
    if log is not None:
        log.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def _check_mean_curvature(surf, h_floor):
    # dimensionless: H r equals 2 Vbar on coordinate spheres
    hr = np.min(surf.H * surf.radius)
    if hr < h_floor:
        raise MeanCurvatureDegenerate(
            f"min H r = {hr:.3e} below {h_floor:g}; surface too close to the horizon"
        )


def isometric_continuation(
    sigma0: SurfaceGeometry,
    sigma_prime0: SurfaceGeometry,
    F,
    s_max: float,
    N: int,
    *,
    drift_tol: float | None = None,
    two_sided: bool = False,
    h_floor: float = 0.2,
    refactor_every: int = 10,
    log=None,
) -> ContinuationFamily:
    """Continue an isometric pair along the normal flow of ``sigma_prime0``.

    Parameters
    ----------
    sigma0, sigma_prime0
        Initial pair on one grid; ``sigma0`` strictly convex, the pair isometric
        within ``drift_tol``.
    F
        Normal speed of ``Sigma'``: a field on the grid (held fixed as a
        function of the graph direction) or a callable ``F(surface)``.
    s_max, N
        Final parameter and number of explicit steps, ``ds = s_max / N``.
    drift_tol
        Absolute metric drift bound; default ``1e-7 * |g|_sup``.
    two_sided
        Also continue to ``-s_max`` (for central differences at ``s = 0``).
    h_floor
        Lower bound on ``min H r`` for the flowed surface; guards the division
        by ``H`` near the horizon.
    refactor_every
        Steps between fresh factorizations of the linearized operator; in
        between, the last factorization preconditions the solves and the
        Gauss-Newton corrections.
    log
        Text stream receiving one JSON record per retained step.
    """
    if sigma0.grid != sigma_prime0.grid:
        raise ValueError("sigma0 and sigma_prime0 must share one parameter grid")
    if N < 1 or s_max <= 0:
        raise ValueError("need N >= 1 and s_max > 0")
    tol = DRIFT_RTOL * metric_sup(sigma_prime0) if drift_tol is None else drift_tol
    _check_mean_curvature(sigma_prime0, h_floor)
    start = _record(0.0, sigma0, sigma_prime0, None)
    if start.drift > tol:
        raise DriftUncorrectable(f"initial pair is not isometric (drift {start.drift:.3e} > {tol:.3e})")
    ds = s_max / N
    back = _march(sigma0, sigma_prime0, F, -ds, N, tol, h_floor, None, refactor_every)[::-1] if two_sided else []
    for rec in back + [start]:
        _emit(log, rec)
    fwd = _march(sigma0, sigma_prime0, F, ds, N, tol, h_floor, log, refactor_every)
    return ContinuationFamily(
        ds=ds,
        N=N,
        records=back + [start] + fwd,
        drift_tol=tol,
        scale=mass_scale(sigma0),
        two_sided=two_sided,
    )


def fd_mass_derivative(family: ContinuationFamily):
    """``E'(0)`` by finite differences with one Richardson step.

    Central differences with steps ``ds`` and ``2 ds`` for two-sided families,
    second-order one-sided differences otherwise.  Returns ``(value, error)``
    with the error estimated from the difference between the extrapolated
    and the fine-step values.
    """
    if len(family.records) < 5:
        raise ValueError("finite differences need at least 5 records")
    h = family.ds
    E = {round(r.s / h): r.E for r in family.records}
    if family.two_sided:
        d1 = (E[1] - E[-1]) / (2 * h)
        d2 = (E[2] - E[-2]) / (4 * h)
    else:
        d1 = (-3 * E[0] + 4 * E[1] - E[2]) / (2 * h)
        d2 = (-3 * E[0] + 4 * E[2] - E[4]) / (4 * h)
    val = (4 * d1 - d2) / 3
    return float(val), float(abs(val - d1))


# -- first-order families and congruence ------------------------------------------------


def first_order_mass_check(sigma: SurfaceGeometry, F, P: TangentField, s: float = 1e-3):
    """Finite-difference ``E'(0)`` for a synthetic first-order family.

    With ``G = F - div P / H`` and ``h' = h + (L_P g - 2 (h / H) div P) / (2F)``
    the data satisfy the linearized isometry system exactly and ``H' = H``.
    ``Sigma(s)`` is the actual displaced surface; ``H'(s) = H + s delta H'``
    with ``delta H' = -Delta F - (Ric(nu',nu') + |h'|^2) F`` and
    ``Ric(nu',nu')`` fixed by subtracting the two Gauss equations.

    Returns a dict with the Richardson-extrapolated derivative ``fd``, its
    error estimate ``fd_error``, the synthetic ``h_prime`` and ``G``.
    """
    from .mass import first_variation_rhs
    from .linearization import trace_reduction

    grid = sigma.grid
    F = values_of(F, grid)
    if np.min(F) <= 0:
        raise ValueError("the synthetic family needs F > 0")
    divP = P.divergence()
    G = F - divP / sigma.H
    DP = P.nabla()
    lie = DP + np.swapaxes(DP, -1, -2)
    h_prime = sigma.h + (lie - 2 * (divP / sigma.H)[..., None, None] * sigma.h) / (2 * F[..., None, None])
    hp2 = np.einsum("...ac,...bd,...ab,...cd->...", sigma.g_inv, sigma.g_inv, h_prime, h_prime)
    ric_prime = sigma.ric_nn - 0.5 * (hp2 - sigma.h_norm2)
    dH_prime = -sigma.laplacian(F) - (ric_prime + hp2) * F

    def E(t):
        moved = displace(sigma, G, P, t)
        return moved.integrate(moved.V * (moved.H - (sigma.H + t * dH_prime)))

    def central(t):
        return (E(t) - E(-t)) / (2 * t)

    d1, d2 = central(s), central(2 * s)
    fd = (4 * d1 - d2) / 3
    return {
        "fd": float(fd),
        "fd_error": float(abs(fd - d1)),
        "rhs": float(first_variation_rhs(sigma, sigma, F, h_prime=h_prime)),
        "G": ScalarField(grid, G),
        "h_prime": h_prime,
        "trace_check": float(np.max(np.abs(trace_reduction(sigma, G, P).values - F))),
    }


def congruence_distance(a: SurfaceGeometry, b: SurfaceGeometry) -> float:
    """Max chart distance between ``b`` and the best rotation of ``a``.

    The rotation (reflections excluded) is fitted by weighted Kabsch on the
    shared parametrization.
    """
    w = a.grid.weights[..., None]
    A = a.X.reshape(-1, 3)
    B = b.X.reshape(-1, 3)
    H = (A * w.reshape(-1, 1)).T @ B
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return float(np.max(np.linalg.norm(A @ R.T - B, axis=-1)))
