"""Closed-form geometry of the spatial Schwarzschild manifold.

The metric in areal polar coordinates is

    g = dr^2 / (1 - 2m/r) + r^2 (dtheta^2 + sin^2 theta dphi^2),

with static potential ``Vbar = sqrt(1 - 2m/r)``.  Two charts are exposed:

* polar ``(r, theta, phi)`` through :class:`AmbientPoint`, used by the public
  curvature functions;
* the Cartesian chart ``x = r * omega`` (``omega`` a unit vector), where

      g_ij = delta_ij + a(r) n_i n_j,   a = 2m / (r - 2m),   n = x / r,

  which is smooth away from the horizon and is what the surface code uses.

Closed forms (derived once with sympy; the derivation is replayed in
``tests/test_ambient.py``)::

    polar Christoffels (nonzero, up to symmetry)
      G^r_rr   = -m / (r (r - 2m))
      G^r_thth = -(r - 2m)          G^r_phph = -(r - 2m) sin^2 th
      G^th_rth = G^ph_rph = 1/r
      G^th_phph = -sin th cos th    G^ph_thph = cot th
    polar Ricci
      R_rr = -2m / (r^3 Vbar^2),  R_thth = m / r,  R_phph = m sin^2 th / r
    Cartesian chart
      G^l_jk = n_l [ -m/(r(r-2m)) n_j n_k + 2m/r^2 (delta_jk - n_j n_k) ]
      R_ij   = m/r^3 (delta_ij - (3 + 2a) n_i n_j)
    |Ric|^2 = 6 m^2 / r^6
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbientDomainError

__all__ = [
    "AmbientGeometry",
    "AmbientPoint",
    "Rotation",
    "apply_rotation",
    "christoffel",
    "metric",
    "ricci",
    "ricci_norm",
    "static_potential",
    "static_potential_dr",
    "static_residual",
]

POLE_TOL = 1e-12


@dataclass(frozen=True)
class AmbientGeometry:
    """Spatial Schwarzschild manifold of mass ``m`` (``m = 0`` is flat space)."""

    m: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.m) or self.m < 0:
            raise ValueError(f"mass must be finite and non-negative, got {self.m}")

    @property
    def horizon(self) -> float:
        return 2.0 * self.m

    def check_radius(self, r, allow_horizon=False):
        r = np.asarray(r, dtype=float)
        bad = r < self.horizon if allow_horizon else r <= self.horizon
        if np.any(bad) or np.any(~np.isfinite(r)):
            raise AmbientDomainError(
                f"radius must exceed 2m = {self.horizon}; got min r = {np.min(r)}"
            )
        return r

    # -- radial profile -------------------------------------------------

    def potential(self, r):
        """Vbar(r) = sqrt(1 - 2m/r), evaluated as sqrt((r - 2m) / r) to avoid
        cancellation near the horizon."""
        return np.sqrt((r - 2.0 * self.m) / r)

    def potential_dr(self, r):
        """dVbar/dr = m / (r^2 Vbar)."""
        return self.m / (r**2 * self.potential(r))

    def potential_drr(self, r):
        v = self.potential(r)
        return -2.0 * self.m / (r**3 * v) - self.m**2 / (r**4 * v**3)

    # -- Cartesian chart x = r * omega ----------------------------------
    # All take x with shape (..., 3) and broadcast over leading axes.

    def metric_cart(self, x):
        r = np.linalg.norm(x, axis=-1)
        n = x / r[..., None]
        a = 2.0 * self.m / (r - 2.0 * self.m)
        return np.eye(3) + a[..., None, None] * n[..., :, None] * n[..., None, :]

    def inverse_metric_cart(self, x):
        r = np.linalg.norm(x, axis=-1)
        n = x / r[..., None]
        c = 2.0 * self.m / r
        return np.eye(3) - c[..., None, None] * n[..., :, None] * n[..., None, :]

    def christoffel_cart(self, x):
        """Gamma^l_jk in the Cartesian chart, shape (..., 3, 3, 3) indexed [l, j, k]."""
        r = np.linalg.norm(x, axis=-1)
        n = x / r[..., None]
        nn = n[..., :, None] * n[..., None, :]
        radial = (-self.m / (r * (r - 2.0 * self.m)))[..., None, None]
        tangential = (2.0 * self.m / r**2)[..., None, None]
        inner = radial * nn + tangential * (np.eye(3) - nn)
        return n[..., :, None, None] * inner[..., None, :, :]

    def ricci_cart(self, x):
        r = np.linalg.norm(x, axis=-1)
        n = x / r[..., None]
        a = 2.0 * self.m / (r - 2.0 * self.m)
        nn = n[..., :, None] * n[..., None, :]
        return (self.m / r**3)[..., None, None] * (np.eye(3) - (3.0 + 2.0 * a)[..., None, None] * nn)


@dataclass(frozen=True)
class AmbientPoint:
    """Point in areal polar coordinates; fields may be broadcastable arrays."""

    r: float
    theta: float
    phi: float

    def cartesian(self):
        st = np.sin(self.theta)
        return np.stack(
            np.broadcast_arrays(
                self.r * st * np.cos(self.phi),
                self.r * st * np.sin(self.phi),
                self.r * np.cos(self.theta),
            ),
            axis=-1,
        )

    @classmethod
    def from_cartesian(cls, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        theta = np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0))
        phi = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
        return cls(r, theta, phi)


@dataclass(frozen=True)
class Rotation:
    """Orthogonal 3x3 matrix acting on the sphere factor (reflections allowed)."""

    matrix: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=float)
        if q.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        err = np.max(np.abs(q @ q.T - np.eye(3)))
        if err > 1e-14:
            raise ValueError(f"matrix is not orthogonal (|Q Q^T - I| = {err:.2e})")
        object.__setattr__(self, "matrix", q)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def about_axis(cls, axis, angle):
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        q = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
        # re-orthonormalise to push the error below 1e-14
        u, _, vt = np.linalg.svd(q)
        return cls(u @ vt)

    @classmethod
    def random(cls, rng):
        q, r = np.linalg.qr(rng.standard_normal((3, 3)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return cls(q)

    @property
    def is_proper(self) -> bool:
        return bool(np.linalg.det(self.matrix) > 0)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        u, _, vt = np.linalg.svd(self.matrix @ other.matrix)
        return Rotation(u @ vt)

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T.copy())


def _check_point(geom, p):
    r = geom.check_radius(p.r)
    if np.any(np.abs(np.sin(p.theta)) < POLE_TOL):
        raise AmbientDomainError("polar coordinates are singular on the axis (sin theta = 0)")
    return r


def static_potential(geom: AmbientGeometry, r):
    """Vbar = sqrt(1 - 2m/r); zero on the horizon, raises inside it."""
    r = geom.check_radius(r, allow_horizon=True)
    return geom.potential(r)


def static_potential_dr(geom: AmbientGeometry, r):
    """Radial derivative m / (r^2 Vbar), defined for r > 2m."""
    r = geom.check_radius(r)
    return geom.potential_dr(r)


def metric(geom: AmbientGeometry, p: AmbientPoint):
    """Polar metric components, shape (..., 3, 3)."""
    r = _check_point(geom, p)
    st = np.sin(p.theta)
    r, st = np.broadcast_arrays(r, st)
    out = np.zeros(r.shape + (3, 3))
    out[..., 0, 0] = r / (r - 2.0 * geom.m)
    out[..., 1, 1] = r**2
    out[..., 2, 2] = (r * st) ** 2
    return out


def christoffel(geom: AmbientGeometry, p: AmbientPoint):
    """Gamma^i_jk in polar coordinates, shape (..., 3, 3, 3) indexed [i, j, k]."""
    r = _check_point(geom, p)
    m = geom.m
    st, ct = np.sin(p.theta), np.cos(p.theta)
    r, st, ct = np.broadcast_arrays(r, st, ct)
    G = np.zeros(r.shape + (3, 3, 3))
    G[..., 0, 0, 0] = -m / (r * (r - 2 * m))
    G[..., 0, 1, 1] = -(r - 2 * m)
    G[..., 0, 2, 2] = -(r - 2 * m) * st**2
    G[..., 1, 0, 1] = G[..., 1, 1, 0] = 1.0 / r
    G[..., 1, 2, 2] = -st * ct
    G[..., 2, 0, 2] = G[..., 2, 2, 0] = 1.0 / r
    G[..., 2, 1, 2] = G[..., 2, 2, 1] = ct / st
    return G


def ricci(geom: AmbientGeometry, p: AmbientPoint):
    """Ricci tensor in polar coordinates, shape (..., 3, 3)."""
    r = _check_point(geom, p)
    m = geom.m
    st = np.sin(p.theta)
    r, st = np.broadcast_arrays(r, st)
    R = np.zeros(r.shape + (3, 3))
    R[..., 0, 0] = -2 * m / (r**2 * (r - 2 * m))
    R[..., 1, 1] = m / r
    R[..., 2, 2] = m * st**2 / r
    return R


def static_residual(geom: AmbientGeometry, p: AmbientPoint):
    """D_i D_j Vbar - R_ij Vbar from closed forms; identically zero."""
    r = _check_point(geom, p)
    dV = np.zeros(np.shape(r) + (3,))
    dV[..., 0] = geom.potential_dr(r)
    hess = -np.einsum("...kij,...k->...ij", christoffel(geom, p), dV)
    hess[..., 0, 0] += geom.potential_drr(r)
    return hess - ricci(geom, p) * geom.potential(r)[..., None, None]


def ricci_norm(geom: AmbientGeometry, r):
    """|Ric|^2 = R_ij R^ij as a function of the areal radius."""
    r = geom.check_radius(r)
    p = AmbientPoint(r, np.pi / 2, 0.0)
    gi = np.linalg.inv(metric(geom, p))
    R = ricci(geom, p)
    return np.einsum("...ia,...jb,...ij,...ab->...", gi, gi, R, R)


def apply_rotation(geom: AmbientGeometry, rot: Rotation, p: AmbientPoint) -> AmbientPoint:
    """Act by ``rot`` on the angular part; the radius is untouched."""
    geom.check_radius(p.r)
    omega = AmbientPoint(1.0, p.theta, p.phi).cartesian()
    q = AmbientPoint.from_cartesian(omega @ rot.matrix.T)
    return AmbientPoint(np.asarray(p.r, dtype=float) * np.ones_like(q.theta), q.theta, q.phi)
