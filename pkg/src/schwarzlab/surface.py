"""Closed surfaces in the Schwarzschild exterior and their spectral calculus.

A surface is an embedding ``X: S^2 -> R^3`` in the Cartesian chart of
:class:`~schwarzlab.ambient.AmbientGeometry`.  Star-shaped graphs
``X = rho(omega) omega`` are built with exact derivatives of the bandlimited
radius function; general embeddings (produced by tangential motion during
continuation) are differentiated spectrally component by component.

Tensors on the surface are pulled back to the parameter sphere and stored in
Cartesian form: a covector ``p`` is a tangent 3-vector acting by the dot
product, a 2-tensor is a tangent 3x3 matrix.  The intrinsic connection of the
induced metric is the round connection plus the difference tensor

    C^c_ab = g^cd ghat(X_d, Hess X_ab + Gammahat(X_a, X_b)),

and the second fundamental form is ``h_ab = -ghat(nu, Hess X_ab + Gammahat(X_a, X_b))``
with ``nu`` the outward unit normal, so coordinate spheres are convex.
"""

from __future__ import annotations

import json
from functools import cached_property

import numpy as np
import scipy.linalg

from .ambient import AmbientGeometry, Rotation
from .errors import HorizonViolation, StarShapeLost
from .sphere import ScalarField, SphereGrid, SymTensorField, values_of

__all__ = [
    "SurfaceGeometry",
    "TangentField",
    "build_surface",
    "codazzi_residual",
    "export_surface",
    "gauss_curvature",
    "import_surface",
    "laplace_beltrami",
    "potential_gradient_residual",
    "potential_laplace_residual",
]


class SurfaceGeometry:
    """Embedded closed surface with cached first and second fundamental forms.

    Use :func:`build_surface` for radial graphs or
    :meth:`SurfaceGeometry.from_embedding` for general parametrizations.
    All cached arrays have the grid axes first.

    Attributes
    ----------
    X : (n_lat, n_lon, 3) embedding points in the Cartesian chart.
    dX : (..., 3, 3) ``dX[k, a]``, derivative of ``X^k`` along tangent direction ``a``.
    g, g_inv : induced metric and its tangent inverse, Cartesian form.
    h : second fundamental form.
    H, K : mean and (extrinsic, Gauss-equation) curvature.
    nu : outward unit normal, chart components.
    V, nu_V : restricted static potential and its normal derivative.
    mu : area element relative to the round measure, ``dsigma = mu dOmega``.
    ric_nn, ric_tn : ``Ric(nu, nu)`` and the covector ``Ric(X_a, nu)``.
    """

    def __init__(self, ambient: AmbientGeometry, grid: SphereGrid, X, dX, hessX, rho=None, radius=None):
        self.ambient = ambient
        self.grid = grid
        self.X = X
        self.dX = dX
        self.hessX = hessX
        self.rho = rho
        if radius is None:
            radius = np.linalg.norm(X, axis=-1) if rho is None else values_of(rho)
        if np.min(radius) <= ambient.horizon:
            raise HorizonViolation(
                f"surface reaches r = {np.min(radius):.6g} <= 2m = {ambient.horizon:.6g}"
            )
        self.radius = radius
        self._assemble()

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_graph(cls, ambient, grid, rho):
        rho = values_of(rho)
        if np.min(rho) <= ambient.horizon:
            raise HorizonViolation(f"min rho = {np.min(rho):.6g} must exceed 2m = {ambient.horizon:.6g}")
        # rho is taken as bandlimited: its values are kept, derivatives are spectral
        a = grid.analyze_centered(rho)
        q = grid.gradient(coeffs=a)
        Hr = grid.hessian(coeffs=a)
        w, P = grid.omega, grid.projector
        X = rho[..., None] * w
        dX = w[..., :, None] * q[..., None, :] + rho[..., None, None] * P
        hessX = (
            Hr[..., None, :, :] * w[..., :, None, None]
            + q[..., None, :, None] * P[..., :, None, :]
            + q[..., None, None, :] * P[..., :, :, None]
            - (rho[..., None, None] * P)[..., None, :, :] * w[..., :, None, None]
        )
        return cls(ambient, grid, X, dX, hessX, rho=ScalarField(grid, rho))

    @classmethod
    def from_embedding(cls, ambient, grid, X):
        """Surface from chart positions at the nodes, refit to bandlimit L."""
        a = grid.analyze_centered(np.asarray(X, dtype=float))
        X = grid.synthesize(a)
        dX = grid.gradient(coeffs=a)
        hessX = grid.hessian(coeffs=a)
        return cls(ambient, grid, X, dX, hessX)

    def rotated(self, rot: Rotation) -> "SurfaceGeometry":
        """Congruent copy ``R X`` sharing this parametrization (no longer a graph)."""
        R = rot.matrix
        return SurfaceGeometry(
            self.ambient,
            self.grid,
            self.X @ R.T,
            np.einsum("ij,...ja->...ia", R, self.dX),
            np.einsum("ij,...jab->...iab", R, self.hessX),
            radius=self.radius,
        )

    # -- geometry ------------------------------------------------------------

    def _assemble(self):
        amb, grid = self.ambient, self.grid
        X, dX = self.X, self.dX
        om = grid.omega
        OO = om[..., :, None] * om[..., None, :]

        ghat = amb.metric_cart(X)
        ghat_inv = amb.inverse_metric_cart(X)
        gam = amb.christoffel_cart(X)
        ric = amb.ricci_cart(X)

        g = np.einsum("...ka,...kl,...lb->...ab", dX, ghat, dX)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        full = g + OO
        self.g = g
        self.g_inv = np.linalg.inv(full) - OO
        self.mu = np.sqrt(np.linalg.det(full))
        if np.min(np.linalg.eigvalsh(grid.to_frame(g))) <= 0:
            raise StarShapeLost("induced metric is degenerate")

        t1 = np.einsum("...ka,...a->...k", dX, grid.e_theta)
        t2 = np.einsum("...ka,...a->...k", dX, grid.e_phi)
        ncov = np.cross(t1, t2)
        ncov *= np.sign(np.einsum("...k,...k->...", ncov, X))[..., None]
        norm = np.sqrt(np.einsum("...k,...kl,...l->...", ncov, ghat_inv, ncov))
        self.nu_flat = ncov / norm[..., None]
        self.nu = np.einsum("...kl,...l->...k", ghat_inv, self.nu_flat)

        accel = self.hessX + np.einsum("...kij,...ia,...jb->...kab", gam, dX, dX)
        h = -np.einsum("...k,...kab->...ab", self.nu_flat, accel)
        self.h = 0.5 * (h + np.swapaxes(h, -1, -2))
        c_low = np.einsum("...lc,...lk,...kab->...cab", dX, ghat, accel)
        self.C = np.einsum("...cd,...dab->...cab", self.g_inv, c_low)

        self.H = np.einsum("...ab,...ab->...", self.g_inv, self.h)
        self.h_norm2 = norm2(self.g_inv, self.h)

        r = self.radius
        n = X / r[..., None]
        self.V = amb.potential(r)
        # V minus a constant, evaluated without cancellation; derivatives of V
        # are taken from this so that rounding of V itself is not amplified
        r0 = grid.integrate(r) / (4 * np.pi)
        v0 = amb.potential(r0)
        self.V_dev = 2 * amb.m * (r - r0) / (r * r0 * (self.V + v0))
        self.nu_V = amb.potential_dr(r) * np.einsum("...k,...k->...", n, self.nu)
        self.ric_nn = np.einsum("...i,...ij,...j->...", self.nu, ric, self.nu)
        self.ric_tn = np.einsum("...ia,...ij,...j->...a", dX, ric, self.nu)
        self.K = -self.ric_nn + 0.5 * (self.H**2 - self.h_norm2)

    @property
    def m(self):
        return self.ambient.m

    @cached_property
    def sqrt_det_coord(self):
        """sqrt(det g) in the (theta, phi) coordinate frame."""
        return self.mu * self.grid.sin_theta[:, None]

    @cached_property
    def principal_curvatures(self):
        """Eigenvalues of the shape operator, ascending, shape (n_lat, n_lon, 2)."""
        g2 = self.grid.to_frame(self.g)
        h2 = self.grid.to_frame(self.h)
        L = np.linalg.cholesky(g2)
        Li = np.linalg.inv(L)
        S = Li @ h2 @ np.swapaxes(Li, -1, -2)
        return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))

    @property
    def is_convex(self) -> bool:
        """Strict convexity: h positive definite against g at every node."""
        return bool(np.min(self.principal_curvatures) > 0)

    @property
    def is_mean_convex(self) -> bool:
        return bool(np.min(self.H) > 0)

    @cached_property
    def area(self) -> float:
        return float(self.grid.integrate(self.mu))

    def metric_field(self) -> SymTensorField:
        return SymTensorField.from_cartesian(self.grid, self.g)

    def second_fundamental_form(self) -> SymTensorField:
        return SymTensorField.from_cartesian(self.grid, self.h)

    def field(self, name) -> ScalarField:
        """Wrap one of the cached scalar arrays (``"H"``, ``"K"``, ``"V"``, ...)."""
        return ScalarField(self.grid, getattr(self, name))

    # -- intrinsic calculus ---------------------------------------------------

    def integrate(self, f) -> float:
        """Integral over the surface with the induced area element."""
        return float(self.grid.integrate(self.mu * values_of(f, self.grid)))

    def gradient(self, f):
        """Differential df as a Cartesian covector."""
        return self.grid.gradient(values_of(f, self.grid))

    def raise_index(self, p):
        return np.einsum("...ab,...b->...a", self.g_inv, p)

    def hessian(self, f):
        f = values_of(f, self.grid)
        a = self.grid.analyze_centered(f)
        df = self.grid.gradient(coeffs=a)
        return self.grid.hessian(coeffs=a) - np.einsum("...cab,...c->...ab", self.C, df)

    def laplacian(self, f):
        return np.einsum("...ab,...ab->...", self.g_inv, self.hessian(f))

    def covariant_derivative(self, p):
        """``D[a, b] = nabla_a p_b`` for a Cartesian covector field."""
        return self.grid.covariant_gradient(p) - np.einsum("...cab,...c->...ab", self.C, p)

    def divergence(self, p):
        return np.einsum("...ab,...ab->...", self.g_inv, self.covariant_derivative(p))

    def tensor_derivative(self, T):
        """``D[c, a, b] = nabla_c T_ab`` for a Cartesian 2-tensor field."""
        D = self.grid.covariant_gradient(T)
        D = D - np.einsum("...dca,...db->...cab", self.C, T)
        return D - np.einsum("...dcb,...ad->...cab", self.C, T)

    def norm(self, p):
        """Pointwise g-norm of a covector field."""
        return np.sqrt(np.maximum(np.einsum("...a,...ab,...b->...", p, self.g_inv, p), 0.0))

    def tensor_norm(self, T):
        return np.sqrt(np.maximum(norm2(self.g_inv, T), 0.0))

    @cached_property
    def rotation_generator(self):
        """``M = eps g^-1`` with ``eps`` the induced area form; ``M du`` is the
        co-gradient used by the Helmholtz representation of tangent fields."""
        return self.mu[..., None, None] * np.einsum("...ab,...bc->...ac", self.grid.area_form, self.g_inv)

    @cached_property
    def rotation_generator_derivative(self):
        return self.grid.covariant_gradient(self.rotation_generator)

    @cached_property
    def intrinsic_gauss_curvature(self):
        """Gauss curvature from the induced metric alone (spectral derivatives of g)."""
        grid = self.grid
        dg = grid.covariant_gradient(self.g)  # [a, b, d] = nabla_a g_bd
        c_low = 0.5 * (
            np.einsum("...abd->...dab", dg) + np.einsum("...bad->...dab", dg) - dg
        )
        C = np.einsum("...cd,...dab->...cab", self.g_inv, c_low)
        dC = grid.covariant_gradient(C)  # [e, c, a, b] = nabla_e C^c_ab
        ric = (
            grid.projector
            + np.einsum("...aabc->...bc", dC)
            - np.einsum("...baac->...bc", dC)
            + np.einsum("...aae,...ebc->...bc", C, C)
            - np.einsum("...abe,...eac->...bc", C, C)
        )
        return 0.5 * np.einsum("...bc,...bc->...", self.g_inv, ric)

    # -- serialization -------------------------------------------------------------

    def to_record(self):
        if self.rho is None:
            raise ValueError("only radial graphs can be exported")
        return export_surface(self)


def norm2(g_inv, T):
    """|T|^2 = g^ac g^bd T_ab T_cd."""
    return np.einsum("...ac,...bd,...ab,...cd->...", g_inv, g_inv, T, T)


def build_surface(geom: AmbientGeometry, grid: SphereGrid, rho) -> SurfaceGeometry:
    """Radial graph ``X = rho(omega) omega`` with ``rho`` bandlimited to ``grid.L``."""
    if isinstance(rho, ScalarField) and rho.grid != grid:
        rho = rho.resample(grid)
    return SurfaceGeometry.from_graph(geom, grid, rho)


# -- pointwise identities as residuals ---------------------------------------------


def gauss_curvature(surf: SurfaceGeometry):
    """Gauss-equation curvature and its deviation from the intrinsic one.

    Returns ``(K, residual)`` where ``K = -Ric(nu,nu) + (H^2 - |h|^2)/2`` and
    ``residual = K - K_intrinsic``.
    """
    K = ScalarField(surf.grid, surf.K)
    return K, ScalarField(surf.grid, surf.K - surf.intrinsic_gauss_curvature)


def codazzi_residual(surf: SurfaceGeometry):
    """``nabla^a h_ab - nabla_b H - Ric(X_b, nu)`` in orthonormal-frame components."""
    Dh = surf.tensor_derivative(surf.h)
    div_h = np.einsum("...ca,...cab->...b", surf.g_inv, Dh)
    res = div_h - surf.gradient(surf.H) - surf.ric_tn
    return _covector_components(surf.grid, res)


def potential_laplace_residual(surf: SurfaceGeometry) -> ScalarField:
    """``Delta V + Ric(nu,nu) V + H nu(Vbar)``."""
    res = surf.laplacian(surf.V_dev) + surf.ric_nn * surf.V + surf.H * surf.nu_V
    return ScalarField(surf.grid, res)


def potential_gradient_residual(surf: SurfaceGeometry):
    """``nabla_a nu(Vbar) - Ric(X_a, nu) V - h_ab nabla^b V`` (frame components)."""
    dV = surf.raise_index(surf.gradient(surf.V_dev))
    res = (
        surf.gradient(surf.nu_V)
        - surf.ric_tn * surf.V[..., None]
        - np.einsum("...ab,...b->...a", surf.h, dV)
    )
    return _covector_components(surf.grid, res)


def _covector_components(grid, p):
    comps = np.einsum("...k,...ka->...a", p, grid.frame)
    return ScalarField(grid, comps[..., 0]), ScalarField(grid, comps[..., 1])


def laplace_beltrami(surf: SurfaceGeometry, f) -> ScalarField:
    return ScalarField(surf.grid, surf.laplacian(f))


# -- tangent fields -------------------------------------------------------------------


class TangentField:
    """Tangent covector field ``P_a = nabla_a f + eps_a^b nabla_b u`` on a surface.

    Built either from the Helmholtz potentials ``(f, u)`` or from a realized
    Cartesian covector, in which case the potentials are recovered by least
    squares on first request.  Potentials are gauged to zero mean.
    """

    def __init__(self, surface: SurfaceGeometry, f=None, u=None, covector=None):
        self.surface = surface
        grid = surface.grid
        if covector is None:
            f = np.zeros(grid.shape) if f is None else values_of(f, grid)
            u = np.zeros(grid.shape) if u is None else values_of(u, grid)
            self._f = _zero_mean(grid, f)
            self._u = _zero_mean(grid, u)
            self._covector = None
        else:
            self._f = self._u = None
            self._covector = np.asarray(covector, dtype=float)

    @classmethod
    def zero(cls, surface):
        return cls(surface)

    @classmethod
    def from_covector(cls, surface, p):
        return cls(surface, covector=p)

    @property
    def has_potentials(self):
        return self._f is not None

    @property
    def f(self) -> ScalarField:
        if self._f is None:
            self._solve_potentials()
        return ScalarField(self.surface.grid, self._f)

    @property
    def u(self) -> ScalarField:
        if self._u is None:
            self._solve_potentials()
        return ScalarField(self.surface.grid, self._u)

    @property
    def covector(self):
        if self._covector is None:
            s = self.surface
            self._covector = s.gradient(self._f) + np.einsum(
                "...ab,...b->...a", s.rotation_generator, s.gradient(self._u)
            )
        return self._covector

    @property
    def vector(self):
        """Contravariant components on the parameter sphere (Cartesian)."""
        return self.surface.raise_index(self.covector)

    @property
    def chart_vector(self):
        """Push-forward into the ambient chart, ``dX(P^sharp)``."""
        return np.einsum("...ka,...a->...k", self.surface.dX, self.vector)

    def coordinate_components(self):
        """Covector components ``(P_theta, P_phi)`` in the coordinate frame."""
        g = self.surface.grid
        p = self.covector
        return (
            ScalarField(g, np.einsum("...k,...k->...", p, g.e_theta)),
            ScalarField(g, np.einsum("...k,...k->...", p, g.e_phi) * g.sin_theta[:, None]),
        )

    def nabla(self):
        """``nabla_a P_b``; exact product rule when potentials are known."""
        s = self.surface
        if self._covector is not None and self._f is None:
            return s.covariant_derivative(self._covector)
        grid = s.grid
        af, au = grid.analyze_centered(self._f), grid.analyze_centered(self._u)
        du = grid.gradient(coeffs=au)
        out = grid.hessian(coeffs=af)
        out = out + np.einsum("...abc,...c->...ab", s.rotation_generator_derivative, du)
        out = out + np.einsum("...bc,...ac->...ab", s.rotation_generator, grid.hessian(coeffs=au))
        return out - np.einsum("...cab,...c->...ab", s.C, self.covector)

    def divergence(self):
        return np.einsum("...ab,...ab->...", self.surface.g_inv, self.nabla())

    def __add__(self, other):
        if self.has_potentials and other.has_potentials:
            return TangentField(self.surface, self._f + other._f, self._u + other._u)
        return TangentField.from_covector(self.surface, self.covector + other.covector)

    def __mul__(self, c):
        if self.has_potentials:
            return TangentField(self.surface, c * self._f, c * self._u)
        return TangentField.from_covector(self.surface, c * self.covector)

    __rmul__ = __mul__

    def _solve_potentials(self):
        s = self.surface
        grid = s.grid
        Q, R = _potential_factorization(s)
        _, B1, _ = grid.basis_matrices
        w = np.sqrt(grid.weights.ravel())
        p2 = np.einsum("...k,...ka->...a", self._covector, grid.frame).reshape(-1, 2)
        rhs = (p2 * w[:, None]).T.ravel()
        x = scipy.linalg.solve_triangular(R, Q.T @ rhs)
        n = grid.ncoeff - 1
        cf = np.concatenate([[0.0], x[:n]])
        cu = np.concatenate([[0.0], x[n:]])
        self._f = grid.synthesize(grid.real_to_coeffs(cf))
        self._u = grid.synthesize(grid.real_to_coeffs(cu))


def _zero_mean(grid, f):
    return f - grid.integrate(f) / (4 * np.pi)


def _potential_factorization(surf):
    cached = getattr(surf, "_potential_qr", None)
    if cached is not None:
        return cached
    grid = surf.grid
    _, B1, _ = grid.basis_matrices
    B1 = B1[:, :, 1:]
    M2 = grid.to_frame(surf.rotation_generator).reshape(-1, 2, 2)
    Bu = np.einsum("nab,bnc->anc", M2, B1)
    w = np.sqrt(grid.weights.ravel())[None, :, None]
    A = np.concatenate([B1 * w, Bu * w], axis=2).reshape(2 * grid.size, -1)
    Q, R = scipy.linalg.qr(A, mode="economic")
    surf._potential_qr = (Q, R)
    return Q, R


# -- import / export -------------------------------------------------------------------


def export_surface(surf: SurfaceGeometry) -> str:
    """JSON record ``{"m", "n_lat", "n_lon", "rho"}``; rho row-major, latitude first."""
    rec = {
        "m": float(surf.m),
        "n_lat": surf.grid.n_lat,
        "n_lon": surf.grid.n_lon,
        "rho": [float(v) for v in surf.rho.values.ravel()],
    }
    return json.dumps(rec)


def import_surface(text: str, grid: SphereGrid | None = None) -> SurfaceGeometry:
    """Inverse of :func:`export_surface`; resamples spectrally if ``grid`` differs."""
    rec = json.loads(text)
    for key in ("m", "n_lat", "n_lon", "rho"):
        if key not in rec:
            raise ValueError(f"surface record is missing field {key!r}")
    n_lat, n_lon = int(rec["n_lat"]), int(rec["n_lon"])
    if n_lon != 2 * n_lat:
        raise ValueError("surface record must have n_lon = 2 n_lat")
    src = SphereGrid(n_lat - 1)
    rho = np.asarray(rec["rho"], dtype=float)
    if rho.size != n_lat * n_lon:
        raise ValueError("rho has the wrong number of entries")
    field = ScalarField(src, rho.reshape(n_lat, n_lon))
    if grid is not None and grid != src:
        field = field.resample(grid)
    else:
        grid = src
    return build_surface(AmbientGeometry(float(rec["m"])), grid, field)
