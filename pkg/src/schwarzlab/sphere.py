"""Gauss-Legendre x equispaced grid on S^2 with spherical-harmonic transforms.

Fields are sampled on ``n_lat = L + 1`` Gauss-Legendre colatitudes and
``n_lon = 2 n_lat`` longitudes; grid axes always come first in value arrays,
``(n_lat, n_lon, *extra)``.  Complex coefficients are stored as
``a[l, m, *extra]`` for ``0 <= m <= l <= L`` with the reality condition
implied for negative orders, so that

    f(theta, phi) = sum_l a_l0 Y_l0 + 2 Re sum_{m>0} a_lm Y_lm,

``Y_lm = Pbar_lm(cos theta) exp(i m phi)`` orthonormal on the unit sphere.

Tangent vectors and tensors on the sphere are carried as Cartesian 3-vectors
and 3x3 matrices (tangent to the sphere at each node); every Cartesian
component is then a smooth function on S^2 and can be differentiated
spectrally without pole artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import mpmath
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import sph_legendre_p

__all__ = [
    "ScalarField",
    "SphereGrid",
    "SymTensorField",
    "random_coefficients",
    "re_ylm",
    "real_sph_harm",
]


@lru_cache(maxsize=None)
def gauss_legendre_colatitudes(n: int):
    """Gauss-Legendre nodes as colatitudes (ascending) and weights.

    numpy's nodes are polished by Newton steps in the angle variable at
    extended precision; rounding ``arccos(x)`` near the poles otherwise
    leaks ~1e-14 into high-degree coefficients.
    """
    x0, _ = leggauss(n)
    thetas, weights = [], []
    with mpmath.workdps(40):
        for t0 in np.arccos(x0)[::-1]:
            t = mpmath.mpf(t0)
            for _ in range(4):
                x = mpmath.cos(t)
                p, pm = mpmath.legendre(n, x), mpmath.legendre(n - 1, x)
                dp = n * (x * p - pm) / (x * x - 1)
                t += p / (mpmath.sin(t) * dp)
            x = mpmath.cos(t)
            dp = n * (x * mpmath.legendre(n, x) - mpmath.legendre(n - 1, x)) / (x * x - 1)
            thetas.append(float(t))
            weights.append(float(2 / ((1 - x * x) * dp * dp)))
    return np.array(thetas), np.array(weights)


class SphereGrid:
    """Tensor-product quadrature grid of bandlimit ``L``.

    Parameters
    ----------
    L : int
        Maximum spherical-harmonic degree.  The grid has ``L + 1`` colatitude
        nodes and ``2 (L + 1)`` longitudes.
    """

    def __init__(self, L: int):
        if L < 1:
            raise ValueError("bandlimit must be at least 1")
        self.L = int(L)
        self.n_lat = self.L + 1
        self.n_lon = 2 * self.n_lat
        # north to south
        self.theta, self.gl_weights = gauss_legendre_colatitudes(self.n_lat)
        self.cos_theta = np.cos(self.theta)
        self.sin_theta = np.sin(self.theta)
        self.phi = 2 * np.pi * np.arange(self.n_lon) / self.n_lon
        self.weights = np.outer(self.gl_weights, np.full(self.n_lon, 2 * np.pi / self.n_lon))

        ls = np.arange(self.L + 1)
        T = self.theta
        # legendre[l, m, i]; zero for m > l
        p, dp, d2p = sph_legendre_p(ls[:, None, None], ls[None, :, None], T[None, None, :], diff_n=2)
        mask = (ls[None, :] <= ls[:, None])[..., None]
        self._leg = np.where(mask, p, 0.0)
        self._dleg = np.where(mask, dp, 0.0)
        self._d2leg = np.where(mask, d2p, 0.0)
        self._m = ls

    def __repr__(self):
        return f"SphereGrid(L={self.L}, n_lat={self.n_lat}, n_lon={self.n_lon})"

    def __eq__(self, other):
        return isinstance(other, SphereGrid) and other.L == self.L

    def __hash__(self):
        return hash(("SphereGrid", self.L))

    @property
    def shape(self):
        return (self.n_lat, self.n_lon)

    @property
    def size(self):
        return self.n_lat * self.n_lon

    @property
    def ncoeff(self):
        return (self.L + 1) ** 2

    # -- node geometry -----------------------------------------------------

    @cached_property
    def _angles(self):
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @cached_property
    def omega(self):
        """Unit position vectors, shape (n_lat, n_lon, 3)."""
        th, ph = self._angles
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    @cached_property
    def e_theta(self):
        th, ph = self._angles
        return np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)

    @cached_property
    def e_phi(self):
        _, ph = self._angles
        return np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=-1)

    @cached_property
    def frame(self):
        """Orthonormal tangent frame (e_theta, e_phi) as columns, shape (..., 3, 2)."""
        return np.stack([self.e_theta, self.e_phi], axis=-1)

    @cached_property
    def projector(self):
        """Tangential projector I - omega omega^T, shape (..., 3, 3)."""
        w = self.omega
        return np.eye(3) - w[..., :, None] * w[..., None, :]

    @cached_property
    def area_form(self):
        """Round area form as a matrix J with eps(v, w) = v . J w = omega . (v x w)."""
        w = self.omega
        J = np.zeros(self.shape + (3, 3))
        J[..., 0, 1], J[..., 1, 0] = w[..., 2], -w[..., 2]
        J[..., 1, 2], J[..., 2, 1] = w[..., 0], -w[..., 0]
        J[..., 2, 0], J[..., 0, 2] = w[..., 1], -w[..., 1]
        return J

    # -- transforms ---------------------------------------------------------

    def analyze(self, values):
        """Grid values (n_lat, n_lon, *extra) -> coefficients (L+1, L+1, *extra)."""
        values = np.asarray(values, dtype=float)
        F = np.fft.rfft(values, axis=1)[:, : self.L + 1] * (2 * np.pi / self.n_lon)
        return np.einsum("lmi,i,im...->lm...", self._leg, self.gl_weights, F)

    def synthesize(self, coeffs, d_theta=0, d_phi=0):
        """Coefficients -> grid values of ``d^d_theta d^d_phi f``."""
        leg = (self._leg, self._dleg, self._d2leg)[d_theta]
        C = np.einsum("lm...,lmi->im...", coeffs, leg)
        if d_phi:
            fac = (1j * self._m) ** d_phi
            C = C * fac.reshape((1, -1) + (1,) * (C.ndim - 2))
        pad = np.zeros((self.n_lat, self.n_lon // 2 + 1) + C.shape[2:], dtype=complex)
        pad[:, : self.L + 1] = C
        return np.fft.irfft(pad, n=self.n_lon, axis=1) * self.n_lon

    def analyze_centered(self, values):
        """Analysis of ``values`` minus their mean, with the mean restored in
        the l = 0 coefficient; keeps roundoff in the derivative-carrying
        coefficients proportional to the variation rather than the magnitude."""
        values = np.asarray(values, dtype=float)
        mean = self.integrate(values) / (4 * np.pi)
        a = self.analyze(values - mean)
        a[0, 0] += mean * np.sqrt(4 * np.pi)
        return a

    def project(self, values):
        """Spectral refit: truncate to degree <= L."""
        return self.synthesize(self.analyze(values))

    def integrate(self, values):
        """Quadrature over the unit sphere along the two grid axes."""
        values = np.asarray(values)
        w = self.weights.reshape(self.shape + (1,) * (values.ndim - 2))
        return np.sum(values * w, axis=(0, 1))

    def interpolate(self, coeffs, theta, phi, derivatives=False):
        """Evaluate coefficients (L+1, L+1, *extra) at arbitrary points.

        Returns values of shape ``theta.shape + extra``; with ``derivatives``
        also the theta- and phi-derivatives, as a tuple of three arrays.
        """
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        coeffs = np.asarray(coeffs)
        extra = coeffs.shape[2:]
        a = coeffs.reshape(coeffs.shape[:2] + (-1,))
        ls = np.arange(self.L + 1)
        lower = (ls[None, :] <= ls[:, None])[..., None]
        P = sph_legendre_p(ls[:, None, None], ls[None, :, None], theta.ravel()[None, None, :], diff_n=1)
        P, dP = np.where(lower, P[0], 0.0), np.where(lower, P[1], 0.0)
        fac = np.where(ls == 0, 1.0, 2.0)
        E = np.exp(1j * ls[:, None] * phi.ravel()[None, :]) * fac[:, None]  # (m, p)
        # sum over l first: (m, p, k)
        Am = np.einsum("lmp,lmk->mpk", P, a)
        out = [np.real(np.einsum("mpk,mp->pk", Am, E))]
        if derivatives:
            dAm = np.einsum("lmp,lmk->mpk", dP, a)
            out.append(np.real(np.einsum("mpk,mp->pk", dAm, E)))
            out.append(np.real(np.einsum("mpk,mp->pk", Am, E * (1j * ls[:, None]))))
        out = [o.reshape(theta.shape + extra) for o in out]
        return tuple(out) if derivatives else out[0]

    # -- derivatives ------------------------------------------------------------
    # Orthonormal-frame components: grad = (f_th, f_ph / sin th); round Hessian
    #   H_thth = f_thth
    #   H_thph = (f_thph - cot th f_ph) / sin th
    #   H_phph = f_phph / sin^2 th + cot th f_th

    def _frame_derivatives(self, coeffs, order):
        shp = (self.n_lat, 1) + (1,) * (np.ndim(coeffs) - 2)
        s = self.sin_theta.reshape(shp)
        cot = (self.cos_theta / self.sin_theta).reshape(shp)
        f_t = self.synthesize(coeffs, 1, 0)
        f_p = self.synthesize(coeffs, 0, 1)
        grad = (f_t, f_p / s)
        if order == 1:
            return grad
        f_tt = self.synthesize(coeffs, 2, 0)
        f_tp = self.synthesize(coeffs, 1, 1)
        f_pp = self.synthesize(coeffs, 0, 2)
        hess = (f_tt, (f_tp - cot * f_p) / s, f_pp / s**2 + cot * f_t)
        return grad, hess

    def gradient(self, values=None, coeffs=None):
        """Round gradient as Cartesian vectors, shape (n_lat, n_lon, *extra, 3)."""
        if coeffs is None:
            coeffs = self.analyze_centered(values)
        gt, gp = self._frame_derivatives(coeffs, 1)
        return _frame_to_cart_vec(self, gt, gp)

    def hessian(self, values=None, coeffs=None):
        """Round covariant Hessian as Cartesian matrices, shape (..., *extra, 3, 3)."""
        if coeffs is None:
            coeffs = self.analyze_centered(values)
        _, (htt, htp, hpp) = self._frame_derivatives(coeffs, 2)
        return _frame_to_cart_sym(self, htt, htp, hpp)

    def laplacian(self, values=None, coeffs=None):
        if coeffs is None:
            coeffs = self.analyze(values)
        ls = np.arange(self.L + 1)
        lam = -(ls * (ls + 1.0)).reshape((-1, 1) + (1,) * (np.ndim(coeffs) - 2))
        return self.synthesize(coeffs * lam)

    def covariant_gradient(self, field):
        """Round covariant derivative of a tangent field given in Cartesian form.

        ``field`` has shape (n_lat, n_lon, *k, 3) with the last ``rank`` axes
        tangent indices (rank inferred from trailing 3-axes is ambiguous, so
        every trailing axis of length 3 after the grid axes is treated as a
        tensor index).  Returns ``D[..., a, i, j, ...] = nabla_a T_{ij...}``
        with all indices projected to the tangent plane.
        """
        field = np.asarray(field, dtype=float)
        rank = field.ndim - 2
        grad = self.gradient(field)  # (..., i, j.., a)
        grad = np.moveaxis(grad, -1, 2)  # (..., a, i, j..)
        P = self.projector
        letters = "ijklmn"[:rank]
        for pos, idx in enumerate(letters):
            sub_in = "xya" + "".join(letters)
            sub_out = sub_in.replace(idx, "z")
            grad = np.einsum(f"{sub_in},xy{idx}z->{sub_out}", grad, P)
        return grad

    def divergence(self, vec):
        """Round divergence of a tangent Cartesian vector field."""
        return np.einsum("...ii->...", self.gradient(vec))

    # -- frame conversions ---------------------------------------------------------

    def to_frame(self, T):
        """Cartesian tangent tensor (..., 3, 3) -> orthonormal-frame (..., 2, 2)."""
        E = self.frame
        return np.einsum("xyia,xyij,xyjb->xyab", E, T, E)

    def from_frame(self, T2):
        E = self.frame
        return np.einsum("xyia,xyab,xyjb->xyij", E, T2, E)

    # -- real basis for dense operators -------------------------------------------

    @cached_property
    def real_index(self):
        """List of (l, m, kind) for the real orthonormal basis; kind in {'c', 's'}."""
        idx = []
        for l in range(self.L + 1):
            idx.append((l, 0, "c"))
            for m in range(1, l + 1):
                idx.append((l, m, "c"))
                idx.append((l, m, "s"))
        return idx

    @cached_property
    def _real_maps(self):
        idx = self.real_index
        ls = np.array([i[0] for i in idx])
        ms = np.array([i[1] for i in idx])
        val = np.array(
            [1.0 if m == 0 else (1 / np.sqrt(2) if k == "c" else -1j / np.sqrt(2)) for _, m, k in idx]
        )
        return ls, ms, val

    def real_to_coeffs(self, c):
        """Real basis coefficients (ncoeff, *extra) -> complex coefficient array."""
        c = np.asarray(c)
        ls, ms, val = self._real_maps
        out = np.zeros((self.L + 1, self.L + 1) + c.shape[1:], dtype=complex)
        np.add.at(out, (ls, ms), val.reshape((-1,) + (1,) * (c.ndim - 1)) * c)
        return out

    def coeffs_to_real(self, a):
        """Inverse of :meth:`real_to_coeffs`."""
        ls, ms, _ = self._real_maps
        is_sin = np.array([k == "s" for _, _, k in self.real_index])
        sel = a[ls, ms]
        shp = (-1,) + (1,) * (sel.ndim - 1)
        ms_, is_sin = ms.reshape(shp), is_sin.reshape(shp)
        # m > 0: a = (c_c - i c_s) / sqrt2
        return np.where(
            ms_ == 0, sel.real, np.where(is_sin, -np.sqrt(2) * sel.imag, np.sqrt(2) * sel.real)
        )

    @cached_property
    def basis_matrices(self):
        """Frame-component synthesis matrices of the real basis.

        Returns ``(Y, grad, hess)`` with ``Y`` of shape (N, ncoeff), ``grad``
        (2, N, ncoeff) and ``hess`` (2, 2, N, ncoeff); N = n_lat * n_lon.
        """
        eye = np.eye(self.ncoeff)
        a = self.real_to_coeffs(eye)
        Y = self.synthesize(a).reshape(self.size, -1)
        (gt, gp), (htt, htp, hpp) = self._frame_derivatives(a, 2)
        flat = lambda v: v.reshape(self.size, -1)
        grad = np.stack([flat(gt), flat(gp)])
        hess = np.stack([np.stack([flat(htt), flat(htp)]), np.stack([flat(htp), flat(hpp)])])
        return Y, grad, hess

    def degrees(self):
        return np.array([i[0] for i in self.real_index])


def _frame_to_cart_vec(grid, vt, vp):
    et = grid.e_theta.reshape(grid.shape + (1,) * (np.ndim(vt) - 2) + (3,))
    ep = grid.e_phi.reshape(et.shape)
    return vt[..., None] * et + vp[..., None] * ep


def _frame_to_cart_sym(grid, tt, tp, pp):
    et = grid.e_theta.reshape(grid.shape + (1,) * (np.ndim(tt) - 2) + (3,))
    ep = grid.e_phi.reshape(et.shape)
    o = lambda a, b: a[..., :, None] * b[..., None, :]
    return (
        tt[..., None, None] * o(et, et)
        + tp[..., None, None] * (o(et, ep) + o(ep, et))
        + pp[..., None, None] * o(ep, ep)
    )


def real_sph_harm(grid: SphereGrid, l: int, m: int):
    """Real orthonormal harmonic on the grid: m >= 0 gives the cosine type
    ``sqrt2 Pbar_lm cos(m phi)`` (``Pbar_l0`` for m = 0), m < 0 the sine type."""
    c = np.zeros(grid.ncoeff)
    kind = "c" if m >= 0 else "s"
    c[grid.real_index.index((l, abs(m), kind))] = 1.0
    return grid.synthesize(grid.real_to_coeffs(c))


def random_coefficients(grid: SphereGrid, rng: np.random.Generator, lmax=6, decay=2.0):
    """Seeded bandlimited random field in the real basis.

    Coefficients are i.i.d. standard normal (drawn with ``rng`` in the order
    of ``grid.real_index``) scaled by ``(1 + l)^-decay`` and zeroed above
    ``lmax``.
    """
    draws = rng.standard_normal(grid.ncoeff)
    deg = grid.degrees()
    return np.where(deg <= lmax, draws * (1.0 + deg) ** (-decay), 0.0)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real field sampled on a :class:`SphereGrid`."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid, fn):
        """``fn(theta, phi)`` evaluated on the mesh."""
        th, ph = np.meshgrid(grid.theta, grid.phi, indexing="ij")
        return cls(grid, fn(th, ph))

    @classmethod
    def from_real_coefficients(cls, grid, c):
        return cls(grid, grid.synthesize(grid.real_to_coeffs(c)))

    @classmethod
    def harmonic(cls, grid, l, m):
        return cls(grid, real_sph_harm(grid, l, m))

    @classmethod
    def random(cls, grid, rng, lmax=6, decay=2.0):
        return cls.from_real_coefficients(grid, random_coefficients(grid, rng, lmax, decay))

    def coefficients(self):
        return self.grid.analyze(self.values)

    def real_coefficients(self):
        return self.grid.coeffs_to_real(self.coefficients())

    def resample(self, grid: SphereGrid) -> "ScalarField":
        """Spectral interpolation onto another grid (truncating at the smaller L)."""
        a = self.coefficients()
        L = min(grid.L, self.grid.L)
        b = np.zeros((grid.L + 1, grid.L + 1), dtype=complex)
        b[: L + 1, : L + 1] = a[: L + 1, : L + 1]
        return ScalarField(grid, grid.synthesize(b))

    def integrate(self):
        return float(self.grid.integrate(self.values))

    def _wrap(self, other):
        return other.values if isinstance(other, ScalarField) else other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._wrap(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._wrap(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._wrap(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def sup(self):
        return float(np.max(np.abs(self.values)))


def values_of(f, grid=None):
    """Accept a ScalarField, array or scalar and return grid values."""
    if isinstance(f, ScalarField):
        return f.values
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0 and grid is not None:
        return np.full(grid.shape, float(arr))
    return arr


def re_ylm(grid: SphereGrid, l: int, m: int):
    """Real part of the complex orthonormal harmonic, ``Pbar_lm cos(m phi)``."""
    return real_sph_harm(grid, l, m) / (np.sqrt(2.0) if m != 0 else 1.0)


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Symmetric 2-tensor on the grid in coordinate components (theta, phi).

    ``aa = T_thth``, ``ab = T_thph``, ``bb = T_phph``.
    """

    grid: SphereGrid
    aa: np.ndarray
    ab: np.ndarray
    bb: np.ndarray

    def __post_init__(self):
        for name in ("aa", "ab", "bb"):
            v = np.asarray(values_of(getattr(self, name)), dtype=float)
            if v.shape != self.grid.shape:
                raise ValueError(f"component {name} has shape {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"component {name} is not finite")
            object.__setattr__(self, name, v)

    @classmethod
    def from_cartesian(cls, grid, T):
        s = grid.sin_theta[:, None]
        T2 = grid.to_frame(T)
        return cls(grid, T2[..., 0, 0], s * T2[..., 0, 1], s**2 * T2[..., 1, 1])

    def frame(self):
        """Orthonormal-frame components, shape (n_lat, n_lon, 2, 2)."""
        s = self.grid.sin_theta[:, None]
        out = np.empty(self.grid.shape + (2, 2))
        out[..., 0, 0] = self.aa
        out[..., 0, 1] = out[..., 1, 0] = self.ab / s
        out[..., 1, 1] = self.bb / s**2
        return out

    def cartesian(self):
        return self.grid.from_frame(self.frame())

    def __sub__(self, other):
        return SymTensorField(self.grid, self.aa - other.aa, self.ab - other.ab, self.bb - other.bb)

    def __add__(self, other):
        return SymTensorField(self.grid, self.aa + other.aa, self.ab + other.ab, self.bb + other.bb)

    def __mul__(self, c):
        c = values_of(c)
        return SymTensorField(self.grid, self.aa * c, self.ab * c, self.bb * c)

    __rmul__ = __mul__

    def sup(self):
        """Largest orthonormal-frame component magnitude."""
        return float(np.max(np.abs(self.frame())))
