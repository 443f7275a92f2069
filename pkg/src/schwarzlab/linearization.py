"""Linearized isometric embedding of surfaces in the Schwarzschild exterior.

Moving a surface by ``G nu + P^sharp`` changes its induced metric at first
order by

    delta g_ab = 2 G h_ab + nabla_a P_b + nabla_b P_a.

Given a second surface ``Sigma'`` on the same parameter grid and a normal
speed ``F`` for it, :func:`solve_linearized_isometry` finds ``(G, P)`` with
``delta g = 2 F h'`` in the least-squares sense.  The unknowns are the real
spherical-harmonic coefficients of ``G`` and of the Helmholtz potentials
``(f, u)`` of ``P``; the residual is measured pointwise in the induced norm
and integrated with the induced area element.  The dense operator is reduced
by an SVD, whose small singular values expose the kernel generated by ambient
Killing fields.  Solutions are made L2-orthogonal to the Killing data, and
any further kernel directions are fixed by closeness to the motion ``(F, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvexityViolation, MeanCurvatureDegenerate, SolverFailure
from .sphere import ScalarField, SymTensorField, values_of
from .surface import SurfaceGeometry, TangentField

__all__ = [
    "IsometryOperator",
    "VariationDatum",
    "isometry_operator",
    "killing_data",
    "metric_variation",
    "solve_linearized_isometry",
    "trace_reduction",
    "traceless_residual",
    "translation_data",
]

KERNEL_RTOL = 1e-8
MAX_KERNEL_DIM = 6
H_FLOOR = 1e-8


@dataclass
class VariationDatum:
    """First-order data of an isometric pair of deformations.

    Attributes
    ----------
    F : ScalarField
        Normal speed of the reference surface.
    G : ScalarField
        Normal speed of the deformed surface.
    P : TangentField
        Tangential part of the deformation.
    residual_norm : float
        Relative L2 residual of ``2 F h' = 2 G h + L_P g``, recomputed from
        the returned fields.
    gauge_report : dict
        ``kernel_dim``, the singular values treated as zero, and the kernel
        coordinates removed from the raw least-squares solution.
    """

    F: ScalarField
    G: ScalarField
    P: TangentField
    residual_norm: float
    gauge_report: dict = field(default_factory=dict)

    @property
    def kernel_dim(self) -> int:
        return int(self.gauge_report.get("kernel_dim", 0))


# -- field-level operators --------------------------------------------------------


def _lie_term(P: TangentField):
    DP = P.nabla()
    return DP + np.swapaxes(DP, -1, -2)


def metric_variation(surf: SurfaceGeometry, G, P: TangentField) -> SymTensorField:
    """``2 G h_ab + nabla_a P_b + nabla_b P_a`` on ``surf``."""
    G = values_of(G, surf.grid)
    T = 2.0 * G[..., None, None] * surf.h + _lie_term(P)
    return SymTensorField.from_cartesian(surf.grid, T)


def _check_h(surf):
    if np.min(np.abs(surf.H)) < H_FLOOR:
        raise MeanCurvatureDegenerate(
            f"min |H| = {np.min(np.abs(surf.H)):.3e} is below {H_FLOOR:g}"
        )


def trace_reduction(surf: SurfaceGeometry, G, P: TangentField) -> ScalarField:
    """``G + div P / H``."""
    _check_h(surf)
    G = values_of(G, surf.grid)
    return ScalarField(surf.grid, G + P.divergence() / surf.H)


def traceless_residual(sigma, sigma_prime, F, G, P: TangentField) -> SymTensorField:
    """``2 F (h' - h) - (L_P g - 2 (h / H) div P)``.

    ``G`` is accepted for signature symmetry with the full system; it has been
    eliminated through the trace.
    """
    del G
    _check_h(sigma)
    F = values_of(F, sigma.grid)
    lhs = 2.0 * F[..., None, None] * (sigma_prime.h - sigma.h)
    rhs = _lie_term(P) - 2.0 * (P.divergence() / sigma.H)[..., None, None] * sigma.h
    return SymTensorField.from_cartesian(sigma.grid, lhs - rhs)


def tensor_l2(surf: SurfaceGeometry, T) -> float:
    """``(int |T|_g^2 dsigma)^(1/2)`` for a Cartesian 2-tensor field."""
    if isinstance(T, SymTensorField):
        T = T.cartesian()
    return float(np.sqrt(max(surf.integrate(np.einsum(
        "...ac,...bd,...ab,...cd->...", surf.g_inv, surf.g_inv, T, T)), 0.0)))


# -- Killing data -----------------------------------------------------------------------


def _data_from_ambient_field(surf, Y):
    nu_flat = surf.nu_flat
    ghat = surf.ambient.metric_cart(surf.X)
    G = ScalarField(surf.grid, np.einsum("...k,...k->...", nu_flat, Y))
    p = np.einsum("...ka,...kl,...l->...a", surf.dX, ghat, Y)
    return G, TangentField.from_covector(surf, p)


def killing_data(surf: SurfaceGeometry, axis) -> tuple[ScalarField, TangentField]:
    """``(G, P)`` induced by the rotation field ``Y = axis x X``.

    ``G = <Y, nu>`` and ``P`` is the tangential part of ``Y`` as a covector.
    """
    Y = np.cross(np.broadcast_to(np.asarray(axis, dtype=float), surf.X.shape), surf.X)
    return _data_from_ambient_field(surf, Y)


def translation_data(surf: SurfaceGeometry, direction):
    """``(G, P)`` of a constant translation; a Killing field only when m = 0."""
    Y = np.broadcast_to(np.asarray(direction, dtype=float), surf.X.shape)
    return _data_from_ambient_field(surf, Y)


# -- dense operator ---------------------------------------------------------------------


class IsometryOperator:
    """Dense least-squares form of ``(G, f, u) -> 2 G h + L_P g`` on one surface.

    Rows are the whitened frame components ``(T11, sqrt2 T12, T22)`` of
    ``g^-1/2 T g^-1/2`` times ``sqrt(w mu)``, so the Euclidean row norm is
    the induced L2 norm.  Columns are real harmonic coefficients of ``G``
    (all degrees) and of ``f``, ``u`` (degrees >= 1).
    """

    def __init__(self, surf: SurfaceGeometry):
        self.surface = surf
        grid = surf.grid
        Y, B1, B2 = grid.basis_matrices
        N, n = Y.shape
        E = grid.frame.reshape(N, 3, 2)

        def frame2(T):
            return np.einsum("nia,nij,njb->nab", E, T.reshape(N, 3, 3), E)

        h2 = frame2(surf.h)
        g2 = frame2(surf.g)
        M2 = frame2(surf.rotation_generator)
        C2 = np.einsum("nic,nijk,nja,nkb->ncab", E, surf.C.reshape(N, 3, 3, 3), E, E)
        DM2 = np.einsum(
            "nia,nijk,njb,nkc->nabc", E, surf.rotation_generator_derivative.reshape(N, 3, 3, 3), E, E
        )
        evals, evecs = np.linalg.eigh(g2)
        S = np.einsum("nij,nj,nkj->nik", evecs, evals**-0.5, evecs)
        sw = np.sqrt(grid.weights.ravel() * surf.mu.ravel())
        self._S, self._sw = S, sw

        B1 = np.moveaxis(B1, 0, 1)[..., 1:]  # (N, 2, n-1)
        B2 = np.moveaxis(B2, (0, 1), (1, 2))[..., 1:]  # (N, 2, 2, n-1)
        # batched matmuls; einsum without BLAS is the bottleneck here
        C2t = C2.reshape(N, 2, 4).transpose(0, 2, 1)  # [n, (a b), d]
        hess_f = B2 - (C2t @ B1).reshape(B2.shape)
        P_u = M2 @ B1
        D_u = (
            (DM2.reshape(N, 4, 2) @ B1).reshape(B2.shape)
            + np.einsum("nbc,nack->nabk", M2, B2, optimize=True)
            - (C2t @ P_u).reshape(B2.shape)
        )
        cols_G = 2.0 * h2[..., None] * Y[:, None, None, :]
        cols_f = 2.0 * hess_f
        cols_u = D_u + np.swapaxes(D_u, 1, 2)
        T = np.concatenate([cols_G, cols_f, cols_u], axis=-1)  # (N, 2, 2, ncols)
        self.A = self._rows(T)
        self.n_scalar = n
        self.n_potential = n - 1

        # L2 evaluation matrix for the gauge inner product
        P_f = B1
        ev_G = np.concatenate([Y, np.zeros((N, 2 * (n - 1)))], axis=1)[:, None, :]
        ev_P = np.concatenate([np.zeros((N, 2, n)), P_f, P_u], axis=-1)
        ev_P = S @ ev_P
        ev = (np.concatenate([ev_G, ev_P], axis=1) * sw[:, None, None]).reshape(3 * N, -1)
        self.gram = ev.T @ ev

        U, s, Vt = np.linalg.svd(self.A, full_matrices=False)
        self.singular_values = s
        cut = KERNEL_RTOL * s[0]
        keep = s > cut
        self.kernel_dim = int(np.sum(~keep))
        self._U, self._s, self._Vt = U[:, keep], s[keep], Vt[keep]
        self.kernel = Vt[~keep].T
        self._killing = None
        self._split = None
        if self.kernel_dim > MAX_KERNEL_DIM:
            raise SolverFailure(
                f"linearized isometry operator has a {self.kernel_dim}-dimensional kernel "
                f"(at most {MAX_KERNEL_DIM} expected)"
            )

    def _rows(self, T):
        """Whitened, weighted rows from frame tensors (N, 2, 2, *k)."""
        S, sw = self._S, self._sw
        W = np.einsum("nab,nbc...,ncd->nad...", S, T, S)
        rows = np.stack([W[:, 0, 0], np.sqrt(2.0) * W[:, 0, 1], W[:, 1, 1]], axis=1)
        rows = rows * sw.reshape((-1, 1) + (1,) * (rows.ndim - 2))
        return rows.reshape((-1,) + rows.shape[2:])

    def rhs(self, T_cart):
        """Row vector of a Cartesian tangent 2-tensor field."""
        grid = self.surface.grid
        N = grid.size
        E = grid.frame.reshape(N, 3, 2)
        T2 = np.einsum("nia,nij,njb->nab", E, np.asarray(T_cart).reshape(N, 3, 3), E)
        return self._rows(T2)

    @property
    def killing_coefficients(self):
        """Coefficient columns of the ambient Killing data on the factorized surface."""
        if self._killing is None:
            surf = self.surface
            cols = [self.coefficients(*killing_data(surf, e)) for e in np.eye(3)]
            if surf.ambient.m == 0:
                cols += [self.coefficients(*translation_data(surf, e)) for e in np.eye(3)]
            self._killing = np.stack(cols, axis=1)
        return self._killing

    def _kernel_split(self):
        """L2-orthonormal kernel basis split into Killing and remaining parts."""
        if self._split is None:
            K = self.kernel
            Lc = np.linalg.cholesky(K.T @ self.gram @ K)
            Q = np.linalg.solve(Lc, K.T).T
            Z = self.killing_coefficients
            C = Q.T @ self.gram @ Z
            U, _, _ = np.linalg.svd(C, full_matrices=True)
            nk = min(Z.shape[1], self.kernel_dim)
            Qk, Qf = Q @ U[:, :nk], Q @ U[:, nk:]
            inside = Q @ C
            zn = np.sqrt(np.einsum("ij,ik,kj->j", Z, self.gram, Z))
            out = Z - inside
            on = np.sqrt(np.maximum(np.einsum("ij,ik,kj->j", out, self.gram, out), 0.0))
            self._split = (Qk, Qf, float(np.max(on / zn)))
        return self._split

    def lstsq(self, b, x_ref=None):
        """Least-squares coefficients in the Killing gauge.

        The minimum-norm solution is shifted within the numerical kernel:
        its Killing part is removed (L2-orthogonality to Killing data) and its
        remaining kernel coordinates are matched to those of ``x_ref``
        (zero by default).  Returns ``(x, removed)`` with ``removed`` the
        Killing coordinates projected out.
        """
        x = self._Vt.T @ ((self._U.T @ b) / self._s)
        if self.kernel_dim == 0:
            return x, np.zeros(0)
        Qk, Qf, _ = self._kernel_split()
        W = self.gram
        removed = Qk.T @ (W @ x)
        x = x - Qk @ removed
        if Qf.shape[1]:
            ref = np.zeros_like(x) if x_ref is None else x_ref
            x = x + Qf @ (Qf.T @ (W @ (ref - x)))
        return x, removed

    def fields(self, x, surf: SurfaceGeometry | None = None):
        """Split a coefficient vector into ``(G, P)`` with ``P`` living on ``surf``."""
        surf = self.surface if surf is None else surf
        grid = surf.grid
        n, p = self.n_scalar, self.n_potential
        G = ScalarField.from_real_coefficients(grid, x[:n])
        cf = np.concatenate([[0.0], x[n : n + p]])
        cu = np.concatenate([[0.0], x[n + p :]])
        f = grid.synthesize(grid.real_to_coeffs(cf))
        u = grid.synthesize(grid.real_to_coeffs(cu))
        return G, TangentField(surf, f, u)

    def coefficients(self, G, P: TangentField):
        """Inverse of :meth:`fields` for bandlimited data."""
        grid = self.surface.grid
        cg = grid.coeffs_to_real(grid.analyze(values_of(G, grid)))
        cf = grid.coeffs_to_real(grid.analyze(P.f.values))[1:]
        cu = grid.coeffs_to_real(grid.analyze(P.u.values))[1:]
        return np.concatenate([cg, cf, cu])

    def solve(self, T_cart, surf: SurfaceGeometry | None = None, refine: int = 3, x_ref=None):
        """``(G, P, report)`` minimizing ``|2 G h + L_P g - T|`` in L2.

        With ``surf`` different from the factorized surface the factorization
        acts as a preconditioner: the true operator of ``surf`` is applied
        field-wise and the correction is iterated ``refine`` times.
        """
        b = self.rhs(T_cart)
        x, removed = self.lstsq(b, x_ref)
        target = surf if surf is not None else self.surface
        if target is not self.surface:
            for _ in range(refine):
                G, P = self.fields(x, target)
                r = T_cart - metric_variation(target, G, P).cartesian()
                dx, dr = self.lstsq(self.rhs(r))
                x, removed = x + dx, removed + dr
        G, P = self.fields(x, target)
        report = {
            "kernel_dim": self.kernel_dim,
            "kernel_singular_values": [float(v) for v in self.singular_values[len(self._s):]],
            "removed": [float(v) for v in removed],
        }
        if self.kernel_dim:
            Qk, Qf, leak = self._kernel_split()
            report["killing_dim"] = int(Qk.shape[1])
            report["free_dim"] = int(Qf.shape[1])
            report["killing_leak"] = leak
        return G, P, report


def isometry_operator(surf: SurfaceGeometry) -> IsometryOperator:
    """Factorized operator for ``surf``, cached on the surface object."""
    op = getattr(surf, "_isometry_operator", None)
    if op is None:
        op = IsometryOperator(surf)
        surf._isometry_operator = op
    return op


def solve_linearized_isometry(
    sigma: SurfaceGeometry, sigma_prime: SurfaceGeometry, F, *, operator: IsometryOperator | None = None
) -> VariationDatum:
    """Solve ``2 F h' = 2 G h + nabla P + nabla P^T`` for ``(G, P)`` on ``sigma``.

    ``operator`` may carry the factorization of a nearby surface, which then
    preconditions an iterative refinement with the exact operator of ``sigma``.

    Raises
    ------
    ConvexityViolation
        If ``sigma`` is not strictly convex.
    SolverFailure
        If the discrete kernel is larger than an ambient-isometry kernel can be.
    """
    if sigma.grid != sigma_prime.grid:
        raise ValueError("sigma and sigma_prime must share one parameter grid")
    if not sigma.is_convex:
        raise ConvexityViolation("sigma must be strictly convex")
    F = ScalarField(sigma.grid, values_of(F, sigma.grid))
    target = 2.0 * F.values[..., None, None] * sigma_prime.h
    op = isometry_operator(sigma) if operator is None else operator
    # remaining kernel freedom is fixed by closeness to the pure normal motion (F, 0)
    n = op.n_scalar
    x_ref = np.zeros(n + 2 * op.n_potential)
    x_ref[:n] = sigma.grid.coeffs_to_real(sigma.grid.analyze(F.values))
    G, P, report = op.solve(target, sigma, x_ref=x_ref)
    res = metric_variation(sigma, G, P).cartesian() - target
    scale = tensor_l2(sigma, target)
    err = tensor_l2(sigma, res)
    residual = err / scale if scale > 0 else err
    return VariationDatum(F, G, P, residual, report)
