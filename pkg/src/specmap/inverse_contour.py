"""Mixed contour/discrete main equation for data with multiple eigenvalues.

The low part of the spectrum (n <= N) enters only through the Weyl function
on the circle |rho| = N - 1/2.  The contour operator

    (1/2 pi i) oint theta Mhat(theta^2) D(x, rho, theta) f(theta) d theta

is discretized by the trapezoid rule (Nystrom), the tail N < n <= N_trunc is
treated exactly as in the simple pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .direct import (
    CauchyData, CertificationFailure, cauchy_characteristic, circle_nodes,
    find_zeros, laurent_coefficients, model_weyl, _group_radius,
)
from .inverse_simple import (
    InverseConfig, ReconstructionResult, _G, _g, _g_dx, _interleave, _rhs,
    dtilde_kernel, finish_reconstruction, solve_batch, shift_for,
)
from .spectral_core import (
    InvalidArgument, SpecmapError, SpectralData, grid, model_alpha, model_rho,
    rho_from_lambda,
)

POLE_GUARD = 1e-3


class PoleOnContour(SpecmapError, ArithmeticError):
    pass


class NotInSN(SpecmapError, ValueError):
    """Data violate the separation required for the contour index N."""


@dataclass(frozen=True)
class ContourGrid:
    N: int
    K: int = 64

    def __post_init__(self):
        if self.N < 1:
            raise InvalidArgument("contour index N must be >= 1")
        if self.K < 8:
            raise InvalidArgument("need at least 8 contour nodes")

    @property
    def radius(self) -> float:
        return self.N - 0.5

    @property
    def nodes(self) -> np.ndarray:
        return self.radius * np.exp(2j * np.pi * np.arange(self.K) / self.K)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights w_j with oint f d theta ~ sum w_j f(theta_j)."""
        return 2j * np.pi * self.nodes / self.K


# ---------------------------------------------------------------------------
# Weyl functions


def rational_weyl(S: SpectralData, lam, upto: Optional[int] = None):
    """sum over groups with start <= upto of sum_nu alpha_{n+nu} / (lam - lam_n)^(nu+1)."""
    lam = np.asarray(lam, dtype=complex)
    out = np.zeros_like(lam)
    for n, m in S.groups():
        if upto is not None and n > upto:
            break
        ln = S.rho[n - 1] ** 2
        for nu in range(m):
            out = out + S.alpha[n - 1 + nu] / (lam - ln) ** (nu + 1)
    return out


def model_rational_weyl(N: int, lam):
    lam = np.asarray(lam, dtype=complex)
    a = model_alpha(N)
    return sum(a[k] / (lam - k * k) for k in range(N))


def check_SN(S: SpectralData, N: int, guard: float = POLE_GUARD):
    """Eigenvalues with n <= N strictly inside Gamma_N, the rest simple and outside."""
    R = N - 0.5
    r = np.abs(S.rho)
    if N > S.n_max:
        raise NotInSN("contour index exceeds the data length")
    near = np.flatnonzero(np.abs(r - R) < POLE_GUARD)
    if near.size:
        raise PoleOnContour(f"eigenvalue n={near[0] + 1} lies within {POLE_GUARD} of |rho| = {R}")
    if np.any(r[:N] > R - guard):
        raise NotInSN(f"an eigenvalue with n <= {N} is not inside |rho| = {R}")
    if np.any(r[N:] < R + guard):
        raise NotInSN(f"an eigenvalue with n > {N} is not outside |rho| = {R}")
    for n, m in S.groups():
        if n <= N < n + m - 1:
            raise NotInSN("a multiple eigenvalue straddles Gamma_N")
        if n > N and m > 1:
            raise NotInSN("multiple eigenvalues must lie inside Gamma_N")


def weyl_hat_on_contour(source: Union[SpectralData, np.ndarray], grid_: ContourGrid):
    """Mhat(theta^2) = M - M~ at the contour nodes.

    For spectral data the finite Laurent sums with n <= N are used (the tails
    have no poles inside and do not contribute to the contour integrals).  For
    sampled M values the closed form cot-type model Weyl function is subtracted.
    """
    th = grid_.nodes
    if isinstance(source, SpectralData):
        check_SN(source, grid_.N)
        return rational_weyl(source, th ** 2, grid_.N) - model_rational_weyl(grid_.N, th ** 2)
    M = np.asarray(source, dtype=complex)
    if M.shape != th.shape:
        raise InvalidArgument("sample count does not match the contour grid")
    # model poles sit at rho = 0, 1, 2, ...; Gamma_N is half-way between them
    return M - model_weyl(th)


# ---------------------------------------------------------------------------
# block system


@dataclass
class BlockSystem:
    x: np.ndarray
    K: int
    n_tail: int
    matrix: np.ndarray      # (P, K + 2 n_tail, ...) including the identity
    rhs: np.ndarray
    dmatrix: Optional[np.ndarray] = None
    drhs: Optional[np.ndarray] = None

    @property
    def CC(self):
        return self.matrix[:, :self.K, :self.K]

    @property
    def CD(self):
        return self.matrix[:, :self.K, self.K:]

    @property
    def DC(self):
        return self.matrix[:, self.K:, :self.K]

    @property
    def DD(self):
        return self.matrix[:, self.K:, self.K:]


def _tail(S: SpectralData, N: int, n_trunc: int):
    if S.n_max < n_trunc:
        raise InvalidArgument(f"need {n_trunc} spectral entries, have {S.n_max}")
    rho0 = S.rho[N:n_trunc]
    rho1 = model_rho(n_trunc)[N:]
    a0 = S.alpha[N:n_trunc]
    a1 = model_alpha(n_trunc)[N:]
    return rho0, rho1, a0, a1, rho0 - rho1


def _assemble(x, th, wt, rho0, rho1, a0, a1, rh, deriv):
    """Operator R (without identity) for nodes x; wt = theta Mhat weights."""
    xx = x[:, None, None]
    K, T = th.size, rho0.size
    if deriv:
        D = lambda r, t: np.cos(r * xx) * np.cos(t * xx)
        G = lambda r, rt, t: _g(xx, r, rt) * np.cos(t * xx)
    else:
        D = lambda r, t: dtilde_kernel(xx, r, t)
        G = lambda r, rt, t: _G(xx, r, rt, t)
    thr, thc = th[None, :, None], th[None, None, :]
    out = np.zeros((x.size, K + 2 * T, K + 2 * T), dtype=complex)
    out[:, :K, :K] = wt * D(thr, thc)
    if T:
        r0c, r1c = rho0[None, None, :], rho1[None, None, :]
        r0r, r1r = rho0[None, :, None], rho1[None, :, None]
        Dc0, Dc1 = D(thr, r0c), D(thr, r1c)
        cd = np.empty((x.size, K, 2 * T), dtype=complex)
        cd[:, :, 0::2] = a0 * rh * Dc0
        cd[:, :, 1::2] = a0 * Dc0 - a1 * Dc1
        out[:, :K, K:] = cd
        dc = np.empty((x.size, 2 * T, K), dtype=complex)
        dc[:, 0::2, :] = wt * G(r0r, r1r, thc)
        dc[:, 1::2, :] = wt * D(r1r, thc)
        out[:, K:, :K] = dc
        G0, G1 = G(r0r, r1r, r0c), G(r0r, r1r, r1c)
        D0, D1 = D(r1r, r0c), D(r1r, r1c)
        out[:, K:, K:] = _interleave(a0 * rh * G0, a0 * G0 - a1 * G1, a0 * rh * D0, a0 * D0 - a1 * D1)
    return out


def _weights(grid_: ContourGrid, Mhat):
    th = grid_.nodes
    return th, th * th * np.asarray(Mhat) / grid_.K


def build_block_system(S: SpectralData, x, grid_: ContourGrid, n_trunc: int,
                       Mhat=None, with_derivative: bool = False) -> BlockSystem:
    """Assemble the Nystrom block system at one or several nodes x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    N = grid_.N
    if Mhat is None:
        Mhat = weyl_hat_on_contour(S, grid_)
    else:
        check_SN(S, N) if S.n_max >= N else None
    th, wt = _weights(grid_, Mhat)
    rho0, rho1, a0, a1, rh = _tail(S, N, n_trunc)
    mat = _assemble(x, th, wt, rho0, rho1, a0, a1, rh, False)
    idx = np.arange(mat.shape[1])
    mat[:, idx, idx] += 1
    rhs = np.concatenate([np.cos(th[None, :] * x[:, None]), _rhs(x, rho0, rho1, False)], axis=1)
    bs = BlockSystem(x, grid_.K, rho0.size, mat, rhs)
    if with_derivative:
        bs.dmatrix = _assemble(x, th, wt, rho0, rho1, a0, a1, rh, True)
        bs.drhs = np.concatenate([-th * np.sin(th[None, :] * x[:, None]),
                                  _rhs(x, rho0, rho1, True)], axis=1)
    return bs


def _eps_block(x, th, wt, rho0, rho1, a0, a1, rh, psi, dpsi, K):
    xx = x[:, None]
    pc = psi[:, :K]
    eps = np.sum(wt * pc * np.cos(th * xx), axis=1)
    deps = None
    if dpsi is not None:
        deps = np.sum(wt * (dpsi[:, :K] * np.cos(th * xx) - th * np.sin(th * xx) * pc), axis=1)
    if rho0.size:
        c0, c1 = np.cos(rho0 * xx), np.cos(rho1 * xx)
        p0, p1 = psi[:, K::2], psi[:, K + 1::2]
        w1 = a0 * c0 - a1 * c1
        eps = eps + np.sum(a0 * rh * c0 * p0 + w1 * p1, axis=1)
        if dpsi is not None:
            d0, d1 = dpsi[:, K::2], dpsi[:, K + 1::2]
            s0, s1 = np.sin(rho0 * xx), np.sin(rho1 * xx)
            deps = deps + np.sum(a0 * rh * (-rho0 * s0 * p0 + c0 * d0) + w1 * d1
                                 + p1 * (-a0 * rho0 * s0 + a1 * rho1 * s1), axis=1)
    return eps, deps


def _solve_blocks(S, grid_, Mhat, config: InverseConfig, shift, extra=None):
    N = grid_.N
    n_trunc = max(config.n_trunc, N)
    th, wt = _weights(grid_, Mhat)
    rho0, rho1, a0, a1, rh = _tail(S, N, n_trunc)
    x = grid(config.grid_nodes)
    eps = np.empty(x.size, dtype=complex)
    deps = np.empty(x.size, dtype=complex) if config.with_derivative else None
    inv_norm, resid = 0.0, 0.0
    for lo in range(0, x.size, config.chunk):
        xs = x[lo:lo + config.chunk]
        bs = build_block_system(S, xs, grid_, n_trunc, Mhat, config.with_derivative)
        sol = solve_batch(bs.matrix, bs.rhs, bs.dmatrix, bs.drhs, xs,
                          config.explicit_inverse_norm, config.threads)
        e, de = _eps_block(xs, th, wt, rho0, rho1, a0, a1, rh, sol.psi, sol.psi_prime, grid_.K)
        eps[lo:lo + xs.size] = e
        if deps is not None:
            deps[lo:lo + xs.size] = de
        inv_norm = max(inv_norm, float(sol.inv_norm.max()))
        resid = max(resid, float(sol.residual.max()))
    diag = {"residual_max": resid, "inv_norm": inv_norm, "n_trunc": n_trunc,
            "grid_nodes": config.grid_nodes, "shift": complex(shift),
            "contour_index": N, "contour_nodes": grid_.K}
    if extra:
        diag.update(extra)
    return finish_reconstruction(x, eps, deps, shift, diag, config.fd_tolerance)


def shift_normalize(S: SpectralData, omega) -> tuple[SpectralData, complex]:
    """lambda_n -> lambda_n - 2 omega / pi; weights unchanged.  Returns (data, c)."""
    c = 2 * complex(omega) / np.pi
    if c == 0:
        return S, 0j
    return S.replace(rho=rho_from_lambda(S.rho ** 2 - c), omega=0.0), c


def choose_contour_index(S: SpectralData, N_min: int = 1, guard: float = 0.05) -> int:
    """Smallest N >= N_min for which Gamma_N separates the data with margin."""
    last_multi = max([n + m - 1 for n, m in S.groups() if m > 1], default=0)
    for N in range(max(N_min, last_multi, 1), S.n_max):
        try:
            check_SN(S, N, guard)
            return N
        except NotInSN:
            continue
    raise NotInSN("no admissible contour index for these data")


def inverse_solve_multiple(S: SpectralData, config: Optional[InverseConfig] = None) -> ReconstructionResult:
    """Recover (q, h, H) from data that may contain multiple eigenvalues."""
    config = config or InverseConfig()
    Ss, c = shift_normalize(S, shift_for(S, config) * np.pi / 2)
    N = config.contour_index or choose_contour_index(Ss)
    grid_ = ContourGrid(N, config.contour_nodes)
    Mhat = weyl_hat_on_contour(Ss, grid_)
    return _solve_blocks(Ss, grid_, Mhat, config, c)


def inverse_from_cauchy(C: CauchyData, config: Optional[InverseConfig] = None) -> ReconstructionResult:
    """Cauchy data -> Delta, Delta_0 -> zeros and Laurent weights -> block system."""
    config = config or InverseConfig()
    delta, delta0 = cauchy_characteristic(C)
    n_trunc = config.n_trunc
    eig = find_zeros(delta, C.omega, n_trunc + 1)
    c = 2 * C.omega / np.pi if config.normalize_shift else 0j

    def weyl_lam(lam):
        r = rho_from_lambda(lam)
        return -delta0(r) / delta(r)

    # tail weights from Laurent coefficients of M around each simple eigenvalue
    lam_groups = eig.rho[eig.index_set - 1] ** 2
    alpha = np.zeros(eig.rho.size, dtype=complex)
    for g, (n, m) in enumerate(zip(eig.index_set, eig.multiplicities)):
        r = _group_radius(lam_groups, g)
        z = circle_nodes(lam_groups[g], r, 64)
        alpha[n - 1:n - 1 + m] = laurent_coefficients(weyl_lam(z), lam_groups[g], r, m)
    S = SpectralData(eig.rho, alpha, eig.index_set, eig.multiplicities, omega=C.omega)
    Ss = S.replace(rho=rho_from_lambda(S.rho ** 2 - c), omega=0.0) if c != 0 else S
    N = config.contour_index or choose_contour_index(Ss, max(1, eig.N if c == 0 else 1))
    grid_ = ContourGrid(N, config.contour_nodes)
    check_SN(Ss, N)
    th = grid_.nodes
    Mvals = weyl_lam(th ** 2 + c)
    Mhat = weyl_hat_on_contour(Mvals, grid_)
    cfg = InverseConfig(**{**config.__dict__, "n_trunc": n_trunc})
    return _solve_blocks(Ss, grid_, Mhat, cfg, c,
                         {"eigen_N": eig.N, "winding": eig.winding})
