"""Reconstruction of (q, h, H) from simple spectral data via the main equation.

Unknowns are ordered [psi_10, psi_11, psi_20, psi_21, ...].  With
rho_n0 = rho_n, rho_n1 = n - 1, alpha_n0 = alpha_n, alpha_n1 = model alpha_n
and rho_hat_n = rho_n0 - rho_n1, the coordinates are

    psi_n0 = (phi_n0 - phi_n1) / rho_hat_n,   psi_n1 = phi_n1,

so that every matrix entry stays bounded when rho_n0 -> rho_n1.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .spectral_core import (
    GridFunction, InvalidArgument, SpecmapError, SpectralData, estimate_omega,
    grid, integrate, model_alpha, model_rho, rho_from_lambda,
)

DIVDIFF_THRESHOLD = 1e-6
SINGULAR_RCOND = 1e-13


class SingularSystem(SpecmapError, ArithmeticError):
    """I + R(x) is not invertible (numerically)."""

    def __init__(self, msg, x=None):
        super().__init__(msg)
        self.x = x


class MultiplicityNotSupported(SpecmapError, ValueError):
    pass


# ---------------------------------------------------------------------------
# kernels


def _sin_over(z, x):
    """sin(z x) / z, equal to x at z = 0 (series for |z| < 1e-4)."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    zx2 = (z * x) ** 2
    return np.where(small, x * (1 - zx2 / 6 + zx2 * zx2 / 120), np.sin(z * x) / safe)


def _sin_over_dz(z, x):
    """d/dz [sin(z x) / z] = (z x cos(z x) - sin(z x)) / z^2."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    safe = np.where(small, 1.0, z)
    x3 = x ** 3
    series = -z * x3 / 3 + z ** 3 * x3 * x * x / 30 - z ** 5 * x3 * x ** 4 / 840
    exact = (safe * x * np.cos(safe * x) - np.sin(safe * x)) / safe ** 2
    return np.where(small, series, exact)


def dtilde_kernel(x, rho, theta):
    """D(x, rho, theta) = int_0^x cos(rho t) cos(theta t) dt in closed form."""
    return 0.5 * (_sin_over(rho - theta, x) + _sin_over(rho + theta, x))


def dtilde_drho(x, rho, theta):
    """Partial derivative of D(x, rho, theta) in rho."""
    return 0.5 * (_sin_over_dz(rho - theta, x) + _sin_over_dz(rho + theta, x))


def dtilde_dx(x, rho, theta):
    return np.cos(rho * x) * np.cos(theta * x)


def _branch(rho, rho_t):
    d = np.asarray(rho - rho_t, dtype=complex)
    small = np.abs(d) < DIVDIFF_THRESHOLD
    return d, small, np.where(small, 1.0, d), 0.5 * (rho + rho_t)


def g_divided(x, rho, n: int):
    """(cos rho x - cos rho_n x) / (rho - rho_n) with rho_n = n - 1.

    Below the threshold the derivative -x sin(m x) at the midpoint m is used;
    it is the exact limit at rho = rho_n and accurate to O(|rho - rho_n|^2).
    """
    return _g(x, rho, n - 1.0)


def _g(x, rho, rho_t):
    d, small, safe, mid = _branch(rho, rho_t)
    return np.where(small, -x * np.sin(mid * x), (np.cos(rho * x) - np.cos(rho_t * x)) / safe)


def _g_dx(x, rho, rho_t):
    """x-derivative of _g: divided difference of -r sin(r x)."""
    d, small, safe, mid = _branch(rho, rho_t)
    lim = -np.sin(mid * x) - mid * x * np.cos(mid * x)
    full = (-rho * np.sin(rho * x) + rho_t * np.sin(rho_t * x)) / safe
    return np.where(small, lim, full)


def G_divided(x, rho, theta, n: int):
    """(D(x, rho, theta) - D(x, rho_n, theta)) / (rho - rho_n), rho_n = n - 1."""
    return _G(x, rho, n - 1.0, theta)


def _G(x, rho, rho_t, theta):
    d, small, safe, mid = _branch(rho, rho_t)
    full = (dtilde_kernel(x, rho, theta) - dtilde_kernel(x, rho_t, theta)) / safe
    return np.where(small, dtilde_drho(x, mid, theta), full)


# ---------------------------------------------------------------------------
# system assembly and solution


@dataclass
class MainEquationSystem:
    """(I + R(x)) psi = psi~ at a batch of nodes; arrays carry the node axis first."""

    x: np.ndarray
    n_trunc: int
    matrix: np.ndarray              # (P, 2N, 2N), includes the identity
    rhs: np.ndarray                 # (P, 2N)
    dmatrix: Optional[np.ndarray] = None   # R'(x)
    drhs: Optional[np.ndarray] = None      # psi~'(x)


def _pairs(S: SpectralData, n_trunc: int):
    if S.n_max < n_trunc:
        raise InvalidArgument(f"need {n_trunc} spectral entries, have {S.n_max}")
    rho0 = S.rho[:n_trunc]
    rho1 = model_rho(n_trunc)
    a0 = S.alpha[:n_trunc]
    a1 = model_alpha(n_trunc)
    return rho0, rho1, a0, a1, rho0 - rho1


def _interleave(A00, A01, A10, A11):
    P, N, _ = A00.shape
    out = np.empty((P, 2 * N, 2 * N), dtype=complex)
    out[:, 0::2, 0::2] = A00
    out[:, 0::2, 1::2] = A01
    out[:, 1::2, 0::2] = A10
    out[:, 1::2, 1::2] = A11
    return out


def discrete_rows(x, rho0, rho1, a0, a1, rh, theta_cols, deriv=False):
    """Rows n0/n1 of the discrete equations evaluated against kernels at theta.

    Returns (row0, row1) with shape (P, N, len(theta)) holding G_n(x, rho_n0, theta)
    and D(x, rho_n1, theta) (or their x-derivatives).
    """
    xx = x[:, None, None]
    r0 = rho0[None, :, None]
    r1 = rho1[None, :, None]
    th = theta_cols[None, None, :]
    if deriv:
        row0 = _g(xx, r0, r1) * np.cos(th * xx)
        row1 = np.cos(r1 * xx) * np.cos(th * xx)
    else:
        row0 = _G(xx, r0, r1, th)
        row1 = dtilde_kernel(xx, r1, th)
    return row0, row1


def _blocks(x, rho0, rho1, a0, a1, rh, deriv):
    N = rho0.size
    theta = np.concatenate([rho0, rho1])
    row0, row1 = discrete_rows(x, rho0, rho1, a0, a1, rh, theta, deriv)
    G0, G1 = row0[..., :N], row0[..., N:]
    D0, D1 = row1[..., :N], row1[..., N:]
    A00 = a0 * rh * G0
    A01 = a0 * G0 - a1 * G1
    A10 = a0 * rh * D0
    A11 = a0 * D0 - a1 * D1
    return _interleave(A00, A01, A10, A11)


def _rhs(x, rho0, rho1, deriv):
    xx = x[:, None]
    out = np.empty((x.size, 2 * rho0.size), dtype=complex)
    if deriv:
        out[:, 0::2] = _g_dx(xx, rho0[None, :], rho1[None, :])
        out[:, 1::2] = -rho1 * np.sin(rho1 * xx)
    else:
        out[:, 0::2] = _g(xx, rho0[None, :], rho1[None, :])
        out[:, 1::2] = np.cos(rho1 * xx)
    return out


def build_system(S: SpectralData, x, n_trunc: int, with_derivative: bool = False) -> MainEquationSystem:
    """Assemble I + R(x) and psi~(x) for one node or an array of nodes."""
    if not S.is_simple:
        raise MultiplicityNotSupported("multiple eigenvalues: use the contour pipeline")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rho0, rho1, a0, a1, rh = _pairs(S, n_trunc)
    mat = _blocks(x, rho0, rho1, a0, a1, rh, False)
    idx = np.arange(2 * n_trunc)
    mat[:, idx, idx] += 1
    rhs = _rhs(x, rho0, rho1, False)
    sysm = MainEquationSystem(x, n_trunc, mat, rhs)
    if with_derivative:
        sysm.dmatrix = _blocks(x, rho0, rho1, a0, a1, rh, True)
        sysm.drhs = _rhs(x, rho0, rho1, True)
    return sysm


@dataclass
class Solved:
    psi: np.ndarray
    psi_prime: Optional[np.ndarray]
    inv_norm: np.ndarray
    residual: np.ndarray


def _solve_one(A, b, dA, db, explicit):
    # getrf directly: lu_factor would warn on exact singularity, which is tested below
    getrf, = sla.get_lapack_funcs(("getrf",), (A,))
    lu, piv, _ = getrf(A)
    anorm = np.max(np.sum(np.abs(A), axis=1))
    umin = np.min(np.abs(np.diag(lu)))
    if umin < SINGULAR_RCOND * anorm:
        return None
    if explicit:
        inv = sla.lu_solve((lu, piv), np.eye(A.shape[0]), check_finite=False)
        inv_norm = np.max(np.sum(np.abs(inv), axis=1))
    else:
        rcond, info = sla.lapack.zgecon(lu, anorm, norm="I")
        inv_norm = 1 / (rcond * anorm) if rcond > 0 else np.inf
    if not inv_norm * anorm < 1 / SINGULAR_RCOND:
        return None
    psi = sla.lu_solve((lu, piv), b, check_finite=False)
    dpsi = None
    if dA is not None:
        dpsi = sla.lu_solve((lu, piv), db - dA @ psi, check_finite=False)
    res = np.max(np.abs(A @ psi - b))
    return psi, dpsi, inv_norm, res


def _threads(threads=None):
    if threads is None:
        env = os.environ.get("SPECMAP_THREADS")
        threads = int(env) if env and env.isdigit() and int(env) > 0 else 1
    return max(1, threads)


def solve_batch(mat, rhs, dmat=None, drhs=None, x=None, explicit_inverse_norm=False,
                threads=None) -> Solved:
    """Solve a stack of systems with partial pivoting; raise on a singular node."""
    P, n = rhs.shape
    psi = np.empty((P, n), dtype=complex)
    dpsi = np.empty((P, n), dtype=complex) if dmat is not None else None
    inv_norm = np.empty(P)
    resid = np.empty(P)

    def work(j):
        out = _solve_one(mat[j], rhs[j], None if dmat is None else dmat[j],
                         None if drhs is None else drhs[j], explicit_inverse_norm)
        if out is None:
            xj = None if x is None else float(x[j])
            raise SingularSystem(f"I + R(x) is not invertible at x={xj:.17g}", xj)
        psi[j], d, inv_norm[j], resid[j] = out
        if dpsi is not None:
            dpsi[j] = d

    nt = _threads(threads)
    if nt == 1 or P < 2:
        for j in range(P):
            work(j)
    else:
        with ThreadPoolExecutor(nt) as ex:
            list(ex.map(work, range(P)))
    return Solved(psi, dpsi, inv_norm, resid)


def solve_system(sys: MainEquationSystem, explicit_inverse_norm: bool = False, threads=None):
    """Return (psi, psi_prime, inv_norm_estimate) for a single-node or batched system."""
    s = solve_batch(sys.matrix, sys.rhs, sys.dmatrix, sys.drhs, sys.x,
                    explicit_inverse_norm, threads)
    if sys.x.size == 1:
        return s.psi[0], None if s.psi_prime is None else s.psi_prime[0], float(s.inv_norm[0])
    return s.psi, s.psi_prime, float(np.max(s.inv_norm))


def recover_phi(psi, S: SpectralData, x=None, psi_prime=None):
    """phi_n0 = rho_hat_n psi_n0 + psi_n1, phi_n1 = psi_n1 (last axis interleaved)."""
    psi = np.asarray(psi)
    N = psi.shape[-1] // 2
    rh = S.rho[:N] - model_rho(N)
    phi0 = rh * psi[..., 0::2] + psi[..., 1::2]
    phi1 = psi[..., 1::2].copy()
    if psi_prime is None:
        return phi0, phi1
    dp = np.asarray(psi_prime)
    return phi0, phi1, rh * dp[..., 0::2] + dp[..., 1::2], dp[..., 1::2].copy()


# ---------------------------------------------------------------------------
# reconstruction


@dataclass
class InverseConfig:
    n_trunc: int = 30
    grid_nodes: int = 1024
    with_derivative: bool = True
    explicit_inverse_norm: bool = False
    normalize_shift: bool = True
    omega: Optional[complex] = None
    threads: Optional[int] = None
    chunk: int = 64
    contour_index: Optional[int] = None
    contour_nodes: int = 64
    fd_tolerance: float = 1e-3


@dataclass
class ReconstructionResult:
    q: GridFunction
    h: complex
    H: complex
    epsilon: GridFunction
    diagnostics: dict = field(default_factory=dict)

    def error_to(self, q, h, H) -> float:
        """||q - q'||_L2 + |h - h'| + |H - H'| against a reference triple."""
        qv = q.values if isinstance(q, GridFunction) else np.asarray(q)
        if qv.ndim == 0:
            qv = np.full(self.q.values.size, complex(qv))
        elif qv.size != self.q.values.size:
            qv = np.interp(self.q.x, np.linspace(0, np.pi, qv.size), qv.real) + 1j * np.interp(
                self.q.x, np.linspace(0, np.pi, qv.size), qv.imag)
        l2 = np.sqrt(abs(integrate(np.abs(self.q.values - qv) ** 2)))
        return float(l2 + abs(self.h - h) + abs(self.H - H))


def fd_derivative(values, M):
    """Fourth-order finite differences on the uniform grid (one-sided at ends)."""
    f = np.asarray(values)
    h = np.pi / M
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    c = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = c @ f[:5]
    d[1] = np.array([-3, -10, 18, -6, 1]) / (12 * h) @ f[:5]
    d[-1] = -(c @ f[::-1][:5])
    d[-2] = -(np.array([-3, -10, 18, -6, 1]) / (12 * h) @ f[::-1][:5])
    return d


def shift_for(S: SpectralData, config: InverseConfig):
    """Shift constant c = 2 omega / pi used to normalize omega to zero."""
    if not config.normalize_shift:
        return 0.0
    omega = config.omega if config.omega is not None else S.omega
    if omega is None:
        if S.n_max < 8:
            return 0.0
        omega = estimate_omega(S.rho)[0]
    return 2 * complex(omega) / np.pi


def epsilon_terms(x, S: SpectralData, n_trunc, psi, dpsi=None):
    """epsilon(x) and epsilon'(x) from the discrete part, psi interleaved per node."""
    rho0, rho1, a0, a1, rh = _pairs(S, n_trunc)
    xx = x[:, None]
    c0, c1 = np.cos(rho0 * xx), np.cos(rho1 * xx)
    p0, p1 = psi[:, 0::2], psi[:, 1::2]
    w1 = a0 * c0 - a1 * c1
    eps = np.sum(a0 * rh * c0 * p0 + w1 * p1, axis=1)
    if dpsi is None:
        return eps, None
    d0, d1 = dpsi[:, 0::2], dpsi[:, 1::2]
    s0, s1 = np.sin(rho0 * xx), np.sin(rho1 * xx)
    deps = np.sum(a0 * rh * (-rho0 * s0 * p0 + c0 * d0) + w1 * d1
                  + p1 * (-a0 * rho0 * s0 + a1 * rho1 * s1), axis=1)
    return eps, deps


def finish_reconstruction(x, eps, deps, shift, diagnostics, fd_tol=1e-3) -> ReconstructionResult:
    """Apply q = -2 eps' + shift, h = -eps(0), H = eps(pi) with an FD cross-check."""
    M = x.size - 1
    fd = fd_derivative(eps, M)
    if deps is None:
        deps = fd
        diagnostics["derivative"] = "finite differences"
    else:
        inner = slice(2, -2)
        gap = np.sqrt(np.sum(np.abs(deps[inner] - fd[inner]) ** 2) * np.pi / M)
        diagnostics["derivative_crosscheck"] = float(gap)
        diagnostics["derivative_crosscheck_ok"] = bool(gap <= fd_tol)
    q = -2 * deps + shift
    return ReconstructionResult(GridFunction(q), complex(-eps[0]), complex(eps[-1]),
                                GridFunction(eps), diagnostics)


def shifted_data(S: SpectralData, c) -> SpectralData:
    if c == 0:
        return S
    return S.replace(rho=rho_from_lambda(S.rho ** 2 - c), omega=None if S.omega is None else 0.0)


def epsilon_and_reconstruct(S: SpectralData, config: Optional[InverseConfig] = None) -> ReconstructionResult:
    """Solve the main equation on every grid node and recover (q, h, H)."""
    config = config or InverseConfig()
    if not S.is_simple:
        raise MultiplicityNotSupported("multiple eigenvalues: use the contour pipeline")
    N = config.n_trunc
    c = shift_for(S, config)
    Ss = shifted_data(S, c)
    x = grid(config.grid_nodes)
    eps = np.empty(x.size, dtype=complex)
    deps = np.empty(x.size, dtype=complex) if config.with_derivative else None
    inv_norm, resid = 0.0, 0.0
    for lo in range(0, x.size, config.chunk):
        xs = x[lo:lo + config.chunk]
        sysm = build_system(Ss, xs, N, config.with_derivative)
        sol = solve_batch(sysm.matrix, sysm.rhs, sysm.dmatrix, sysm.drhs, xs,
                          config.explicit_inverse_norm, config.threads)
        e, de = epsilon_terms(xs, Ss, N, sol.psi, sol.psi_prime)
        eps[lo:lo + xs.size] = e
        if deps is not None:
            deps[lo:lo + xs.size] = de
        inv_norm = max(inv_norm, float(sol.inv_norm.max()))
        resid = max(resid, float(sol.residual.max()))
    diag = {"residual_max": resid, "inv_norm": inv_norm, "n_trunc": N,
            "grid_nodes": config.grid_nodes, "shift": complex(c)}
    return finish_reconstruction(x, eps, deps, c, diag, config.fd_tolerance)


def reconstruct_from_epsilon(eps: GridFunction, deps=None) -> ReconstructionResult:
    """The final step alone: q = -2 eps', h = -eps(0), H = eps(pi)."""
    x = eps.x
    d = None if deps is None else np.asarray(deps, dtype=complex)
    return finish_reconstruction(x, eps.values, d, 0.0, {})


def operator_norm_profile(S: SpectralData, n_trunc: int, x_nodes, detail: bool = False):
    """sup over nodes of the max-row-sum norm of (I + R(x))^-1 (explicit inverse).

    A singular node yields +inf; with detail=True the node index is returned too.
    """
    x_nodes = np.atleast_1d(np.asarray(x_nodes, dtype=float))
    sysm = build_system(S, x_nodes, n_trunc)
    best, where = 0.0, None
    for j in range(x_nodes.size):
        out = _solve_one(sysm.matrix[j], sysm.rhs[j], None, None, True)
        if out is None:
            return (np.inf, j) if detail else np.inf
        if out[2] > best:
            best, where = out[2], j
    return (best, where) if detail else best


def report_to_json(r: ReconstructionResult) -> dict:
    from .spectral_core import _c2l
    d = r.diagnostics
    return {"q": [_c2l(z) for z in r.q.values], "h": _c2l(r.h), "H": _c2l(r.H),
            "residual_max": float(d.get("residual_max", 0.0)),
            "inv_norm": float(d.get("inv_norm", 0.0)),
            "n_trunc": int(d.get("n_trunc", 0)), "grid_nodes": r.q.M}
