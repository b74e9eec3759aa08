"""Forward problem: solutions, characteristic functions, eigenvalues, weights.

The equation -y'' + q y = rho^2 y is integrated on the grid of q with a
fourth-order Magnus scheme (two Gauss nodes per cell, q interpolated by local
cubics).  Every routine is vectorized over arrays of rho.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .spectral_core import (
    EQUAL_RTOL, GridFunction, InvalidArgument, ProblemTriple, SpecmapError,
    SpectralData, group_multiplicities, grid, integrate, normalize_branch,
    rho_from_lambda,
)

NODES_PER_PERIOD = 16


class RhoOverCap(SpecmapError, ValueError):
    pass


class GridTooCoarse(SpecmapError, ValueError):
    pass


class CertificationFailure(SpecmapError, RuntimeError):
    pass


class NewtonFailure(SpecmapError, RuntimeError):
    pass


class DegenerateNormalization(SpecmapError, ArithmeticError):
    pass


class MultipleRoot(SpecmapError, ArithmeticError):
    pass


class NearEigenvalue(SpecmapError, ArithmeticError):
    pass


@dataclass(frozen=True)
class SolutionSample:
    x: float
    rho: complex
    value: complex
    derivative: complex


@dataclass
class Solution:
    """Solution values on the grid; columns correspond to the requested rho."""

    x: np.ndarray
    rho: np.ndarray
    value: np.ndarray        # shape (M+1, R)
    derivative: np.ndarray   # shape (M+1, R)
    error: Optional[np.ndarray] = None  # Richardson estimate at x = pi, per rho

    def sample(self, j: int, r: int = 0) -> SolutionSample:
        return SolutionSample(float(self.x[j]), complex(self.rho[r]),
                              complex(self.value[j, r]), complex(self.derivative[j, r]))

    def samples(self, r: int = 0):
        return [self.sample(j, r) for j in range(self.x.size)]


# ---------------------------------------------------------------------------
# integrator

_G = np.sqrt(3) / 6


def _lagrange4(t):
    """Cubic Lagrange weights for nodes 0,1,2,3 at position t."""
    return np.stack([-(t - 1) * (t - 2) * (t - 3) / 6, t * (t - 2) * (t - 3) / 2,
                     -t * (t - 1) * (t - 3) / 2, t * (t - 1) * (t - 2) / 6])


def _interp(q: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Evaluate the local-cubic interpolant of grid samples q at pos (in cells)."""
    M = q.size - 1
    if M < 3:
        return np.interp(pos, np.arange(M + 1), q.real) + 1j * np.interp(pos, np.arange(M + 1), q.imag)
    start = np.clip(np.floor(pos).astype(int) - 1, 0, M - 3)
    w = _lagrange4(pos - start)
    return sum(w[i] * q[start + i] for i in range(4))


def _gauss_samples(q: np.ndarray, stride: int):
    """q at the two Gauss nodes of each macro cell of `stride` grid cells."""
    M = q.size - 1
    left = np.arange(0, M, stride, dtype=float)
    return (_interp(q, left + stride * (0.5 - _G)), _interp(q, left + stride * (0.5 + _G)))


def _sinhc(s):
    small = np.abs(s) < 1e-3
    safe = np.where(small, 1.0, s)
    s2 = s * s
    return np.where(small, 1 + s2 / 6 + s2 * s2 / 120, np.sinh(safe) / safe)


def _propagate(q: np.ndarray, rho, y0, yp0, stride=1, store=True):
    """Magnus-4 propagation of (y, y') across [0, pi]."""
    M = q.size - 1
    h = stride * np.pi / M
    q1, q2 = _gauss_samples(q, stride)
    lam = np.asarray(rho, dtype=complex) ** 2
    y = np.broadcast_to(np.asarray(y0, dtype=complex), lam.shape).copy()
    yp = np.broadcast_to(np.asarray(yp0, dtype=complex), lam.shape).copy()
    steps = q1.size
    if store:
        Y = np.empty((steps + 1,) + lam.shape, dtype=complex)
        YP = np.empty_like(Y)
        Y[0], YP[0] = y, yp
    k = np.sqrt(3) / 12 * h * h
    for j in range(steps):
        a1 = q1[j] - lam
        a2 = q2[j] - lam
        c = k * (a1 - a2)
        b = 0.5 * h * (a1 + a2)
        s = np.sqrt(c * c + h * b)
        ch = np.cosh(s)
        sh = _sinhc(s)
        y, yp = (ch + sh * c) * y + sh * h * yp, sh * b * y + (ch - sh * c) * yp
        if store:
            Y[j + 1], YP[j + 1] = y, yp
    if store:
        return Y, YP
    return y, yp


def _check_rho(rho, M, rho_cap=None):
    r = np.abs(np.asarray(rho))
    rmax = float(r.max()) if r.size else 0.0
    if rho_cap is not None and rmax > rho_cap:
        raise RhoOverCap(f"|rho|={rmax:.4g} exceeds cap {rho_cap}")
    if 2 * M / max(rmax, 1e-300) < NODES_PER_PERIOD:
        raise GridTooCoarse(
            f"|rho|={rmax:.4g} needs at least {int(np.ceil(rmax * NODES_PER_PERIOD / 2))} grid nodes, have {M}")


def integrate_solution(q: GridFunction, init_value, init_slope, rho, rho_cap=None,
                       error_estimate=True) -> Solution:
    """Solve -y'' + q y = rho^2 y, y(0)=init_value, y'(0)=init_slope, on the q-grid.

    ``rho`` may be a scalar or an array.  The attached error is the Richardson
    estimate |y_h - y_2h| / 15 at x = pi (only when M is even).
    """
    qv = q.values
    M = q.M
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=complex))
    _check_rho(rho_arr, M, rho_cap)
    Y, YP = _propagate(qv, rho_arr, init_value, init_slope)
    err = None
    if error_estimate and M % 2 == 0 and M >= 6:
        y2, yp2 = _propagate(qv, rho_arr, init_value, init_slope, stride=2, store=False)
        err = np.maximum(np.abs(Y[-1] - y2), np.abs(YP[-1] - yp2)) / 15
    return Solution(grid(M), rho_arr, Y, YP, err)


def _endpoint(P: ProblemTriple, rho, y0, yp0, rho_cap=None):
    rho = np.asarray(rho, dtype=complex)
    _check_rho(rho, P.M, rho_cap)
    return _propagate(P.q.values, rho.ravel(), y0, yp0, store=False)


def _shaped(val, like):
    like = np.asarray(like)
    return complex(val[0]) if like.ndim == 0 else val.reshape(like.shape)


def char_delta(P: ProblemTriple, rho, rho_cap=None):
    """Delta(rho) = phi'(pi) + H phi(pi), phi(0)=1, phi'(0)=h."""
    y, yp = _endpoint(P, rho, 1.0, P.h, rho_cap)
    return _shaped(yp + P.H * y, rho)


def char_delta0(P: ProblemTriple, rho, rho_cap=None):
    """Delta_0(rho) = psi'(pi) + H psi(pi), psi(0)=0, psi'(0)=1."""
    y, yp = _endpoint(P, rho, 0.0, 1.0, rho_cap)
    return _shaped(yp + P.H * y, rho)


def char_pair(P: ProblemTriple, rho, rho_cap=None):
    """(Delta, Delta_0) from a single propagation of both solutions."""
    rho = np.asarray(rho, dtype=complex)
    flat = rho.ravel()
    y0 = np.concatenate([np.ones(flat.size), np.zeros(flat.size)])
    yp0 = np.concatenate([np.full(flat.size, P.h), np.ones(flat.size)])
    _check_rho(flat, P.M, rho_cap)
    y, yp = _propagate(P.q.values, np.concatenate([flat, flat]), y0, yp0, store=False)
    d = yp + P.H * y
    return _shaped(d[:flat.size], rho), _shaped(d[flat.size:], rho)


def omega_direct(P: ProblemTriple) -> complex:
    return complex(P.h + P.H + 0.5 * P.q.integral())


def omega0_direct(P: ProblemTriple) -> complex:
    return complex(P.H + 0.5 * P.q.integral())


# ---------------------------------------------------------------------------
# zeros of an even entire function of rho


def winding_number(f: Callable, center: complex, radius: float, K: int = 256,
                   max_K: int = 1 << 16) -> tuple[int, np.ndarray]:
    """Number of zeros of f inside the circle, by accumulated argument change.

    The node count is doubled until no phase jump between neighbours exceeds
    pi/3.  Returns (count, samples of f on the final circle).
    """
    while True:
        t = 2 * np.pi * np.arange(K) / K
        z = center + radius * np.exp(1j * t)
        v = f(z)
        if np.any(v == 0) or not np.all(np.isfinite(v)):
            raise CertificationFailure("function vanishes or overflows on the contour")
        dphi = np.angle(np.roll(v, -1) / v)
        if np.max(np.abs(dphi)) < np.pi / 3:
            return int(round(dphi.sum() / (2 * np.pi))), v
        if K >= max_K:
            raise CertificationFailure("winding count did not resolve")
        K *= 2


def _fprime_lambda(f, lam):
    """dF/dlambda for F(lambda) = f(sqrt(lambda)) by central differences."""
    eta = 1e-5 * (1 + np.abs(lam))
    both = f(np.concatenate([rho_from_lambda(lam + eta), rho_from_lambda(lam - eta)]))
    n = lam.size
    return (both[:n] - both[n:]) / (2 * eta)


def _newton_lambda(f, lam0, tol_scale=1e-11, maxiter=50):
    """Vectorized Newton for F(lambda) = f(sqrt(lambda)) = 0."""
    lam = np.array(lam0, dtype=complex)
    done = np.zeros(lam.size, dtype=bool)
    for _ in range(maxiter):
        act = ~done
        if not act.any():
            break
        la = lam[act]
        rho = rho_from_lambda(la)
        fv = f(rho)
        ok = np.abs(fv) <= tol_scale * (1 + np.abs(rho) ** 2)
        fp = _fprime_lambda(f, la)
        # the step is taken even once the residual is small: one extra quadratic step
        # brings lambda to round-off, which matters for sqrt(lambda) near zero
        step = np.where(fp == 0, 0, fv / np.where(fp == 0, 1, fp))
        la = la - step
        ok |= np.abs(step) <= 1e-14 * (1 + np.abs(la))
        lam[act] = la
        idx = np.flatnonzero(act)
        done[idx[ok]] = True
    if not done.all():
        rho = rho_from_lambda(lam[~done])
        fv = f(rho)
        ok = np.abs(fv) <= 1e3 * tol_scale * (1 + np.abs(rho) ** 2)
        if not ok.all():
            raise NewtonFailure(f"Newton did not converge for {np.count_nonzero(~ok)} roots")
    return lam


def _interior_moments(f, R, N, K):
    """Power sums of lambda/R^2 over the zeros of F inside |lambda| < R^2."""
    t = 2 * np.pi * (np.arange(K) + 0.5) / K
    z = R * np.exp(1j * t)
    eta = 1e-5 * (1 + R)
    vals = f(np.concatenate([z, z + eta, z - eta]))
    fz, fp = vals[:K], (vals[K:2 * K] - vals[2 * K:]) / (2 * eta)
    g = fp / fz * z / K          # (1/2 pi i) contour weights in rho
    mu = (z / R) ** 2
    # rho-contour covers the lambda-circle twice
    return np.array([0.5 * np.sum(g * mu ** k) for k in range(N + 1)])


def _roots_from_power_sums(p, N):
    """Polynomial roots from power sums p_1..p_N via Newton's identities."""
    e = np.zeros(N + 1, dtype=complex)
    e[0] = 1
    for k in range(1, N + 1):
        e[k] = sum((-1) ** (i - 1) * e[k - i] * p[i] for i in range(1, k + 1)) / k
    coeffs = [(-1) ** k * e[k] for k in range(N + 1)]
    return np.roots(coeffs) if N > 0 else np.array([], dtype=complex)


@dataclass
class EigenResult:
    rho: np.ndarray
    index_set: np.ndarray
    multiplicities: np.ndarray
    N: int                  # contour index with N eigenvalues inside Gamma_N
    winding: int            # zeros of Delta in rho inside Gamma_N (= 2N)
    total_winding: int      # zeros inside |rho| = n_max - 1/2 (= 2 n_max)


def find_zeros(f: Callable, omega: complex, n_max: int, N_start: Optional[int] = None,
               N_max_tries: int = 24, cluster_rtol: float = 1e-5) -> EigenResult:
    """Zeros rho_1..rho_{n_max} of an even entire function with model asymptotics.

    f maps an array of rho to values of Delta.  The interior (|rho| < N - 1/2)
    is handled through contour moments and a certified winding count; the tail
    through Newton from the asymptotic guesses n - 1 + omega/(pi n).
    """
    if n_max < 1:
        raise InvalidArgument("n_max must be >= 1")
    N = N_start if N_start is not None else max(1, int(np.ceil(4 * abs(omega) / np.pi)))
    N = min(N, n_max)
    for _ in range(N_max_tries):
        R = N - 0.5
        w, vals = winding_number(f, 0.0, R, K=max(256, 64 * N))
        if w == 2 * N:
            break
        N += 1
    else:
        raise CertificationFailure("no contour Gamma_N with the expected zero count")

    # interior zeros
    K = max(512, 128 * N)
    p = _interior_moments(f, R, N, K)
    if abs(p[0] - N) > 1e-6:
        raise CertificationFailure(f"interior moment count {p[0]:.6g} != {N}")
    mu = _roots_from_power_sums(p, N)
    lam_in = _newton_lambda(f, R * R * mu)
    lam_in = lam_in[np.lexsort((lam_in.imag, np.round(lam_in.real, 9)))]
    lam_in, mult_in = _resolve_clusters(f, lam_in, cluster_rtol)
    if mult_in.sum() != N:
        raise CertificationFailure("interior multiplicities do not add up to N")

    # tail
    rho_all = [np.repeat(rho_from_lambda(lam_in), mult_in)]
    mult = list(mult_in)
    if n_max > N:
        n = np.arange(N + 1, n_max + 1)
        guess = n - 1 + omega / (np.pi * n)
        lam_tail = _newton_lambda(f, guess ** 2)
        rho_tail = rho_from_lambda(lam_tail)
        if np.any(np.abs(rho_tail - (n - 1)) > 0.5):
            raise CertificationFailure("tail root left its asymptotic disk")
        if n.size > 1 and np.min(np.abs(np.diff(rho_tail))) < 1e-6:
            raise CertificationFailure("tail roots are not distinct")
        rho_all.append(rho_tail)
        mult += [1] * n.size
    rho = normalize_branch(np.concatenate(rho_all))[:n_max]
    total = w
    if n_max > N:
        total, _ = winding_number(f, 0.0, n_max - 0.5, K=max(512, 32 * n_max))
        if total != 2 * n_max:
            raise CertificationFailure(f"found {n_max} eigenvalues but winding count is {total / 2}")
    mult = np.array(mult)
    # trim a final group that overran n_max
    csum = np.cumsum(mult)
    keep = np.searchsorted(csum, n_max) + 1
    mult = mult[:keep]
    mult[-1] -= csum[keep - 1] - n_max
    idx = np.concatenate([[1], 1 + np.cumsum(mult)[:-1]])
    return EigenResult(rho, idx, mult, N, w, total)


def _resolve_clusters(f, lam, rtol):
    """Merge nearly equal interior roots when a disk winding count confirms it."""
    out, mult = [], []
    used = np.zeros(lam.size, dtype=bool)
    for i in range(lam.size):
        if used[i]:
            continue
        close = (~used) & (np.abs(lam - lam[i]) <= rtol * (1 + abs(lam[i])))
        members = np.flatnonzero(close)
        center = lam[members].mean()
        m = members.size
        if m > 1:
            others = np.abs(np.delete(lam, members) - center)
            r = 0.5 * others.min() if others.size else 0.25
            r = min(r, 0.25 * (1 + abs(center)))
            count, _ = winding_number(lambda z: f(rho_from_lambda(z)), center, r)
            if count != m:
                raise CertificationFailure(
                    f"cluster near lambda={center:.6g}: {m} roots but winding count {count}")
        used[members] = True
        out.append(center)
        mult.append(m)
    return np.array(out, dtype=complex), np.array(mult, dtype=int)


def find_eigenvalues(P: ProblemTriple, n_max: int, **kw) -> EigenResult:
    """Eigenvalues rho_1..rho_{n_max} of L(q, h, H) with multiplicity structure."""
    return find_zeros(lambda r: char_delta(P, r), omega_direct(P), n_max, **kw)


# ---------------------------------------------------------------------------
# weight numbers and the Weyl function


def weight_numbers_simple(P: ProblemTriple, rho_n):
    """alpha_n = 1 / int_0^pi phi(x, rho_n)^2 dx (Simpson on the solver grid)."""
    rho = np.atleast_1d(np.asarray(rho_n, dtype=complex))
    sol = integrate_solution(P.q, 1.0, P.h, rho, error_estimate=False)
    s = integrate(sol.value ** 2, axis=0)
    if np.any(np.abs(s) < 1e-12):
        raise DegenerateNormalization("int phi^2 vanishes: eigenvalue is (nearly) multiple")
    return _shaped(1 / s, rho_n)


def delta_dot(P: ProblemTriple, rho):
    """d Delta / d rho by central differences with step 1e-5 (1 + |rho|)."""
    rho = np.atleast_1d(np.asarray(rho, dtype=complex))
    eta = 1e-5 * (1 + np.abs(rho))
    d = char_delta(P, np.concatenate([rho + eta, rho - eta]))
    return (d[:rho.size] - d[rho.size:]) / (2 * eta)


def weight_numbers_residue(P: ProblemTriple, rho_n):
    """Residue of M(lambda) = -Delta_0/Delta at lambda_n = rho_n^2.

    Res = -2 rho_n Delta_0(rho_n) / Delta'(rho_n); near rho = 0 the derivative
    is taken in lambda instead, which covers the double zero of Delta in rho.
    """
    rho = np.atleast_1d(np.asarray(rho_n, dtype=complex))
    d0 = char_delta0(P, rho)
    out = np.empty(rho.size, dtype=complex)
    near0 = np.abs(rho) < 0.5
    if np.any(~near0):
        r = rho[~near0]
        dd = delta_dot(P, r)
        if np.any(np.abs(dd) < 1e-8 * (1 + np.abs(r))):
            raise MultipleRoot("Delta' vanishes: eigenvalue is multiple")
        out[~near0] = -2 * r * d0[~near0] / dd
    if np.any(near0):
        lam = rho[near0] ** 2
        fp = _fprime_lambda(lambda z: char_delta(P, z), lam)
        if np.any(np.abs(fp) < 1e-8):
            raise MultipleRoot("dDelta/dlambda vanishes: eigenvalue is multiple")
        out[near0] = -d0[near0] / fp
    return _shaped(out, rho_n)


def weyl_function(P: ProblemTriple, rho):
    """M(rho^2) = -Delta_0(rho) / Delta(rho)."""
    d, d0 = char_pair(P, rho)
    d_arr = np.atleast_1d(d)
    r = np.atleast_1d(np.asarray(rho))
    if np.any(np.abs(d_arr) <= 1e-12 * (1 + np.abs(r) ** 2)):
        raise NearEigenvalue("Weyl function evaluated at an eigenvalue")
    return -d0 / d


def model_weyl(rho):
    """cos(rho pi) / (rho sin(rho pi)), the Weyl function of the zero problem."""
    rho = np.asarray(rho, dtype=complex)
    return np.cos(rho * np.pi) / (rho * np.sin(rho * np.pi))


def laurent_coefficients(M_samples, center, radius: float, m_n: int):
    """alpha_{n+nu} = (1/2 pi i) int M(lambda) (lambda - lambda_n)^nu d lambda, nu < m_n.

    Samples are taken at lambda_j = center + radius exp(2 pi i j / K).
    """
    M_samples = np.asarray(M_samples, dtype=complex)
    K = M_samples.size
    if K < 16:
        raise InvalidArgument("need at least 16 samples on the circle")
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    u = radius * np.exp(2j * np.pi * np.arange(K) / K)
    return np.array([np.mean(M_samples * u ** (nu + 1)) for nu in range(m_n)])


def circle_nodes(center, radius, K=64):
    return center + radius * np.exp(2j * np.pi * np.arange(K) / K)


def _group_radius(lams, i):
    others = np.delete(lams, i)
    r = 0.25 * (1 + abs(lams[i]))
    if others.size:
        r = min(r, 0.4 * np.min(np.abs(others - lams[i])))
    return r


def weights_from_weyl(Mfun: Callable, eig: EigenResult, K: int = 64) -> np.ndarray:
    """Generalized weight numbers of every group via Laurent coefficients of M."""
    lam = eig.rho[eig.index_set - 1] ** 2
    alpha = np.empty(eig.rho.size, dtype=complex)
    for g, (n, m) in enumerate(zip(eig.index_set, eig.multiplicities)):
        r = _group_radius(lam, g)
        z = circle_nodes(lam[g], r, K)
        alpha[n - 1:n - 1 + m] = laurent_coefficients(Mfun(z), lam[g], r, m)
    return alpha


def _is_real(P: ProblemTriple) -> bool:
    return (not np.iscomplexobj(P.q.values) or not np.any(P.q.values.imag)) \
        and complex(P.h).imag == 0 and complex(P.H).imag == 0


def forward(P: ProblemTriple, n_max: int, **kw) -> SpectralData:
    """Spectral data {rho_n, alpha_n} of L(q, h, H) with omega attached."""
    eig = find_eigenvalues(P, n_max, **kw)
    if np.all(eig.multiplicities == 1):
        alpha = weight_numbers_simple(P, eig.rho)
        if _is_real(P):
            # self-adjoint: lambda and alpha are real, drop round-off imaginary parts
            return SpectralData(rho_from_lambda((eig.rho ** 2).real), alpha.real + 0j,
                                omega=omega_direct(P).real)
        return SpectralData(eig.rho, alpha, omega=omega_direct(P))
    alpha = weights_from_weyl(lambda lam: weyl_function(P, rho_from_lambda(lam)), eig)
    simple = np.flatnonzero(eig.multiplicities == 1)
    starts = eig.index_set[simple] - 1
    if starts.size:
        alpha[starts] = weight_numbers_simple(P, eig.rho[starts])
    return SpectralData(eig.rho, alpha, eig.index_set, eig.multiplicities, omega=omega_direct(P))


# ---------------------------------------------------------------------------
# Cauchy data


@dataclass(frozen=True)
class CauchyData:
    N: GridFunction
    N0: GridFunction
    omega: complex
    omega0: complex

    @property
    def M(self) -> int:
        return self.N.M


def _endpoint_fit(coef, k, lead):
    """Fit coef_k ~ (A - (-1)^k B)/k^lead + (C - (-1)^k D)/k^(lead+2) on the upper half of k."""
    sel = k >= k[-1] // 2
    kk, sg = k[sel].astype(float), (-1.0) ** k[sel]
    basis = np.stack([kk ** -lead, -sg * kk ** -lead, kk ** -(lead + 2.0),
                      -sg * kk ** -(lead + 2.0)], axis=1)
    sol = np.linalg.lstsq(basis.astype(complex), coef[sel], rcond=None)[0]
    return sol[0], sol[1]


def cauchy_data(P: ProblemTriple, fourier_modes: int = 64, grid_nodes: Optional[int] = None) -> CauchyData:
    """Kernels of the cosine/sine representations of Delta and Delta_0.

    At integer rho = k the representations reduce to Fourier coefficients:
    int N cos kt = Delta(k) - omega (-1)^k and int N0 sin kt = k (Delta_0(k) - (-1)^k).
    Plain truncation converges slowly (O(1/K) for the sine series, whose odd
    extension jumps at the ends), so the endpoint behaviour is fitted from the
    upper coefficients and carried by a low-degree polynomial whose
    coefficients are known in closed form; only the remainder is truncated.
    """
    K = fourier_modes
    if K < 8:
        raise InvalidArgument("fourier_modes must be >= 8")
    M = grid_nodes or P.M
    omega, omega0 = omega_direct(P), omega0_direct(P)
    k = np.arange(K + 1)
    sign = (-1.0) ** k
    d, d0 = char_pair(P, k.astype(complex))
    a = d - omega * sign
    b = k * (d0 - sign)
    t = grid(M)
    # cosine part: a_k ~ ((-1)^k N'(pi) - N'(0)) / k^2
    A1, B1 = (-v for v in _endpoint_fit(a[1:], k[1:], 2))   # N'(0), N'(pi)
    poly = A1 * t + (B1 - A1) * t ** 2 / (2 * np.pi)
    a_poly = np.empty(K + 1, dtype=complex)
    a_poly[0] = A1 * np.pi ** 2 / 2 + (B1 - A1) * np.pi ** 2 / 6
    a_poly[1:] = (sign[1:] * B1 - A1) / k[1:] ** 2
    ra = a - a_poly
    Nt = poly + ra[0] / np.pi + (2 / np.pi) * np.cos(np.outer(t, k[1:])) @ ra[1:]
    # sine part: b_k ~ (N0(0) - (-1)^k N0(pi)) / k
    A0, B0 = _endpoint_fit(b[1:], k[1:], 1)
    line = A0 + (B0 - A0) * t / np.pi
    rb = b[1:] - (A0 - sign[1:] * B0) / k[1:]
    N0t = line + (2 / np.pi) * np.sin(np.outer(t, k[1:])) @ rb
    return CauchyData(GridFunction(Nt), GridFunction(N0t), omega, omega0)


def _sin_over(rho, t):
    """sin(rho t) / rho, with value t at rho = 0."""
    z = rho * t
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, rho)
    return np.where(small, t * (1 - z * z / 6), np.sin(z) / safe)


def cauchy_characteristic(C: CauchyData):
    """Delta and Delta_0 synthesized from Cauchy data (Simpson on the grid)."""
    t = C.N.x
    Nv, N0v = C.N.values, C.N0.values

    def delta(rho):
        rho = np.asarray(rho, dtype=complex)
        r = rho.ravel()
        integ = integrate(Nv[None, :] * np.cos(np.outer(r, t)), axis=1)
        out = -r * np.sin(r * np.pi) + C.omega * np.cos(r * np.pi) + integ
        return out.reshape(rho.shape)

    def delta0(rho):
        rho = np.asarray(rho, dtype=complex)
        r = rho.ravel()
        integ = integrate(N0v[None, :] * _sin_over(r[:, None], t[None, :]), axis=1)
        out = np.cos(r * np.pi) + C.omega0 * _sin_over(r, np.pi) + integ
        return out.reshape(rho.shape)

    return delta, delta0


def cauchy_to_json(C: CauchyData) -> dict:
    from .spectral_core import _c2l
    return {"grid_nodes": C.M, "N": [_c2l(z) for z in C.N.values],
            "N0": [_c2l(z) for z in C.N0.values], "omega": _c2l(C.omega),
            "omega0": _c2l(C.omega0)}


def cauchy_from_json(d: dict) -> CauchyData:
    from .spectral_core import SchemaError, _arr, _l2c
    if not isinstance(d, dict):
        raise SchemaError("Cauchy data must be a JSON object")
    for key in ("grid_nodes", "N", "N0", "omega", "omega0"):
        if key not in d:
            raise SchemaError(f"missing key {key!r}")
    M = d["grid_nodes"]
    if not isinstance(M, int) or M < 2:
        raise SchemaError("grid_nodes must be an integer >= 2")
    Nv, N0v = _arr(d["N"], "N"), _arr(d["N0"], "N0")
    if Nv.size != M + 1 or N0v.size != M + 1:
        raise SchemaError(f"N and N0 must have {M + 1} entries")
    return CauchyData(GridFunction(Nv), GridFunction(N0v), _l2c(d["omega"], "omega"),
                      _l2c(d["omega0"], "omega0"))
