"""Empirical stability measurements: perturbations, Lipschitz sweeps, residuals."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .direct import forward, integrate_solution, omega_direct
from .inverse_contour import (
    ContourGrid, choose_contour_index, inverse_solve_multiple, rational_weyl,
)
from .inverse_simple import (
    InverseConfig, ReconstructionResult, build_system, epsilon_and_reconstruct,
    shifted_data,
)
from .spectral_core import (
    InvalidArgument, ProblemTriple, SetSpec, SpecmapError, SpectralData,
    distance_d, distance_dN, integrate, model_rho, rho_from_lambda,
    validate_membership,
)

SCHEMES = ("gaussian_tail", "single_entry", "pair_split", "alpha_degenerate")
MIN_DISTANCE = 1e-10


class NoDoubleEigenvalue(SpecmapError, ValueError):
    pass


@dataclass(frozen=True)
class PerturbationScheme:
    """How to perturb spectral data.

    gaussian_tail     rho_n += m g_n / n, alpha_n += m (g'_n + i g''_n) / n (g standard normal;
                      rho stays real when it is real)
    single_entry      one entry (``target`` rho or alpha, 1-based ``index``) moves by m
    pair_split        the first double eigenvalue is split into two simple ones, delta = m
    alpha_degenerate  alpha_index is scaled by (1 - m), so m -> 1 drives it to zero
    """

    kind: str
    magnitude: float
    seed: int = 0
    index: int = 5
    target: str = "rho"
    printed: bool = False   # pair_split: use alpha_1 = a / delta literally

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise InvalidArgument(f"unknown perturbation kind {self.kind!r}")
        if self.magnitude < 0:
            raise InvalidArgument("magnitude must be nonnegative")


def perturb(S: SpectralData, scheme: PerturbationScheme) -> SpectralData:
    m = scheme.magnitude
    if scheme.kind == "pair_split":
        return _pair_split(S, m, scheme.printed)
    if m == 0:
        return S
    rho, alpha = S.rho.copy(), S.alpha.copy()
    if scheme.kind == "gaussian_tail":
        rng = np.random.default_rng(scheme.seed)
        n = np.arange(1, S.n_max + 1)
        g = rng.standard_normal((3, S.n_max))
        drho = g[0] if np.all(rho.imag == 0) else g[0] + 1j * rng.standard_normal(S.n_max)
        rho = rho + m * drho / n
        alpha = alpha + m * (g[1] + 1j * g[2]) / n
    elif scheme.kind == "single_entry":
        k = scheme.index - 1
        if not 0 <= k < S.n_max:
            raise InvalidArgument("index out of range")
        if scheme.target == "alpha":
            alpha[k] += m
        else:
            rho[k] += m
    elif scheme.kind == "alpha_degenerate":
        k = scheme.index - 1
        alpha[k] *= (1 - m)
    try:
        return S.replace(rho=rho, alpha=alpha)
    except InvalidArgument:
        # the perturbation broke a multiple group apart
        return SpectralData(rho, alpha, omega=S.omega)


def _pair_split(S: SpectralData, delta: float, printed: bool) -> SpectralData:
    """Split a double eigenvalue lambda_1 = lambda_2 into simple ones.

    lambda^d_1 = lambda_1 + d, lambda^d_2 = lambda_1 - d + c d^2 with a = alpha_2 / 2,
    c = alpha_1 / a.  The weights are alpha^d_1 = a/d + alpha_1, alpha^d_2 = -a/d: the
    extra alpha_1 keeps the residue sum, so the Weyl function of the split data
    converges to the original one as d -> 0 (``printed=True`` drops that term).
    """
    groups = [(n, m) for n, m in S.groups() if m == 2]
    if not groups:
        raise NoDoubleEigenvalue("pair_split needs a double eigenvalue")
    if delta == 0:
        return S
    n, _ = groups[0]
    k = n - 1
    lam1 = S.rho[k] ** 2
    a1, a2 = S.alpha[k], S.alpha[k + 1]
    a = a2 / 2
    c = a1 / a
    rho = S.rho.copy()
    alpha = S.alpha.copy()
    rho[k] = rho_from_lambda(lam1 + delta)
    rho[k + 1] = rho_from_lambda(lam1 - delta + c * delta ** 2)
    alpha[k] = a / delta + (0 if printed else a1)
    alpha[k + 1] = -a / delta
    idx, mult = [], []
    for g, mm in S.groups():
        if g == n:
            idx += [g, g + 1]
            mult += [1, 1]
        else:
            idx.append(g)
            mult.append(mm)
    if all(v == 1 for v in mult):
        return SpectralData(rho, alpha, omega=S.omega)
    return SpectralData(rho, alpha, idx, mult, omega=S.omega)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepConfig:
    n_trunc: int = 20
    grid_nodes: int = 512
    contour_index: Optional[int] = None
    contour_nodes: int = 64
    seeds: Sequence[int] = (0,)
    sets: Sequence[SetSpec] = ()
    normalize_shift: bool = True
    threads: Optional[int] = None


@dataclass
class StabilityRow:
    magnitude: float
    seed: int
    distance: float
    difference: float
    ratio: Optional[float]
    member_flags: str
    inv_norm: float
    alpha_max: float = 0.0
    error: str = ""


@dataclass
class StabilityReport:
    rows: List[StabilityRow] = field(default_factory=list)
    distance_kind: str = "d"

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows if r.ratio is not None])

    def spread(self) -> float:
        r = self.ratios()
        return float(r.max() / r.min()) if r.size else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["magnitude", "distance", "difference", "ratio", "member_flags", "inv_norm"])
        for r in self.rows:
            w.writerow([format(r.magnitude, ".17g"), format(r.distance, ".17g"),
                        format(r.difference, ".17g"),
                        "" if r.ratio is None else format(r.ratio, ".17g"),
                        r.member_flags, format(r.inv_norm, ".17g")])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"distance_kind": self.distance_kind,
                "rows": [{"magnitude": r.magnitude, "seed": r.seed, "distance": r.distance,
                          "difference": r.difference, "ratio": r.ratio,
                          "member_flags": r.member_flags, "inv_norm": r.inv_norm,
                          "alpha_max": r.alpha_max, "error": r.error} for r in self.rows]}


def solution_difference(r1: ReconstructionResult, r2: ReconstructionResult) -> float:
    return float(np.sqrt(abs(integrate(np.abs(r1.q.values - r2.q.values) ** 2)))
                 + abs(r1.h - r2.h) + abs(r1.H - r2.H))


def _reconstruct(S: SpectralData, cfg: SweepConfig, N: Optional[int]):
    icfg = InverseConfig(n_trunc=cfg.n_trunc, grid_nodes=cfg.grid_nodes,
                         normalize_shift=cfg.normalize_shift, threads=cfg.threads,
                         contour_index=N, contour_nodes=cfg.contour_nodes)
    if N is None:
        return epsilon_and_reconstruct(S, icfg)
    return inverse_solve_multiple(S, icfg)


def _flags(S1, S2, sets):
    out = []
    for spec in sets:
        a = validate_membership(S1, spec).member
        b = validate_membership(S2, spec).member
        out.append(f"{spec.kind}:{int(a)}{int(b)}")
    return ";".join(out)


def lipschitz_sweep(base: Union[ProblemTriple, SpectralData], scheme: PerturbationScheme,
                    magnitudes: Sequence[float], config: Optional[SweepConfig] = None) -> StabilityReport:
    """Reconstruct base and perturbed data and record difference / distance."""
    cfg = config or SweepConfig()
    if isinstance(base, ProblemTriple):
        base = forward(base, cfg.n_trunc)
    multi = (not base.is_simple) or scheme.kind == "pair_split"
    N = None
    if multi:
        N = cfg.contour_index or choose_contour_index(base)
    r1 = _reconstruct(base, cfg, N)
    report = StabilityReport(distance_kind="d_N" if multi else "d")
    omega = base.omega if base.omega is not None else 0.0
    for mag in magnitudes:
        seeds = cfg.seeds if scheme.kind == "gaussian_tail" else cfg.seeds[:1]
        for seed in seeds:
            S2 = perturb(base, replace(scheme, magnitude=mag, seed=seed))
            S2 = S2.replace(omega=omega)
            try:
                if multi:
                    grid_ = ContourGrid(N, cfg.contour_nodes)
                    lam = grid_.nodes ** 2
                    dist = distance_dN(base, S2, N, rational_weyl(base, lam, N),
                                       rational_weyl(S2, lam, N), omega, omega)
                else:
                    dist = distance_d(base, S2, omega, omega)
                r2 = _reconstruct(S2, cfg, N)
                diff = solution_difference(r1, r2)
                ratio = diff / dist if dist > MIN_DISTANCE else None
                inv = max(r1.diagnostics["inv_norm"], r2.diagnostics["inv_norm"])
                row = StabilityRow(mag, seed, dist, diff, ratio, _flags(base, S2, cfg.sets),
                                   inv, float(np.max(np.abs(S2.alpha))))
            except SpecmapError as e:
                row = StabilityRow(mag, seed, float("nan"), float("nan"), None, "", float("nan"),
                                   error=f"{type(e).__name__}: {e}")
            report.rows.append(row)
    report.rows.sort(key=lambda r: (np.inf if np.isnan(r.distance) else r.distance, r.magnitude, r.seed))
    return report


# ---------------------------------------------------------------------------
# main equation consistency


def residual_check(P: ProblemTriple, S: SpectralData, n_trunc: int, x_nodes,
                   normalize_shift: bool = True) -> float:
    """Max residual of the main equation at the direct-problem solution.

    Rows n <= n_trunc of I + R(x) are applied to the psi-coordinates of the
    exact phi(x, rho_n0), phi(x, rho_n1), with columns running over every
    entry of S (entries beyond S are model data and contribute nothing).  The
    data are first moved to omega = 0, where phi of the shifted problem at rho
    equals phi of P at sqrt(rho^2 + c).
    """
    if S.n_max < n_trunc:
        raise InvalidArgument("S shorter than n_trunc")
    c = 0.0
    if normalize_shift:
        omega = S.omega if S.omega is not None else omega_direct(P)
        c = 2 * complex(omega) / np.pi
    Ss = shifted_data(S, c)
    K = Ss.n_max
    x_nodes = np.atleast_1d(np.asarray(x_nodes, dtype=float))
    xg = P.q.x
    idx = np.rint(x_nodes / (np.pi / P.M)).astype(int)
    if np.any(np.abs(xg[idx] - x_nodes) > 1e-9):
        raise InvalidArgument("x_nodes must lie on the grid of q")
    rho0, rho1 = Ss.rho, model_rho(K)
    rh = rho0 - rho1
    small = np.abs(rh) < 1e-6
    eta = 1e-5
    # phi at the needed points; derivative in rho where rho_hat ~ 0
    pts = np.concatenate([rho0, rho1, rho1 + eta, rho1 - eta])
    sol = integrate_solution(P.q, 1.0, P.h, np.sqrt(pts ** 2 + c), error_estimate=False)
    vals = sol.value[idx]
    phi0, phi1 = vals[:, :K], vals[:, K:2 * K]
    dphi = (vals[:, 2 * K:3 * K] - vals[:, 3 * K:]) / (2 * eta)
    psi = np.empty((idx.size, 2 * K), dtype=complex)
    psi[:, 0::2] = np.where(small, dphi, (phi0 - phi1) / np.where(small, 1, rh))
    psi[:, 1::2] = phi1
    sysm = build_system(Ss, x_nodes, K)
    r = np.einsum("pij,pj->pi", sysm.matrix[:, :2 * n_trunc, :], psi) - sysm.rhs[:, :2 * n_trunc]
    return float(np.max(np.abs(r)))
