"""Domain types, the model problem, asymptotic tails, distances and set checks.

Everything here acts on finite prefixes of the (in principle infinite)
spectral sequences.  Complex scalars are plain Python/numpy complex numbers;
sequences are 1-D complex numpy arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson

# two eigenvalues rho_a, rho_b are treated as equal below this relative gap
EQUAL_RTOL = 1e-9


class SpecmapError(Exception):
    """Base class for library errors."""


class InvalidArgument(SpecmapError, ValueError):
    pass


class TooFewEntries(SpecmapError, ValueError):
    pass


class LengthMismatch(SpecmapError, ValueError):
    pass


class KindMismatch(SpecmapError, TypeError):
    pass


# ---------------------------------------------------------------------------
# types


def _finite(a, what):
    if not np.all(np.isfinite(a)):
        raise InvalidArgument(f"{what} contains NaN or Inf")


@dataclass(frozen=True)
class GridFunction:
    """Complex samples on the uniform grid x_j = j*pi/M, j = 0..M."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 1 or v.size < 3:
            raise InvalidArgument("grid function needs M >= 2 (at least 3 samples)")
        _finite(v, "grid function")
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.size - 1

    @property
    def x(self) -> np.ndarray:
        return grid(self.M)

    @classmethod
    def from_callable(cls, f, M: int) -> "GridFunction":
        x = grid(M)
        return cls(np.broadcast_to(np.asarray(f(x), dtype=complex), x.shape).copy())

    @classmethod
    def constant(cls, c, M: int) -> "GridFunction":
        return cls(np.full(M + 1, complex(c)))

    def integral(self) -> complex:
        return integrate(self.values)

    def l2_norm(self) -> float:
        return float(np.sqrt(abs(integrate(np.abs(self.values) ** 2))))


def grid(M: int) -> np.ndarray:
    if M < 2:
        raise InvalidArgument("M must be >= 2")
    return np.linspace(0.0, np.pi, M + 1)


def integrate(values, axis=-1) -> complex:
    """Composite Simpson over [0, pi] for samples on the uniform grid."""
    values = np.asarray(values)
    M = values.shape[axis] - 1
    return simpson(values, dx=np.pi / M, axis=axis)


@dataclass(frozen=True)
class ProblemTriple:
    q: GridFunction
    h: complex
    H: complex

    def __post_init__(self):
        object.__setattr__(self, "h", complex(self.h))
        object.__setattr__(self, "H", complex(self.H))
        _finite(np.array([self.h, self.H]), "boundary constants")

    @property
    def M(self) -> int:
        return self.q.M

    def shifted(self, c) -> "ProblemTriple":
        return ProblemTriple(GridFunction(self.q.values + c), self.h, self.H)


@dataclass(frozen=True)
class SpectralData:
    """Prefix {rho_n, alpha_n}, n = 1..n_max, with optional multiplicity structure.

    ``index_set`` holds 1-based starting indices of eigenvalue groups and
    ``multiplicities`` the matching group sizes.  For a group starting at n
    with multiplicity m, alpha[n-1 .. n+m-2] are the Laurent coefficients of
    the Weyl function at lambda_n, ordered by increasing pole order.
    """

    rho: np.ndarray
    alpha: np.ndarray
    index_set: Optional[np.ndarray] = None
    multiplicities: Optional[np.ndarray] = None
    omega: Optional[complex] = None

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=complex))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=complex))
        if rho.shape != alpha.shape or rho.ndim != 1:
            raise LengthMismatch("rho and alpha must have equal length")
        _finite(rho, "rho")
        _finite(alpha, "alpha")
        rho = normalize_branch(rho)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "alpha", alpha)
        if (self.index_set is None) != (self.multiplicities is None):
            raise InvalidArgument("index_set and multiplicities go together")
        if self.index_set is not None:
            idx = np.asarray(self.index_set, dtype=int)
            mult = np.asarray(self.multiplicities, dtype=int)
            if idx.shape != mult.shape or np.any(mult < 1):
                raise InvalidArgument("bad multiplicity structure")
            if mult.sum() != rho.size:
                raise InvalidArgument("multiplicities must sum to n_max")
            expect = np.concatenate([[1], 1 + np.cumsum(mult)[:-1]])
            if not np.array_equal(idx, expect):
                raise InvalidArgument("index set must list consecutive group starts")
            for n, m in zip(idx, mult):
                block = rho[n - 1:n - 1 + m]
                if not np.all(_same(block, block[0])):
                    raise InvalidArgument(f"group at n={n} is not a repeated eigenvalue")
            object.__setattr__(self, "index_set", idx)
            object.__setattr__(self, "multiplicities", mult)
        if self.omega is not None:
            object.__setattr__(self, "omega", complex(self.omega))

    @property
    def n_max(self) -> int:
        return self.rho.size

    @property
    def lam(self) -> np.ndarray:
        return self.rho ** 2

    @property
    def is_simple(self) -> bool:
        return self.multiplicities is None or bool(np.all(self.multiplicities == 1))

    def groups(self):
        """List of (start index, multiplicity) pairs, 1-based."""
        if self.index_set is None:
            return [(n, 1) for n in range(1, self.n_max + 1)]
        return list(zip(self.index_set.tolist(), self.multiplicities.tolist()))

    def replace(self, **kw) -> "SpectralData":
        d = dict(rho=self.rho, alpha=self.alpha, index_set=self.index_set,
                 multiplicities=self.multiplicities, omega=self.omega)
        d.update(kw)
        return SpectralData(**d)


@dataclass(frozen=True)
class TailDecomposition:
    omega: complex
    varkappa: np.ndarray
    s: np.ndarray
    omega_error: float = 0.0

    def recompose(self):
        """Return (rho, alpha) from the decomposition."""
        n = np.arange(1, self.varkappa.size + 1)
        rho = n - 1 + self.omega / (np.pi * n) + self.varkappa / n
        alpha = 2 / np.pi + self.s / n
        return rho, alpha


SET_KINDS = ("B_Omega", "B_Omega_ring", "V_Omega_delta", "V_Omega_tau_plus",
             "V_Omega_tau_minus", "P_Q", "P_QA")


@dataclass(frozen=True)
class SetSpec:
    kind: str
    Omega: Optional[float] = None
    delta: Optional[float] = None
    tau: Optional[Sequence[float]] = None
    Q: Optional[float] = None
    A: Optional[float] = None
    K: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SET_KINDS:
            raise InvalidArgument(f"unknown set kind {self.kind!r}")
        need = {"B_Omega": ["Omega"], "B_Omega_ring": ["Omega", "K"],
                "V_Omega_delta": ["Omega", "delta"],
                "V_Omega_tau_plus": ["Omega", "tau"],
                "V_Omega_tau_minus": ["Omega", "tau"],
                "P_Q": ["Q"], "P_QA": ["Q", "A"]}[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise InvalidArgument(f"{self.kind} needs parameter {name}")
        for name in ("Omega", "Q", "A", "K"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise InvalidArgument("delta must lie in (0, 1)")
        if self.tau is not None and np.any(np.asarray(self.tau) <= 0):
            raise InvalidArgument("tau must be positive")

    @property
    def on_triples(self) -> bool:
        return self.kind in ("P_Q", "P_QA")


# ---------------------------------------------------------------------------
# helpers


def normalize_branch(rho):
    """Map rho to the branch arg(rho) in [-pi/2, pi/2)."""
    rho = np.asarray(rho, dtype=complex)
    flip = (rho.real < 0) | ((rho.real == 0) & (rho.imag > 0))
    return np.where(flip, -rho, rho)


def rho_from_lambda(lam):
    return normalize_branch(np.sqrt(np.asarray(lam, dtype=complex)))


def _same(a, b):
    return np.abs(np.asarray(a) - b) <= EQUAL_RTOL * (1 + np.abs(b))


def group_multiplicities(rho):
    """Group consecutive equal eigenvalues.  Returns (index_set, multiplicities)."""
    rho = np.asarray(rho, dtype=complex)
    idx, mult = [], []
    n = 0
    while n < rho.size:
        m = 1
        while n + m < rho.size and _same(rho[n + m], rho[n]):
            m += 1
        idx.append(n + 1)
        mult.append(m)
        n += m
    return np.array(idx), np.array(mult)


def model_alpha(n_max: int) -> np.ndarray:
    a = np.full(n_max, 2 / np.pi, dtype=complex)
    if n_max:
        a[0] = 1 / np.pi
    return a


def model_rho(n_max: int) -> np.ndarray:
    return np.arange(n_max, dtype=float).astype(complex)


# ---------------------------------------------------------------------------
# operations


def model_spectral_data(n_max: int) -> SpectralData:
    """Spectral data of the zero problem: rho_n = n-1, alpha = (1/pi, 2/pi, ...)."""
    if not isinstance(n_max, (int, np.integer)) or n_max < 1:
        raise InvalidArgument("n_max must be a positive integer")
    return SpectralData(model_rho(n_max), model_alpha(n_max), omega=0.0)


def estimate_omega(rho) -> tuple[complex, float]:
    """pi * lim n (rho_n - n + 1) from the last quartile, Richardson in 1/n.

    The sequence t_n = pi n (rho_n - n + 1) behaves like omega + c/n + ...;
    the pairwise Richardson combination (n t_n - m t_m)/(n - m) removes the
    1/n term.  Returns the mean estimate and the spread as an error figure.
    """
    rho = np.asarray(rho, dtype=complex)
    n_max = rho.size
    if n_max < 8:
        raise TooFewEntries("need at least 8 entries to estimate omega")
    n = np.arange(1, n_max + 1)
    t = np.pi * n * (rho - n + 1)
    lo = n_max - max(2, n_max // 4)
    nn, tt = n[lo:], t[lo:]
    est = (nn[1:] * tt[1:] - nn[:-1] * tt[:-1]) / (nn[1:] - nn[:-1])
    omega = complex(np.mean(est))
    err = float(np.max(np.abs(est - omega))) if est.size > 1 else float(abs(tt[-1] - tt[-2]))
    return omega, err


def decompose_asymptotics(S: SpectralData, omega_hint=None) -> TailDecomposition:
    """Split rho_n = n-1 + omega/(pi n) + kappa_n/n, alpha_n = 2/pi + s_n/n."""
    err = 0.0
    if omega_hint is None:
        omega, err = estimate_omega(S.rho)
    else:
        omega = complex(omega_hint)
    n = np.arange(1, S.n_max + 1)
    varkappa = n * (S.rho - n + 1) - omega / np.pi
    s = n * (S.alpha - 2 / np.pi)
    return TailDecomposition(omega, varkappa, s, err)


def distance_d(S1: SpectralData, S2: SpectralData, omega1, omega2) -> float:
    """Prefix distance sqrt(|dw|^2 + sum |d kappa|^2 + |d s|^2)."""
    if S1.n_max != S2.n_max:
        raise LengthMismatch("spectral data of different length")
    t1 = decompose_asymptotics(S1, omega1)
    t2 = decompose_asymptotics(S2, omega2)
    tot = (abs(t1.omega - t2.omega) ** 2 + np.sum(np.abs(t1.varkappa - t2.varkappa) ** 2)
           + np.sum(np.abs(t1.s - t2.s) ** 2))
    return float(np.sqrt(tot))


def distance_dN(S1: SpectralData, S2: SpectralData, N: int, M1_on_contour, M2_on_contour,
                omega1, omega2) -> float:
    """max |M1 - M2| on Gamma_N plus the tail distance over n > N."""
    M1 = np.asarray(M1_on_contour, dtype=complex)
    M2 = np.asarray(M2_on_contour, dtype=complex)
    if M1.shape != M2.shape:
        raise LengthMismatch("contour samples have different node counts")
    if S1.n_max != S2.n_max:
        raise LengthMismatch("spectral data of different length")
    if N >= S1.n_max:
        raise InvalidArgument("N must be smaller than n_max")
    t1 = decompose_asymptotics(S1, omega1)
    t2 = decompose_asymptotics(S2, omega2)
    tail = (abs(t1.omega - t2.omega) ** 2 + np.sum(np.abs(t1.varkappa[N:] - t2.varkappa[N:]) ** 2)
            + np.sum(np.abs(t1.s[N:] - t2.s[N:]) ** 2))
    head = float(np.max(np.abs(M1 - M2))) if M1.size else 0.0
    return head + float(np.sqrt(tail))


def xi_sequence(S: SpectralData) -> np.ndarray:
    return np.sqrt(np.abs(S.rho - model_rho(S.n_max)) ** 2
                   + np.abs(S.alpha - model_alpha(S.n_max)) ** 2)


def l21_norm(seq) -> float:
    seq = np.asarray(seq)
    n = np.arange(1, seq.size + 1)
    return float(np.sqrt(np.sum((n * np.abs(seq)) ** 2)))


@dataclass
class MembershipReport:
    member: bool
    violations: list = field(default_factory=list)


def validate_membership(obj, spec: SetSpec, aux=None, alpha=None) -> MembershipReport:
    """Check the defining inequalities of an admissible set on finite data.

    For B_Omega_ring ``aux`` is the operator-norm bound sup_x ||(I+R(x))^-1||.
    For P_QA ``alpha`` holds the weight numbers computed for the triple.
    """
    v = []
    if spec.on_triples:
        if not isinstance(obj, ProblemTriple):
            raise KindMismatch(f"{spec.kind} applies to problem triples")
        size = obj.q.l2_norm() + abs(obj.h) + abs(obj.H)
        if size > spec.Q * (1 + 1e-12):
            v.append(f"norm {size:.6g} exceeds Q={spec.Q}")
        if spec.kind == "P_QA":
            if alpha is None:
                raise InvalidArgument("P_QA needs the weight numbers of the triple")
            for n, a in enumerate(np.asarray(alpha), start=1):
                if abs(a) > spec.A:
                    v.append(f"|alpha| exceeds A at n={n}")
        return MembershipReport(not v, v)

    if not isinstance(obj, SpectralData):
        raise KindMismatch(f"{spec.kind} applies to spectral data")
    S = obj
    nrm = l21_norm(xi_sequence(S))
    if nrm > spec.Omega * (1 + 1e-12):
        v.append(f"l2^1 norm of xi {nrm:.6g} exceeds Omega={spec.Omega}")

    if spec.kind == "B_Omega_ring":
        omega = S.omega if S.omega is not None else estimate_omega(S.rho)[0]
        if abs(omega) > 1e-8:
            v.append(f"omega={omega:.3g} is not zero")
        if aux is None:
            raise InvalidArgument("B_Omega_ring needs the operator-norm bound (aux)")
        if not aux <= spec.K:
            v.append(f"inverse operator norm {aux:.6g} exceeds K={spec.K}")

    if spec.kind.startswith("V_"):
        delta = spec.delta if spec.delta is not None else 0.0
        real_tol = 1e-12
        for n in range(1, S.n_max + 1):
            if abs(S.rho[n - 1].imag) > real_tol * (1e2 + abs(S.rho[n - 1])):
                v.append(f"rho not real at n={n}")
        gaps = np.diff(S.rho.real)
        for n, g in enumerate(gaps, start=1):
            if g < delta:
                v.append(f"gap at n={n}")
        if spec.kind == "V_Omega_delta":
            for n, a in enumerate(S.alpha, start=1):
                if abs(a) < delta:
                    v.append(f"|alpha| below delta at n={n}")
            args = np.angle(S.alpha)
            spread = args.max() - args.min()
            if spread > np.pi - delta:
                v.append(f"argument spread {spread:.6g} exceeds pi-delta")
        else:
            tau = np.asarray(spec.tau, dtype=float)
            sign = 1.0 if spec.kind.endswith("plus") else -1.0
            for n, a in enumerate(S.alpha, start=1):
                if a.imag == 0 and a.real < 0:
                    continue  # exception set Z
                t = tau[n - 1] if n - 1 < tau.size else tau[-1]
                if sign * a.imag < t:
                    v.append(f"imaginary part condition fails at n={n}")
    return MembershipReport(not v, v)


# ---------------------------------------------------------------------------
# JSON


def _c2l(z):
    return [float(np.real(z)), float(np.imag(z))]


def _l2c(p, what):
    if (not isinstance(p, (list, tuple)) or len(p) != 2
            or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in p)):
        raise SchemaError(f"{what}: expected [re, im], got {p!r}")
    return complex(p[0], p[1])


def _arr(seq, what):
    if not isinstance(seq, list):
        raise SchemaError(f"{what}: expected a list of [re, im] pairs")
    return np.array([_l2c(p, f"{what}[{i}]") for i, p in enumerate(seq)], dtype=complex)


class SchemaError(SpecmapError, ValueError):
    pass


def spectral_to_json(S: SpectralData) -> dict:
    d = {"rho": [_c2l(z) for z in S.rho], "alpha": [_c2l(z) for z in S.alpha]}
    if S.omega is not None:
        d["omega"] = _c2l(S.omega)
    if S.index_set is not None:
        d["index_set"] = [int(i) for i in S.index_set]
        d["multiplicities"] = [int(m) for m in S.multiplicities]
    return d


def spectral_from_json(d: dict) -> SpectralData:
    if not isinstance(d, dict):
        raise SchemaError("spectral data must be a JSON object")
    for key in ("rho", "alpha"):
        if key not in d:
            raise SchemaError(f"missing key {key!r}")
    extra = set(d) - {"rho", "alpha", "omega", "index_set", "multiplicities"}
    if extra:
        raise SchemaError(f"unknown keys {sorted(extra)}")
    rho, alpha = _arr(d["rho"], "rho"), _arr(d["alpha"], "alpha")
    omega = _l2c(d["omega"], "omega") if "omega" in d else None
    try:
        return SpectralData(rho, alpha, d.get("index_set"), d.get("multiplicities"), omega)
    except SpecmapError as e:
        raise SchemaError(str(e)) from e


def triple_to_json(P: ProblemTriple) -> dict:
    return {"grid_nodes": P.M, "q": [_c2l(z) for z in P.q.values],
            "h": _c2l(P.h), "H": _c2l(P.H)}


def triple_from_json(d: dict) -> ProblemTriple:
    if not isinstance(d, dict):
        raise SchemaError("problem triple must be a JSON object")
    for key in ("grid_nodes", "q", "h", "H"):
        if key not in d:
            raise SchemaError(f"missing key {key!r}")
    M = d["grid_nodes"]
    if not isinstance(M, int) or M < 2:
        raise SchemaError("grid_nodes must be an integer >= 2")
    q = _arr(d["q"], "q")
    if q.size != M + 1:
        raise SchemaError(f"q must have grid_nodes+1 = {M + 1} entries, got {q.size}")
    try:
        return ProblemTriple(GridFunction(q), _l2c(d["h"], "h"), _l2c(d["H"], "H"))
    except SpecmapError as e:
        raise SchemaError(str(e)) from e


def dumps(obj: dict) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _dump(obj, 0) + "\n"


def _dump(o, depth):
    if isinstance(o, bool) or o is None:
        return json.dumps(o)
    if isinstance(o, (int, np.integer)):
        return str(int(o))
    if isinstance(o, (float, np.floating)):
        o = float(o)
        if not np.isfinite(o):
            return json.dumps(str(o))
        return format(o, ".17g") if o != int(o) or abs(o) >= 1e17 else format(o, ".1f")
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, dict):
        pad = "  " * (depth + 1)
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, depth + 1)}" for k, v in o.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * depth + "}"
    if isinstance(o, (list, tuple)):
        if all(isinstance(t, (int, float, np.integer, np.floating)) for t in o):
            return "[" + ", ".join(_dump(t, depth) for t in o) + "]"
        pad = "  " * (depth + 1)
        return "[\n" + ",\n".join(pad + _dump(t, depth + 1) for t in o) + "\n" + "  " * depth + "]"
    raise TypeError(f"cannot serialize {type(o)}")
