"""Command-line front end.

    specmap forward        triple.json   -> spectral data (+ Cauchy data, CSV plot data)
    specmap inverse        spectral.json -> reconstruction report
    specmap inverse-cauchy cauchy.json   -> reconstruction report
    specmap roundtrip      triple.json   -> error summary
    specmap stability      triple.json | spectral.json -> sweep report (JSON + CSV)
    specmap validate       triple.json | spectral.json --set set.json -> membership report

Exit status: 0 success, 1 bad input (schema, arguments), 2 validation failure,
3 numerical failure (singular system, certification).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .direct import cauchy_data, cauchy_from_json, cauchy_to_json, forward
from .inverse_contour import inverse_from_cauchy, inverse_solve_multiple
from .inverse_simple import (
    InverseConfig, epsilon_and_reconstruct, operator_norm_profile, report_to_json,
)
from .spectral_core import (
    InvalidArgument, KindMismatch, SchemaError, SetSpec, SpecmapError, _c2l, dumps, grid,
    spectral_from_json, spectral_to_json, triple_from_json, validate_membership,
)
from .stability import PerturbationScheme, SCHEMES, SweepConfig, lipschitz_sweep

EXIT_OK, EXIT_INPUT, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("forward", "inverse", "inverse-cauchy", "roundtrip", "stability", "validate")


@dataclass
class RunConfig:
    command: str
    input: Path
    output: Optional[Path] = None
    n_modes: int = 30
    grid_nodes: Optional[int] = None
    n_trunc: int = 30
    contour_index: Optional[int] = None
    contour_nodes: int = 64
    fourier_modes: Optional[int] = None
    tolerance: float = 5e-2
    seed: int = 0
    with_derivative: bool = True
    explicit_inverse_norm: bool = False
    scheme: str = "gaussian_tail"
    magnitudes: List[float] = field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2])
    n_seeds: int = 5
    set_path: Optional[Path] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidArgument(f"unknown command {self.command!r}")
        for name in ("n_modes", "n_trunc", "contour_nodes", "n_seeds"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        for name in ("grid_nodes", "contour_index", "fourier_modes"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if not self.tolerance > 0:
            raise InvalidArgument("tolerance must be positive")
        if self.seed < 0:
            raise InvalidArgument("seed must be nonnegative")
        if any(not m > 0 for m in self.magnitudes):
            raise InvalidArgument("magnitudes must be positive")
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"unknown scheme {self.scheme!r}")
        paths = [p for p in (self.input, self.output, self.set_path) if p is not None]
        if len({os.path.abspath(p) for p in paths}) != len(paths):
            raise InvalidArgument("input, output and set paths must be distinct")

    def inverse_config(self, default_grid: int = 1024) -> InverseConfig:
        return InverseConfig(n_trunc=self.n_trunc, grid_nodes=self.grid_nodes or default_grid,
                             with_derivative=self.with_derivative,
                             explicit_inverse_norm=self.explicit_inverse_norm,
                             contour_index=self.contour_index, contour_nodes=self.contour_nodes)


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1); 2 is reserved for validation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specmap", description="Direct and inverse spectral problems "
                "for -y'' + q y = lambda y, y'(0) - h y(0) = y'(pi) + H y(pi) = 0.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", "-i", type=Path, required=True)
    p.add_argument("--output", "-o", type=Path, help="JSON output (stdout when omitted)")
    p.add_argument("--n-modes", type=int, default=30, help="eigenvalues computed by forward")
    p.add_argument("--grid-nodes", type=int, help="x-grid intervals of the reconstruction")
    p.add_argument("--n-trunc", type=int, default=30)
    p.add_argument("--contour-index", type=int)
    p.add_argument("--contour-nodes", type=int, default=64)
    p.add_argument("--fourier-modes", type=int,
                   help="Cauchy-data modes (default min(64, M/8) for a triple on M intervals)")
    p.add_argument("--tolerance", type=float, default=5e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-derivative", action=argparse.BooleanOptionalAction, default=True,
                   help="solve the differentiated system for eps' (else finite differences)")
    p.add_argument("--explicit-inverse-norm", action="store_true")
    p.add_argument("--scheme", choices=SCHEMES, default="gaussian_tail")
    p.add_argument("--magnitudes", default="1e-3,3e-3,1e-2,3e-2")
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--set", dest="set_path", type=Path, help="set description (JSON)")
    return p


def config_from_args(argv=None) -> RunConfig:
    a = build_parser().parse_args(argv)
    try:
        mags = [float(t) for t in a.magnitudes.split(",") if t.strip()]
    except ValueError:
        raise InvalidArgument(f"bad --magnitudes {a.magnitudes!r}") from None
    return RunConfig(command=a.command, input=a.input, output=a.output, n_modes=a.n_modes,
                     grid_nodes=a.grid_nodes, n_trunc=a.n_trunc, contour_index=a.contour_index,
                     contour_nodes=a.contour_nodes, fourier_modes=a.fourier_modes,
                     tolerance=a.tolerance, seed=a.seed, with_derivative=a.with_derivative,
                     explicit_inverse_norm=a.explicit_inverse_norm, scheme=a.scheme,
                     magnitudes=mags, n_seeds=a.n_seeds, set_path=a.set_path)


# ---------------------------------------------------------------------------
# file I/O


def read_json(path: Path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise SchemaError(f"{path}: cannot read ({e.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def _load(path: Path, loader):
    try:
        return loader(read_json(path))
    except SchemaError as e:
        msg = str(e)
        raise SchemaError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None


def load_any(path: Path):
    """Spectral data or a problem triple, told apart by their keys."""
    d = read_json(path)
    if isinstance(d, dict) and "q" in d:
        return _load(path, lambda _: triple_from_json(d))
    return _load(path, lambda _: spectral_from_json(d))


def set_from_json(d) -> SetSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise SchemaError("set description needs a 'kind'")
    extra = set(d) - {"kind", "Omega", "delta", "tau", "Q", "A", "K"}
    if extra:
        raise SchemaError(f"unknown keys {sorted(extra)}")
    try:
        return SetSpec(**d)
    except (SpecmapError, TypeError) as e:
        raise SchemaError(str(e)) from None


def write_text(path: Optional[Path], text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def sibling(path: Optional[Path], suffix: str) -> Optional[Path]:
    return None if path is None else path.with_name(path.stem + suffix)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (str, int)) else format(float(v), ".17g") for v in r])
    return buf.getvalue()


def _q_csv(result) -> str:
    q = result.q
    return _csv(["x", "q_re", "q_im"], zip(q.x, q.values.real, q.values.imag))


# ---------------------------------------------------------------------------
# commands


def reconstruct(S, cfg: RunConfig, default_grid: int = 1024):
    icfg = cfg.inverse_config(default_grid)
    if S.is_simple and cfg.contour_index is None:
        return epsilon_and_reconstruct(S, icfg)
    return inverse_solve_multiple(S, icfg)


def cmd_forward(cfg: RunConfig) -> int:
    P = _load(cfg.input, triple_from_json)
    S = forward(P, cfg.n_modes)
    C = cauchy_data(P, cfg.fourier_modes or min(64, P.M // 8), cfg.grid_nodes)
    write_text(cfg.output, dumps(spectral_to_json(S)))
    if cfg.output is not None:
        write_text(sibling(cfg.output, ".cauchy.json"), dumps(cauchy_to_json(C)))
        n = np.arange(1, S.n_max + 1)
        write_text(sibling(cfg.output, ".csv"), _csv(
            ["n", "rho_re", "rho_im", "alpha_re", "alpha_im"],
            zip(n, S.rho.real, S.rho.imag, S.alpha.real, S.alpha.imag)))
    return EXIT_OK


def cmd_inverse(cfg: RunConfig) -> int:
    S = _load(cfg.input, spectral_from_json)
    r = reconstruct(S, cfg)
    write_text(cfg.output, dumps(report_to_json(r)))
    if cfg.output is not None:
        write_text(sibling(cfg.output, ".csv"), _q_csv(r))
    return EXIT_OK


def cmd_inverse_cauchy(cfg: RunConfig) -> int:
    C = _load(cfg.input, cauchy_from_json)
    r = inverse_from_cauchy(C, cfg.inverse_config(512))
    write_text(cfg.output, dumps(report_to_json(r)))
    if cfg.output is not None:
        write_text(sibling(cfg.output, ".csv"), _q_csv(r))
    return EXIT_OK


def cmd_roundtrip(cfg: RunConfig) -> int:
    P = _load(cfg.input, triple_from_json)
    S = forward(P, max(cfg.n_modes, cfg.n_trunc))
    r = reconstruct(S, cfg)
    qv = r.q.values
    ref = np.interp(r.q.x, P.q.x, P.q.values.real) + 1j * np.interp(r.q.x, P.q.x, P.q.values.imag)
    q_err = r.error_to(ref, r.h, r.H)
    total = r.error_to(ref, P.h, P.H)
    summary = {"error": total, "q_l2_error": q_err, "h_error": float(abs(r.h - P.h)),
               "H_error": float(abs(r.H - P.H)), "tolerance": cfg.tolerance,
               "passed": bool(total <= cfg.tolerance), "n_trunc": cfg.n_trunc,
               "grid_nodes": r.q.M, "h": _c2l(r.h), "H": _c2l(r.H),
               "inv_norm": float(r.diagnostics.get("inv_norm", 0.0)),
               "q_max_abs": float(np.max(np.abs(qv)))}
    write_text(cfg.output, dumps(summary))
    if cfg.output is not None:
        write_text(sibling(cfg.output, ".csv"), _csv(
            ["x", "q_re", "q_im", "q_ref_re", "q_ref_im"],
            zip(r.q.x, qv.real, qv.imag, ref.real, ref.imag)))
    return EXIT_OK if summary["passed"] else EXIT_INVALID


def cmd_stability(cfg: RunConfig) -> int:
    base = load_any(cfg.input)
    sets = [_load(cfg.set_path, set_from_json)] if cfg.set_path else []
    scfg = SweepConfig(n_trunc=cfg.n_trunc, grid_nodes=cfg.grid_nodes or 512,
                       contour_index=cfg.contour_index, contour_nodes=cfg.contour_nodes,
                       seeds=tuple(range(cfg.seed, cfg.seed + cfg.n_seeds)), sets=sets)
    scheme = PerturbationScheme(cfg.scheme, 0.0, cfg.seed)
    rep = lipschitz_sweep(base, scheme, cfg.magnitudes, scfg)
    write_text(cfg.output, dumps(rep.to_json()))
    if cfg.output is not None:
        write_text(sibling(cfg.output, ".csv"), rep.to_csv())
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    if cfg.set_path is None:
        raise InvalidArgument("validate needs --set")
    obj = load_any(cfg.input)
    spec = _load(cfg.set_path, set_from_json)
    aux = None
    if spec.kind == "B_Omega_ring" and not spec.on_triples:
        aux = operator_norm_profile(obj, min(cfg.n_trunc, obj.n_max), grid(cfg.grid_nodes or 64))
    rep = validate_membership(obj, spec, aux=aux)
    out = {"member": rep.member, "violations": list(rep.violations), "set": spec.kind}
    if aux is not None:
        out["inverse_operator_norm"] = float(aux)
    write_text(cfg.output, dumps(out))
    return EXIT_OK if rep.member else EXIT_INVALID


HANDLERS = {"forward": cmd_forward, "inverse": cmd_inverse, "inverse-cauchy": cmd_inverse_cauchy,
            "roundtrip": cmd_roundtrip, "stability": cmd_stability, "validate": cmd_validate}


def run(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except SystemExit as e:      # argparse: --help or a usage error
        return int(e.code or 0)
    except InvalidArgument as e:
        print(f"specmap: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return run(cfg)
    except (SchemaError, InvalidArgument, KindMismatch) as e:
        print(f"specmap: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SpecmapError as e:
        print(f"specmap: numerical failure ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
