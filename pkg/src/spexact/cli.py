"""Command-line entry point: ``spexact {check,eigs,sweep,pseudo,daw,rate}``.

Experiments are either named (see ``EXPERIMENTS``) or read from a JSON config
file given by ``--config`` or the ``SPEXACT_CONFIG`` environment variable.
Exit codes: 0 success, 1 runtime error, 2 assumption check failed, 3 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InvalidParameter, SpexactError
from .io import atomic_write_text, format_float
from .matrix import PseudospectrumGrid, attouch_wets, discretize, eigs_in_rect, pseudospectrum
from .potentials import PotentialSpec, SampleBox, builtin, from_expressions, verify_assumptions
from .rect import Rect
from .separable import Geometry, ModeTable, cube_modes, radial_modes
from .shooting import BoundaryCondition, EigenRecord, find_eigenvalues, truncate
from .sweep import ProblemTemplate, SweepPlan, SweepResult, fit_rate, parse_sizes, sweep

EXIT_OK, EXIT_RUNTIME, EXIT_ASSUMPTION, EXIT_CONFIG = 0, 1, 2, 3


@dataclass
class Experiment:
    potential: str | dict
    case: str = "II"
    geometry: str = "line"  # line, cube, ball3d, annulus2d
    d: int = 3
    r_in: float | None = None
    bc: str = "dirichlet"
    s: float = 10.0
    sizes: str = "3:1:10"
    window: tuple = (0.0, 20.0, -2.0, 2.0)
    tol: float = 1e-10
    n: int = 800
    grid: tuple = (101, 61)
    eps: tuple = (0.1,)
    seed: int = 0
    outputs: list = field(default_factory=list)

    def spec(self) -> PotentialSpec:
        p = self.potential
        if isinstance(p, str):
            dim = {"ball3d": 3, "annulus2d": 2}.get(self.geometry)
            return builtin(p, dim)
        if not isinstance(p, dict) or "q0" not in p:
            raise ConfigError("potential must be a built-in name or an object with 'q0'")
        dim = int(p.get("dimension", {"ball3d": 3, "annulus2d": 2}.get(self.geometry, 1)))
        return from_expressions(p["q0"], p.get("u"), dim, p.get("delta"), p.get("name", "custom"))


EXPERIMENTS = {
    "ix3": Experiment("ix3", window=(0.0, 20.0, -2.0, 2.0), sizes="3:1:10"),
    "ix": Experiment("ix", window=(0.0, 10.0, -10.0, 10.0), sizes="6:0.25:10"),
    "ix3_minus_x2": Experiment("ix3_minus_x2", window=(0.0, 15.0, -5.0, 5.0), s=8.0, sizes="3:1:8"),
    "ix3_alpha": Experiment("ix3_alpha(0.5)", window=(0.0, 20.0, -10.0, 10.0), s=8.0, sizes="3:1:8"),
    "delta": Experiment("shifted_complex_harmonic_delta", case="I", window=(0.0, 10.0, -1.0, 6.0),
                        s=8.0, sizes="4:1:8"),
    "harmonic": Experiment("harmonic", case="I", window=(0.0, 10.0, -3.0, 3.0), s=8.0, sizes="4:1:8",
                           n=400, eps=(0.1, 0.01, 0.001)),
    "harmonic3d": Experiment("harmonic", case="I", geometry="cube", d=3, s=8.0,
                             window=(0.0, 8.0, -1.0, 1.0)),
    "harmonic_ball": Experiment("harmonic", case="I", geometry="ball3d", s=8.0,
                                window=(0.0, 8.0, -1.0, 1.0)),
    "exterior": Experiment("rotated_harmonic(1+3i)", case="I", geometry="annulus2d", r_in=1.0, s=10.0,
                           window=(0.0, 20.0, 0.0, 15.0), sizes="5:1:10"),
}


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def load_config(path: str) -> Experiment:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    base = raw.pop("experiment", None)
    exp = EXPERIMENTS[base] if base in EXPERIMENTS else Experiment(raw.pop("potential", "ix3"))
    known = set(Experiment.__dataclass_fields__)
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for key in ("window", "grid", "eps"):
        if key in raw and isinstance(raw[key], str):
            raw[key] = _floats(raw[key])
        if key in raw:
            raw[key] = tuple(raw[key])
    if "outputs" in raw:
        for out in raw["outputs"]:
            parent = os.path.dirname(os.path.abspath(out))
            if not os.access(parent, os.W_OK):
                raise ConfigError(f"output directory {parent} is not writable")
    return replace(exp, **raw)


def resolve(args) -> Experiment:
    name = getattr(args, "experiment", None)
    cfg = getattr(args, "config", None) or os.environ.get("SPEXACT_CONFIG")
    if name:
        if name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(sorted(EXPERIMENTS))}")
        exp = EXPERIMENTS[name]
    elif cfg:
        exp = load_config(cfg)
    else:
        raise ConfigError("give an experiment name or a config file (--config / SPEXACT_CONFIG)")
    over = {}
    for key in ("s", "bc", "sizes", "tol", "n", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    for key in ("window", "grid", "eps"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = _floats(v)
    if getattr(args, "out", None):
        over["outputs"] = [args.out]
    return replace(exp, **over)


def _bc(exp: Experiment) -> BoundaryCondition:
    try:
        return BoundaryCondition.parse(exp.bc)
    except (InvalidParameter, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _rect(exp: Experiment) -> Rect:
    if len(exp.window) != 4:
        raise ConfigError("window needs four numbers re_lo,re_hi,im_lo,im_hi")
    return Rect(*exp.window)


def _line_problem(exp: Experiment, s: float):
    bc = _bc(exp)
    return truncate(exp.spec(), s, left=bc, right=bc)


def _template(exp: Experiment) -> ProblemTemplate:
    if exp.geometry == "line":
        bc = _bc(exp)
        return ProblemTemplate(exp.spec(), left=bc, right=bc)
    if exp.geometry in ("ball3d", "annulus2d"):
        kind = "radial3d" if exp.geometry == "ball3d" else "radial2d"
        return ProblemTemplate(exp.spec(), kind=kind, right=_bc(exp), r_in=exp.r_in)
    raise ConfigError(f"geometry {exp.geometry!r} has no single-problem template")


def _emit(exp: Experiment, csv, json_text, fmt: str | None, out) -> None:
    """Write to every configured target in the format its extension names; stdout otherwise."""
    targets = exp.outputs or []
    if not targets:
        out.write(json_text() if fmt == "json" else csv)
    for path in targets:
        as_json = fmt == "json" if fmt else str(path).endswith(".json")
        atomic_write_text(path, json_text() if as_json else csv)


def _records_csv(records) -> str:
    rows = ["re,im,multiplicity,residual"]
    for r in records:
        rows.append(f"{format_float(r.lam.real)},{format_float(r.lam.imag)},{r.multiplicity},"
                    f"{format_float(r.residual)}")
    return "\n".join(rows) + "\n"


def _as_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_check(args, out) -> int:
    exp = resolve(args)
    spec = exp.spec()
    half = exp.s
    npts = {1: 801, 2: 81, 3: 25}[spec.dimension]
    report = verify_assumptions(spec, args.case or exp.case, SampleBox(-half, half, npts))
    out.write(_as_json(report.to_dict()))
    return EXIT_OK if report.passed else EXIT_ASSUMPTION


def eigs_result(exp: Experiment, backend: str = "shooting"):
    """Text payloads (csv, json-able dict) for ``eigs``."""
    rect = _rect(exp)
    if exp.geometry == "line":
        p = _line_problem(exp, exp.s)
        if backend == "matrix":
            A = discretize(p, exp.n)
            recs = [EigenRecord(z, m, float("nan"), exp.s) for z, m in eigs_in_rect(A, rect, seed=exp.seed)]
        else:
            recs = find_eigenvalues(p, rect, exp.tol)
        data = {"s": exp.s, "window": list(rect.as_tuple()), "backend": backend,
                "eigenvalues": [r.to_dict() for r in recs]}
        return _records_csv(recs), data
    geom = Geometry(exp.geometry, exp.s, exp.d, exp.r_in)
    if exp.geometry == "cube":
        table = cube_modes(geom, exp.spec(), rect, bc=_bc(exp), tol=exp.tol)
        levels = table.assembled()
        rows = ["re,im,multiplicity"] + [f"{format_float(z.real)},{format_float(z.imag)},{m}" for z, m in levels]
        data = table.to_dict()
        data["assembled"] = [{"re": z.real, "im": z.imag, "multiplicity": m} for z, m in levels]
        return "\n".join(rows) + "\n", data
    table = radial_modes(geom, exp.spec(), rect, bc=_bc(exp), tol=exp.tol)
    data = table.to_dict()
    data["assembled"] = [{"re": z.real, "im": z.imag, "multiplicity": m} for z, m in table.assembled()]
    return table.to_csv(), data


def cmd_eigs(args, out) -> int:
    exp = resolve(args)
    csv, data = eigs_result(exp, args.backend)
    _emit(exp, csv, lambda: _as_json(data), args.format, out)
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    exp = resolve(args)
    plan = SweepPlan(_template(exp), parse_sizes(exp.sizes), _rect(exp), tol=min(exp.tol, 1e-8))
    result = sweep(plan)
    _emit(exp, result.to_csv(), result.to_json, args.format, out)
    return EXIT_OK


def cmd_pseudo(args, out) -> int:
    exp = resolve(args)
    if exp.geometry == "cube":
        raise ConfigError("pseudospectra are computed for single (line or radial) problems")
    p = _template(exp).instantiate(exp.s)
    A = discretize(p, exp.n)
    nx, ny = (int(v) for v in exp.grid)
    grid = pseudospectrum(A, _rect(exp), nx, ny, exp.eps, seed=exp.seed)
    _emit(exp, grid.to_csv(), grid.to_json, args.format, out)
    return EXIT_OK


def _load_points(path: str, eps: float | None) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        raw = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if "smin" in raw:
        grid = PseudospectrumGrid.from_json(text)
        level = eps if eps is not None else grid.eps_levels[0]
        return grid.level_set(level)
    if "eigenvalues" in raw:
        return np.array([complex(e["re"], e["im"]) for e in raw["eigenvalues"]])
    raise ConfigError(f"{path} holds neither a pseudospectrum grid nor an eigenvalue list")


def cmd_daw(args, out) -> int:
    radii = _floats(args.radii)
    a = _load_points(args.file_a, args.eps)
    b = _load_points(args.file_b, args.eps)
    res = attouch_wets(a, b, radii)
    res["radii"] = list(radii)
    out.write(_as_json(res))
    return EXIT_OK


def cmd_rate(args, out) -> int:
    try:
        with open(args.sweep_file, encoding="utf-8") as fh:
            result = SweepResult.from_json(fh.read())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep file: {exc}") from None
    t = result.trajectory(args.trajectory)
    limit = None if args.limit is None else complex(args.limit.replace("i", "j"))
    fit = fit_rate(t, limit)
    payload = {"trajectory": t.id, "classification": t.classification, "fit": fit.to_dict()}
    out.write(_as_json(payload))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spexact", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment_args(p, sizes=False, grid=False):
        p.add_argument("experiment", nargs="?", help=f"one of {', '.join(sorted(EXPERIMENTS))}")
        p.add_argument("--config", help="JSON experiment file (default: $SPEXACT_CONFIG)")
        p.add_argument("--s", type=float, help="truncation size")
        p.add_argument("--bc", help="dirichlet, neumann or robin:<a>")
        p.add_argument("--window", help="re_lo,re_hi,im_lo,im_hi")
        p.add_argument("--tol", type=float)
        p.add_argument("--out", help="output path (.csv or .json); stdout when omitted")
        p.add_argument("--format", choices=("csv", "json"))
        if sizes:
            p.add_argument("--sizes", help="start:step:stop or a comma list")
        if grid:
            p.add_argument("--n", type=int, help="interior mesh points")
            p.add_argument("--grid", help="nx,ny")
            p.add_argument("--eps", help="comma-separated epsilon levels")
            p.add_argument("--seed", type=int)

    p = sub.add_parser("check", help="verify the assumption set on a sample grid")
    experiment_args(p)
    p.add_argument("--case", choices=("I", "II"))
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eigs", help="eigenvalues of one truncation in a window")
    experiment_args(p, grid=True)
    p.add_argument("--backend", choices=("shooting", "matrix"), default="shooting")
    p.set_defaults(func=cmd_eigs)

    p = sub.add_parser("sweep", help="eigenvalues over a range of sizes, tracked and classified")
    experiment_args(p, sizes=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pseudo", help="smallest-singular-value grid of the finite-difference matrix")
    experiment_args(p, grid=True)
    p.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("daw", help="Attouch-Wets surrogate between two point sets")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--radii", default="5,10,20")
    p.add_argument("--eps", type=float, help="level for pseudospectrum inputs (default: first level)")
    p.set_defaults(func=cmd_daw)

    p = sub.add_parser("rate", help="convergence-rate fit of one sweep trajectory")
    p.add_argument("sweep_file")
    p.add_argument("trajectory", type=int)
    p.add_argument("--limit", help="reference limit (default: last point)")
    p.set_defaults(func=cmd_rate)
    return ap


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except (ConfigError, InvalidParameter) as exc:
        code = EXIT_CONFIG
        payload = exc
    except SpexactError as exc:
        code = EXIT_RUNTIME
        payload = exc
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    err.write(json.dumps({"error": type(payload).__name__, "message": str(payload), "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
