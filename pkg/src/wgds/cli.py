"""Command-line front end: ``wgds {solve,convergence,infsup-probe,colorability-check}``.

Settings come from built-in defaults, then an optional JSON ``--config`` file,
then explicit flags.  Exit status: 0 success, 2 configuration error, 3 solver
failure, 4 failed ``--check``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .mesh import MeshError, build_rect_mesh, check_colorable, read_wgmesh
from .solver import SolveOptions, SolverError
from .wgspace import STAB_LENGTHS, ParameterError, WgParams

log = logging.getLogger("wgds")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
STUDIES = ("solve", "convergence", "infsup-probe", "colorability-check")
THREADS_ENV = "WGDS_NUM_THREADS"
CHECK_RTOL = 0.02


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    study: str = "convergence"
    n_list: list = field(default_factory=lambda: [8, 16, 32, 64, 128])
    rho: list = field(default_factory=lambda: [1.0])
    alpha_s: int = 1
    alpha_d: int = 1
    beta: int = 1
    gamma_s: int = 0
    gamma_d: int = 0
    nu: float = 1.0
    kappa: object = 1.0
    mu: float = 1.0
    quad_exactness: int | None = None
    stab_length: str = "max_edge"
    boundary: str = "interpolant"
    error_mode: str = "auto"
    fit_from: int | None = None
    solver: str = "auto"
    tol: float = 1e-10
    max_iter: int = 500
    out: str | None = None
    format: str = "pretty"
    seed: int = 0
    mesh: str | None = None
    check: bool = False
    workers: int = 1

    def params(self, rho: float) -> WgParams:
        return WgParams(alpha_s=self.alpha_s, alpha_d=self.alpha_d, beta=self.beta,
                        gamma_s=self.gamma_s, gamma_d=self.gamma_d, rho_s=rho, rho_d=rho,
                        nu=self.nu, kappa=self.kappa, mu=self.mu,
                        cell_exactness=self.quad_exactness, edge_exactness=self.quad_exactness,
                        stab_length=self.stab_length)

    def validate(self) -> "RunConfig":
        problems = []
        if self.study not in STUDIES:
            problems.append(f"study must be one of {', '.join(STUDIES)}")
        if not self.n_list or any(int(n) != n or n < 1 for n in self.n_list):
            problems.append("n values must be positive integers")
        elif sorted(self.n_list) != list(self.n_list):
            problems.append("n values must be ascending")
        if not self.rho:
            problems.append("at least one rho is required")
        if self.format not in ("pretty", "csv", "json"):
            problems.append("format must be pretty, csv or json")
        if self.solver not in ("auto", "direct", "augmented", "iterative"):
            problems.append("solver must be auto, direct, augmented or iterative")
        if self.boundary not in ("interpolant", "projection"):
            problems.append("boundary must be interpolant or projection")
        if self.error_mode not in ("auto", "interpolant", "projection"):
            problems.append("error_mode must be auto, interpolant or projection")
        if self.stab_length not in STAB_LENGTHS:
            problems.append(f"stab_length must be one of {', '.join(STAB_LENGTHS)}")
        if not self.tol > 0:
            problems.append("tol must be positive")
        if self.quad_exactness is not None and self.quad_exactness < 1:
            problems.append("quad_exactness must be positive")
        if self.workers < 1:
            problems.append("workers must be at least 1")
        for rho in self.rho or [1.0]:
            try:
                self.params(rho)
            except ParameterError as exc:
                problems.append(str(exc))
            except (TypeError, ValueError) as exc:
                problems.append(f"invalid parameter value: {exc}")
        if problems:
            raise ConfigError("; ".join(dict.fromkeys(problems)))
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["kappa"], tuple):
            d["kappa"] = [list(r) for r in d["kappa"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        d = dict(d)
        if "n_list" in d:
            d["n_list"] = [int(v) for v in np.atleast_1d(d["n_list"])]
        if "rho" in d:
            d["rho"] = [float(v) for v in np.atleast_1d(d["rho"])]
        if isinstance(d.get("kappa"), list):
            d["kappa"] = tuple(tuple(float(v) for v in row) for row in d["kappa"])
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --- argument parsing --------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _kappa(text: str):
    vals = _float_list(text)
    if len(vals) == 1:
        return vals[0]
    if len(vals) == 4:
        return ((vals[0], vals[1]), (vals[2], vals[3]))
    raise argparse.ArgumentTypeError("kappa takes 1 value or 4 values (row-major 2x2)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wgds", description="Weak Galerkin Stokes-Darcy solver and convergence harness.")
    p.add_argument("--version", action="version", version=f"wgds {__version__}")
    sub = p.add_subparsers(dest="study", required=True, parser_class=_Parser)
    for name in STUDIES:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
        s.add_argument("--n", dest="n_list", type=_int_list, help="grid size(s), comma separated")
        s.add_argument("--n-list", dest="n_list", type=_int_list)
        s.add_argument("--rho", type=_float_list, help="stabilisation value(s), comma separated")
        s.add_argument("--alpha-s", type=int)
        s.add_argument("--alpha-d", type=int)
        s.add_argument("--beta", type=int)
        s.add_argument("--gamma-s", type=int)
        s.add_argument("--gamma-d", type=int)
        s.add_argument("--nu", type=float)
        s.add_argument("--kappa", type=_kappa)
        s.add_argument("--mu", type=float)
        s.add_argument("--quad-exactness", type=int)
        s.add_argument("--stab-length", choices=STAB_LENGTHS)
        s.add_argument("--boundary", choices=("interpolant", "projection"))
        s.add_argument("--error-mode", choices=("auto", "interpolant", "projection"))
        s.add_argument("--fit-from", type=int)
        s.add_argument("--solver", choices=("auto", "direct", "augmented", "iterative"))
        s.add_argument("--tol", type=float)
        s.add_argument("--max-iter", type=int)
        s.add_argument("--out", help="write the artifact here (format from --format)")
        s.add_argument("--format", choices=("pretty", "csv", "json"))
        s.add_argument("--seed", type=int)
        s.add_argument("--mesh", help=".wgmesh file replacing the rectangle grid")
        s.add_argument("--check", action="store_true", default=None,
                       help="compare with reference values; exit 4 on mismatch")
        s.add_argument("--workers", type=int)
        s.add_argument("-v", "--verbose", action="count", default=0)
    return p


STUDY_DEFAULTS = {
    "solve": {"n_list": [8]},
    "infsup-probe": {"n_list": [2, 4, 8]},
    "colorability-check": {"n_list": [8]},
}


def config_from_args(argv) -> tuple[RunConfig, argparse.Namespace]:
    ns = build_parser().parse_args(argv)
    base = {"study": ns.study, **STUDY_DEFAULTS.get(ns.study, {})}
    if ns.config:
        try:
            with open(ns.config) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {ns.config} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {ns.config} must hold a JSON object")
        loaded.pop("study", None)
        base.update(loaded)
    flags = {k: v for k, v in vars(ns).items()
             if k not in ("config", "verbose", "study") and v is not None}
    base.update(flags)
    if "workers" not in base and os.environ.get(THREADS_ENV):
        try:
            base["workers"] = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer")
    return RunConfig.from_dict(base).validate(), ns


# --- studies -----------------------------------------------------------------------

def _solver_opts(cfg: RunConfig) -> SolveOptions:
    return SolveOptions(mode=cfg.solver, tol=cfg.tol, max_iter=cfg.max_iter)


def _error_mode(cfg: RunConfig) -> str:
    if cfg.error_mode != "auto":
        return cfg.error_mode
    lowest = (cfg.alpha_s, cfg.alpha_d, cfg.beta, cfg.gamma_s, cfg.gamma_d) == (1, 1, 1, 0, 0)
    return "interpolant" if lowest and cfg.mesh is None else "projection"


def run_convergence(cfg: RunConfig) -> dict:
    from .mms import REFERENCE_FIT_FROM, convergence_study, run_mms

    mesh = _load_mesh(cfg) if cfg.mesh else None
    emode = _error_mode(cfg)
    boundary = cfg.boundary if emode == "interpolant" else "projection"
    studies = []
    for rho in cfg.rho:
        params = cfg.params(rho)
        fit_from = cfg.fit_from if cfg.fit_from is not None else REFERENCE_FIT_FROM.get(rho)
        if mesh is not None:
            rows, failures = [], {}
            try:
                rows.append(run_mms(0, params, boundary=boundary, error_mode=emode,
                                    solver=_solver_opts(cfg), mesh=mesh).errors)
            except SolverError as exc:
                failures[0] = repr(exc)
            from .mms import ConvergenceTable
            table = ConvergenceTable(rho, params, rows, failures, fit_from)
        else:
            table = convergence_study(cfg.n_list, params, fit_from=fit_from, workers=cfg.workers,
                                      boundary=boundary, error_mode=emode, solver=_solver_opts(cfg))
        studies.append(_table_dict(table))
    return {"kind": "errors", "error_mode": emode, "boundary": boundary, "studies": studies}


def _rates(v):
    return None if v is None else [float(x) for x in v]


def _table_dict(table) -> dict:
    rows = []
    for r in table.rows:
        info = r.info or {}
        rows.append({"n": r.n, "h": r.h, "errors": list(r.errors),
                     "residuals": info.get("residuals", {}),
                     "timings": info.get("timings", {}),
                     "n_velocity_free": info.get("n_velocity_free"),
                     "n_pressure": info.get("n_pressure")})
    return {"rho": table.rho, "params": table.params.to_dict(), "fit_from": table.fit_from,
            "rows": rows,
            "rates": {"lsq": _rates(table.rates_lsq), "endpoint": _rates(table.rates_endpoint),
                      "pairwise": None if table.rates_pairwise is None
                      else [[float(x) for x in row] for row in table.rates_pairwise]},
            "failures": {str(k): v for k, v in table.failures.items()}}


def run_infsup(cfg: RunConfig) -> dict:
    from .infsup import infsup_probe

    studies = []
    for rho in cfg.rho:
        res = infsup_probe(cfg.n_list, cfg.params(rho))
        studies.append({"rho": rho, "params": cfg.params(rho).to_dict(),
                        "rows": [{"n": r.n, "beta_h": r.beta, "n_pressure": r.n_pressure,
                                  "n_velocity_free": r.n_velocity_free} for r in res]})
    return {"kind": "infsup", "studies": studies}


def _load_mesh(cfg: RunConfig):
    try:
        return read_wgmesh(cfg.mesh)
    except OSError as exc:
        raise ConfigError(f"cannot read mesh {cfg.mesh}: {exc}") from exc


def run_colorability(cfg: RunConfig) -> dict:
    meshes = [(cfg.mesh, _load_mesh(cfg))] if cfg.mesh else \
        [(f"rect n={n}", build_rect_mesh(n)) for n in cfg.n_list]
    rows = []
    for name, mesh in meshes:
        ok, black, sweeps = check_colorable(mesh)
        rows.append({"mesh": name, "colorable": ok, "sweeps": sweeps,
                     "n_stokes_cells": len(mesh.stokes_cells()), "black_cells": sorted(black)})
    return {"kind": "colorability", "rows": rows}


# --- checks --------------------------------------------------------------------------

def check_result(result: dict) -> list[str]:
    """Human-readable failures against the reference tables / probe expectations."""
    from .mms import REFERENCE_TABLES

    fails = []
    kind = result["kind"]
    if kind == "errors":
        for st in result["studies"]:
            if st["failures"]:
                fails.append(f"rho={st['rho']}: failed rows {sorted(st['failures'])}")
            ref = REFERENCE_TABLES.get(st["rho"])
            if ref is None or result["error_mode"] != "interpolant":
                continue
            for row in st["rows"]:
                if row["n"] not in ref:
                    continue
                for j, (e, r) in enumerate(zip(row["errors"], ref[row["n"]])):
                    if abs(e - r) > CHECK_RTOL * abs(r):
                        fails.append(f"rho={st['rho']} n={row['n']} column {j + 1}: "
                                     f"{e:.5f} vs reference {r:.5f}")
    elif kind == "infsup":
        for st in result["studies"]:
            b = [r["beta_h"] for r in st["rows"]]
            if b and (min(b) <= 0 or b[0] / b[-1] >= 2.0):
                fails.append(f"rho={st['rho']}: inf-sup constants {b} drop by a factor >= 2")
    elif kind == "colorability":
        fails += [f"{r['mesh']}: not colorable" for r in result["rows"] if not r["colorable"]]
    return fails


# --- emission ----------------------------------------------------------------------

LABELS = ("||D_w e||_S", "||e_0||_S", "||e_p||_S", "||e_0||_D", "||e_p||_D")


def _fmt(x) -> str:
    return f"{x:.10g}"


def to_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    kind = result["kind"]
    if kind == "errors":
        w.writerow(["rho", "n", "h", "err1", "err2", "err3", "err4", "err5"])
        for st in result["studies"]:
            for row in st["rows"]:
                w.writerow([_fmt(st["rho"]), row["n"], _fmt(row["h"])] + [_fmt(e) for e in row["errors"]])
            if st["rates"]["lsq"] is not None:
                w.writerow([_fmt(st["rho"]), "rate", ""] + [_fmt(r) for r in st["rates"]["lsq"]])
    elif kind == "infsup":
        w.writerow(["rho", "n", "beta_h"])
        for st in result["studies"]:
            for row in st["rows"]:
                w.writerow([_fmt(st["rho"]), row["n"], _fmt(row["beta_h"])])
    else:
        w.writerow(["mesh", "colorable", "sweeps", "n_stokes_cells"])
        for row in result["rows"]:
            w.writerow([row["mesh"], int(row["colorable"]), row["sweeps"], row["n_stokes_cells"]])
    return buf.getvalue()


def to_pretty(result: dict) -> str:
    lines = []
    kind = result["kind"]
    if kind == "errors":
        for st in result["studies"]:
            fit = f", rates fitted from n={st['fit_from']}" if st["fit_from"] else ""
            lines.append(f"rho = {st['rho']:g} ({result['error_mode']} errors{fit})")
            lines.append(f"{'n':>5} | " + " | ".join(f"{lab:>12}" for lab in LABELS))
            lines.append("-" * (8 + 15 * len(LABELS)))
            for row in st["rows"]:
                lines.append(f"{row['n']:>5} | " + " | ".join(f"{e:>12.5f}" for e in row["errors"]))
            if st["rates"]["lsq"] is not None:
                lines.append(f"{'r':>5} | " + " | ".join(f"{r:>12.4f}" for r in st["rates"]["lsq"]))
            for n, msg in st["failures"].items():
                lines.append(f"  n={n} failed: {msg}")
            lines.append("")
    elif kind == "infsup":
        for st in result["studies"]:
            lines.append(f"rho = {st['rho']:g}")
            lines.append(f"{'n':>5} | {'beta_h':>10}")
            for row in st["rows"]:
                lines.append(f"{row['n']:>5} | {row['beta_h']:>10.6f}")
            lines.append("")
    else:
        for row in result["rows"]:
            status = "colorable" if row["colorable"] else "not colorable"
            lines.append(f"{row['mesh']}: {status} after {row['sweeps']} sweeps "
                         f"({row['n_stokes_cells']} Stokes cells)")
    return "\n".join(lines).rstrip() + "\n"


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items() if k not in ("timings", "run_info")}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def to_json(result: dict, cfg: RunConfig, timestamp: str | None = None, wall: float = 0.0) -> str:
    """Deterministic apart from the ``run_info`` block and per-row ``timings``."""
    doc = {"wgds_version": __version__, "config": cfg.to_dict(), "result": result,
           "run_info": {"timestamp": timestamp or time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                        "wall_time": wall}}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit(result: dict, cfg: RunConfig, stream=None, wall: float = 0.0) -> None:
    stream = stream or sys.stdout
    fmt = cfg.format
    text = {"csv": lambda: to_csv(result), "pretty": lambda: to_pretty(result),
            "json": lambda: to_json(result, cfg, wall=wall)}[fmt]()
    if cfg.out:
        try:
            with open(cfg.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {cfg.out}: {exc}") from exc
        stream.write(to_pretty(result))
    else:
        stream.write(text)


RUNNERS = {"solve": run_convergence, "convergence": run_convergence,
           "infsup-probe": run_infsup, "colorability-check": run_colorability}


def run(cfg: RunConfig, stream=None) -> int:
    t0 = time.perf_counter()
    result = RUNNERS[cfg.study](cfg)
    emit(result, cfg, stream, wall=time.perf_counter() - t0)
    if result["kind"] == "errors" and any(st["failures"] for st in result["studies"]):
        for st in result["studies"]:
            for n, msg in st["failures"].items():
                print(f"wgds: rho={st['rho']} n={n}: {msg}", file=sys.stderr)
        return EXIT_SOLVER
    if cfg.check:
        fails = check_result(result)
        for f in fails:
            print(f"check failed: {f}", file=sys.stderr)
        if fails:
            return EXIT_CHECK
        print("check passed", file=stream or sys.stdout)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg, ns = config_from_args(argv)
    except SystemExit as exc:  # argparse: usage errors (2), --help/--version (0)
        return int(exc.code or 0)
    except (ConfigError, ParameterError) as exc:
        print(f"wgds: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cfg)
    except (ConfigError, MeshError, ParameterError) as exc:
        print(f"wgds: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"wgds: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
