"""Command-line front end.

Every command prints ``name,value`` CSV rows for the scalar results on
stdout and, with ``--report``, writes the full JSON report (sorted keys, so
identical inputs give byte-identical files).  Exit codes: 0 success,
1 usage or I/O, 2 malformed input, 3 domain error, 4 resolution error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus, dyadic, repro
from . import gridmap as gm
from .errors import MvTraceError, SchemaError
from .gridmap import GridMap
from .slab import SlabMap
from .trace import gradient_energy, trace_inequality_check

THREADS_ENV = "MVTRACE_THREADS"


class UsageError(MvTraceError):
    exit_code = 1


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 1
    report: str | None = None
    threads: int = 1

    def __post_init__(self):
        for key, val in self.params.items():
            if key in ("L", "h_fine") and val is not None and not val > 0:
                raise UsageError(f"{key} must be positive")
            if key in ("R", "schedule", "r") and val is not None:
                if any(not x > 0 for x in val):
                    raise UsageError(f"{key} entries must be positive")
                if key != "R" and any(b <= a for a, b in zip(val, val[1:])):
                    raise UsageError(f"{key} must be sorted increasingly")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def load_gridmap(path: str) -> GridMap:
    return GridMap.from_json(_read(path))


def load_slab(path: str) -> SlabMap:
    return SlabMap.from_json(_read(path))


def _write(path: str, text: str):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def flatten(obj, prefix="") -> list:
    """Scalar leaves of a nested report as (dotted name, value) rows."""
    rows = []
    if isinstance(obj, dict):
        for key in sorted(obj):
            rows += flatten(obj[key], f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(obj, (list, tuple)):
        for i, val in enumerate(obj):
            rows += flatten(val, f"{prefix}[{i}]")
    else:
        rows.append((prefix, obj))
    return rows


def emit(report: dict, cfg: RunConfig, out=None):
    out = out or sys.stdout
    clean = repro._clean(report)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["name", "value"])
    for name, val in flatten(clean):
        writer.writerow([name, repr(val) if isinstance(val, float) else val])
    if cfg.report:
        _write(cfg.report, repro.dumps(report) + "\n")


# -- commands ---------------------------------------------------------------


def cmd_energy(cfg: RunConfig) -> dict:
    u = load_gridmap(cfg.inputs["in"])
    b = u.tail if cfg.params.get("b") is None else np.asarray(cfg.params["b"], float)
    val = gm.integral_dist_to_point(u, b)
    return {"integral_dist": val.value, "quadrature": val.quadrature, "b": b.tolist(),
            "window_volume": u.window_volume}


def cmd_theta(cfg: RunConfig) -> dict:
    u = load_gridmap(cfg.inputs["in"])
    norm, s = cfg.params["norm"], cfg.params["s"]
    rows = [{"R": R, "theta": gm.theta(u, R, norm, s).value} for R in cfg.params["R"]]
    return {"norm": norm, "s": s, "theta": rows}


def cmd_bbm(cfg: RunConfig) -> dict:
    u = load_gridmap(cfg.inputs["in"])
    return gm.asymptotic_mean(u, cfg.params["schedule"], cfg.params["s"]).to_dict()


def _save_slab(res, cfg):
    if cfg.inputs.get("slab_out"):
        _write(cfg.inputs["slab_out"], json.dumps(res.slab.to_dict(), sort_keys=True))


def cmd_extend_strip(cfg: RunConfig) -> dict:
    u0 = load_gridmap(cfg.inputs["u0"])
    u1 = load_gridmap(cfg.inputs["u1"])
    p = cfg.params
    res = dyadic.strip_extension(u0, u1, p["L"], p["n_max"], p["h_fine"] or repro.h_fine_for(u0), p["s"])
    _save_slab(res, cfg)
    return res.report


def cmd_extend_cube(cfg: RunConfig) -> dict:
    bottom = load_gridmap(cfg.inputs["bottom"])
    top = load_gridmap(cfg.inputs["top"])
    p = cfg.params
    res = dyadic.cube_extension({"bottom": bottom, "top": top}, bottom.tail,
                                p["h_fine"] or repro.h_fine_for(bottom), p["n_max"], p["s"])
    _save_slab(res, cfg)
    return res.report


def cmd_extend_halfspace(cfg: RunConfig) -> dict:
    u = load_gridmap(cfg.inputs["in"])
    p = cfg.params
    res = dyadic.halfspace_extension(u, p["L"], p["n_max"], p["h_fine"] or repro.h_fine_for(u),
                                     p.get("schedule"), p["s"])
    _save_slab(res, cfg)
    return res.report


def cmd_trace_check(cfg: RunConfig) -> dict:
    U = load_slab(cfg.inputs["in"])
    u = load_gridmap(cfg.inputs["u"])
    rep = trace_inequality_check(U, u, cfg.params["r"], cfg.params["side"], cfg.params["s"])
    out = rep.to_dict()
    out["total_energy"] = gradient_energy(U)
    return out


def cmd_gen_corpus(cfg: RunConfig) -> dict:
    p = cfg.params
    families = corpus.FAMILIES if p["family"] == "all" else (p["family"],)
    out_dir = Path(cfg.inputs["out"])
    maps = corpus.generate_corpus(cfg.seed, families, d=p["d"], n=p["n"], manifold=p["manifold"],
                                  L=p["L"], n_bumps=p["n_bumps"])
    files = {}
    for fam, u in maps.items():
        path = out_dir / f"{fam}-d{p['d']}-seed{cfg.seed}.json"
        _write(str(path), u.to_json() + "\n")
        files[fam] = {"path": str(path), "non_tail_cells": int(np.count_nonzero(u.tail_distances() > 0))}
    return {"files": files}


def cmd_repro(cfg: RunConfig) -> dict:
    report = repro.run_all(cfg.seed, log=lambda msg: print(msg, file=sys.stderr))
    for key, val in sorted(report["criteria"].items(), key=lambda kv: int(kv[0])):
        print(f"criterion {key}: {'PASS' if val['pass'] else 'FAIL'} - {val['title']}", file=sys.stderr)
    return report


COMMANDS = {
    "energy": cmd_energy, "theta": cmd_theta, "bbm": cmd_bbm,
    "extend-strip": cmd_extend_strip, "extend-cube": cmd_extend_cube,
    "extend-halfspace": cmd_extend_halfspace, "trace-check": cmd_trace_check,
    "gen-corpus": cmd_gen_corpus, "repro": cmd_repro,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvtrace", description="Nonlocal energies, traces and extensions of manifold-valued maps.")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads for numpy kernels (default: ${THREADS_ENV} or 1)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, seed=False):
        p.add_argument("--report", help="write the JSON report here")
        p.add_argument("--s", type=int, default=1, help="supersampling factor")
        if seed:
            p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("energy", help="integral of dist(u, b), b = tail by default")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--b", type=_floats)
    common(p)
    p = sub.add_parser("theta", help="normalized nonlocal energy")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--R", type=_floats, required=True)
    p.add_argument("--norm", choices=("euclidean", "sup"), default="euclidean")
    common(p)
    p = sub.add_parser("bbm", help="asymptotic mean b_* and the BBM diagnostics")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--schedule", type=_floats, required=True)
    common(p)
    p.set_defaults(s=2)
    for name, inputs in (("extend-strip", ("u0", "u1")), ("extend-cube", ("bottom", "top")),
                         ("extend-halfspace", ("in",))):
        p = sub.add_parser(name)
        for key in inputs:
            p.add_argument(f"--{key}", dest="inp" if key == "in" else key, required=True)
        p.add_argument("--L", type=float, default=1.0)
        p.add_argument("--n-max", type=int, default=8)
        p.add_argument("--h-fine", type=float, default=None, help="slab spacing (default: coarsest admissible)")
        p.add_argument("--slab-out", help="write the sampled slab map here")
        if name == "extend-halfspace":
            p.add_argument("--schedule", type=_floats, help="R schedule for b_*")
        common(p)
    p = sub.add_parser("trace-check", help="trace inequality left sides against the slab energy")
    p.add_argument("--in", dest="inp", required=True, help="slab map JSON")
    p.add_argument("--u", required=True, help="boundary data GridMap JSON")
    p.add_argument("--r", type=_floats, required=True)
    p.add_argument("--side", choices=("bottom", "top"), default="bottom")
    common(p)
    p = sub.add_parser("gen-corpus", help="write seeded fixture maps")
    p.add_argument("--family", choices=corpus.FAMILIES + ("all",), default="all")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--manifold", default="sphere:3")
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--n-bumps", type=int, default=3)
    common(p, seed=True)
    p = sub.add_parser("repro", help="run the acceptance suite")
    common(p, seed=True)
    return parser


def make_config(args) -> RunConfig:
    inputs, params = {}, {"s": getattr(args, "s", 1)}
    for key in ("inp", "u0", "u1", "bottom", "top", "u", "out", "slab_out"):
        if getattr(args, key, None) is not None:
            inputs["in" if key == "inp" else key] = getattr(args, key)
    for key in ("b", "R", "norm", "schedule", "L", "n_max", "h_fine", "r", "side", "family", "d", "n",
                "manifold", "n_bumps"):
        if hasattr(args, key):
            params[key] = getattr(args, key)
    threads = args.threads if args.threads is not None else int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    return RunConfig(args.command, inputs, params, getattr(args, "seed", 1), args.report, threads)


def _set_threads(n: int):
    # exported for BLAS pools and child processes; the energy sums are
    # ordered reductions, so results never depend on the thread count
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def run(cfg: RunConfig, out=None) -> int:
    _set_threads(cfg.threads)
    report = COMMANDS[cfg.command](cfg)
    report = {"command": cfg.command, "inputs": cfg.inputs, "params": cfg.params, "seed": cfg.seed,
              "result": report}
    emit(report, cfg, out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing command; see --help")
        return run(make_config(args))
    except MvTraceError as exc:
        print(f"mvtrace: error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except json.JSONDecodeError as exc:  # pragma: no cover - loaders wrap this already
        print(f"mvtrace: error[SchemaError]: {exc}", file=sys.stderr)
        return SchemaError.exit_code


if __name__ == "__main__":
    sys.exit(main())
