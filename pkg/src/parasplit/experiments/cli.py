"""Command-line entry point ``parasplit``.

Every subcommand resolves and validates its full configuration before any
computation, writes CSV/SVG artifacts into the output directory, and leaves
a ``manifest.json`` that can be fed back through ``--config`` (or the
``replay`` subcommand) to regenerate the same files.

Exit status: 0 success, 1 failed certification, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

from .. import analysis, backend, parallel
from ..errors import ConfigError, DivergenceError, SingularPivotError
from . import runners, svg
from .config import LAYOUT, ExperimentConfig

EXIT_OK, EXIT_CERT_FAIL, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3
MANIFEST = "manifest.json"
CSV_VERSION = "1"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


class Outputs:
    """Collects written files; timing-dependent ones are kept out of the
    reproducibility checksums."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.deterministic: dict[str, str] = {}
        self.timed: list[str] = []

    def write(self, name: str, text: str, timed: bool = False) -> Path:
        path = self.dir / name
        path.write_text(text)
        if timed:
            self.timed.append(name)
        else:
            self.deterministic[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def csv(self, name: str, header, rows, timed: bool = False) -> Path:
        return self.write(name, f"# parasplit csv v{CSV_VERSION}\n" + _csv_text(header, rows), timed)


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "mpmath"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    try:
        out["parasplit"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["parasplit"] = "unknown"
    out["kernels"] = backend.active_backend()
    return out


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    from fractions import Fraction
    try:
        return [float(Fraction(v.strip())) for v in str(text).split(",") if v.strip()]
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _strs(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

FLAG_FIELDS = {
    "preset": "preset", "h": "h", "pair": "pair", "splitting": "splitting", "q": "q",
    "beta": "beta", "coarse_q": "coarse_q", "coarse_beta": "coarse_beta", "nc": "Nc", "s": "s",
    "rule": "rule", "eps": "eps", "max_iterations": "max_iterations", "threads": "threads",
    "output": "output", "T": "T", "c": "c",
}

# subcommand -> {option: (parser, default)}
SUB_OPTIONS = {
    "solve": {},
    "error-curve": {},
    "s-sweep": {"s_values": (_ints, "2,4,10,20"), "pairs": (_strs, "FIE-FIE,FIE-DR")},
    "robustness": {"axis": (str, "beta"), "values": (_floats, "1/8,1/16,1/32,1/64"),
                   "pairs": (_strs, None), "splittings": (_strs, None)},
    "speedup": {"thread_counts": (_ints, "1,2,4,8"), "repeats": (int, "3"),
                "coarse_qs": (_ints, "2,4,8"), "desk_preset": (lambda v: str(v).lower() == "true", "true")},
    "certify": {"pairs": (_strs, "FIE-FIE,FIE-DR"), "Ms": (_ints, "2,3"),
                "points_m2": (int, "10000"), "points_m3": (int, "1000"),
                "s_values": (_ints, "1,2,10,20,1000")},
    "scan-region": {"pairs": (_strs, "FIE-FIE,FIE-DR"), "rects": (_strs, "small,large"),
                    "resolution": (int, "81"), "s_values": (_ints, "20,1000")},
    "fine-accuracy": {"scheme": (str, None)},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parasplit", description=(
        "Parareal with splitting propagators: experiments and convergence-factor checks."))
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config or a manifest.json from an earlier run")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set time.Nc=8")
        for flag, fld in FLAG_FIELDS.items():
            sec, key = LAYOUT[fld]
            sp.add_argument(f"--{flag.replace('_', '-')}", dest=f"cfg_{fld}", default=None,
                            help=f"override {sec}.{key}")

    for name, opts in SUB_OPTIONS.items():
        sp = sub.add_parser(name)
        common(sp)
        for opt, (_, default) in opts.items():
            sp.add_argument(f"--{opt.replace('_', '-')}", dest=opt, default=None,
                            help=f"default: {default}" if default is not None else None)
    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--output", default=None, help="directory for the regenerated files")
    return p


def _read_config_source(path: str | None) -> tuple[str | None, dict | None]:
    """Return ``(ini_text, manifest)`` for a ``--config`` argument."""
    if path is None:
        return None, None
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    if text.lstrip().startswith("{"):
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse manifest {p}: {exc}") from None
        if "config" not in manifest:
            raise ConfigError(f"{p} is JSON but not a parasplit manifest")
        return None, manifest
    return text, None


def resolve(args: argparse.Namespace) -> tuple[ExperimentConfig, dict]:
    """Merge defaults, config file, manifest, ``--set`` and flags, then
    validate everything."""
    ini, manifest = _read_config_source(args.config)
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for fld in LAYOUT:
        v = getattr(args, f"cfg_{fld}", None)
        if v is not None:
            overrides[fld] = v
    if manifest is not None:
        base = ExperimentConfig.from_dict(manifest["config"])
        raw = {k: _config_string(v) for k, v in base.to_dict().items()}
        raw.update({_field_name(k): v for k, v in overrides.items()})
        cfg = ExperimentConfig.from_strings(raw)
    elif ini is not None:
        cfg = ExperimentConfig.from_ini(ini, overrides)
        if not _sets_threads(ini) and "threads" not in {_field_name(k) for k in overrides}:
            cfg = cfg.replace(threads=parallel.thread_budget())
    else:
        if "threads" not in {_field_name(k) for k in overrides}:
            overrides["threads"] = str(parallel.thread_budget())
        cfg = ExperimentConfig.from_strings({_field_name(k): v for k, v in overrides.items()})

    opts = {}
    recorded = manifest.get("args", {}) if manifest and manifest.get("command") == args.command else {}
    for opt, (conv, default) in SUB_OPTIONS[args.command].items():
        raw_v = getattr(args, opt)
        if raw_v is None:
            raw_v = recorded.get(opt, default)
        opts[opt] = None if raw_v is None else raw_v
        if raw_v is not None:
            try:
                conv(raw_v)
            except (ValueError, TypeError):
                raise ConfigError(f"--{opt.replace('_', '-')}: cannot parse {raw_v!r}", opt) from None
    return cfg, opts


def _sets_threads(ini: str) -> bool:
    import configparser
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    cp.read_string(ini)
    return cp.has_option("run", "threads")


def _field_name(key: str) -> str:
    if key in LAYOUT:
        return key
    for name, (sec, k) in LAYOUT.items():
        if key == f"{sec}.{k}":
            return name
    raise ConfigError(f"unknown config key {key!r}", key)


def _config_string(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _opt(opts: dict, name: str, command: str):
    conv, _ = SUB_OPTIONS[command][name]
    v = opts.get(name)
    return None if v is None else conv(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(cfg, opts, out: Outputs) -> int:
    r = runners.run_solve(cfg)
    cols = ("iteration", "error_vs_fine", "increment_norm", "error_vs_exact")
    out.csv("history.csv", cols, [(h.iteration, h.error_vs_fine, h.increment_norm, h.error_vs_exact)
                                  for h in r.history])
    out.csv("timings.csv", ("iteration", "wall_seconds"),
            [(h.iteration, h.wall_seconds) for h in r.history], timed=True)
    out.write("history.svg", svg.line_plot(
        {"vs fine": ([h.iteration for h in r.history], [h.error_vs_fine for h in r.history]),
         "vs exact": ([h.iteration for h in r.history], [h.error_vs_exact for h in r.history])},
        title=f"{cfg.pair} ({cfg.splitting}), preset {cfg.preset}", xlabel="iteration k",
        ylabel="error", logy=True))
    state = "converged" if r.converged else "not converged"
    print(f"{cfg.pair} {cfg.splitting}: {r.iterations} iterations ({state}); "
          f"final error vs fine {r.history[-1].error_vs_fine:.3e}")
    return EXIT_OK


def cmd_error_curve(cfg, opts, out: Outputs) -> int:
    curves = runners.run_error_curve(cfg)
    out.csv("error_curve.csv", ("pair", "splitting", "k", "error_vs_fine"), runners.curve_rows(curves))
    out.csv("iterations.csv", ("pair", "splitting", "iterations", "converged"),
            [(c.pair, c.splitting, c.iterations, c.converged) for c in curves])
    out.write("error_curve.svg", svg.line_plot(
        {c.label: (range(len(c.errors)), c.errors) for c in curves},
        title=f"Error vs fine solution, preset {cfg.preset}", xlabel="iteration k",
        ylabel="error", logy=True))
    for c in curves:
        print(f"{c.label:22s} iterations to {cfg.eps:g}: {c.iterations}")
    return EXIT_OK


def cmd_s_sweep(cfg, opts, out: Outputs) -> int:
    s_values = _opt(opts, "s_values", "s-sweep")
    pairs = _opt(opts, "pairs", "s-sweep")
    curves = runners.run_s_sensitivity(cfg, s_values, pairs)
    out.csv("s_sweep.csv", ("pair", "s", "k", "error_vs_fine"),
            [(c.pair, c.s, k, e) for c in curves for k, e in enumerate(c.errors)])
    out.csv("s_iterations.csv", ("pair", "s", "iterations", "converged"),
            [(c.pair, c.s, c.iterations, c.converged) for c in curves])
    for pair in pairs:
        out.write(f"s_sweep_{pair}.svg", svg.line_plot(
            {f"s = {c.s}": (range(len(c.errors)), c.errors) for c in curves if c.pair == pair},
            title=f"{pair} ({cfg.splitting}), changing s", xlabel="iteration k",
            ylabel="error", logy=True))
    for c in curves:
        print(f"{c.pair} s={c.s}: {c.iterations} iterations")
    return EXIT_OK


def cmd_robustness(cfg, opts, out: Outputs) -> int:
    axis = opts["axis"]
    values = _opt(opts, "values", "robustness")
    pairs = _opt(opts, "pairs", "robustness")
    splittings = _opt(opts, "splittings", "robustness")
    if axis not in runners.AXES:
        raise ConfigError(f"--axis must be one of {runners.AXES}, got {axis!r}", "axis")
    for v in values:  # validate every point before running any
        try:
            runners._apply_axis(cfg, axis, v)
        except ValueError as exc:
            raise ConfigError(f"--values: {exc}", "values") from None
    rows = runners.run_robustness(cfg, axis, values, pairs, splittings)
    out.csv(f"robustness_{axis}.csv", (axis, "pair", "splitting", "iterations", "converged"),
            [(r.value, r.pair, r.splitting, r.iterations, r.converged) for r in rows])
    series: dict[str, tuple[list, list]] = {}
    for r in rows:
        xs, ys = series.setdefault(f"{r.pair} ({r.splitting})", ([], []))
        xs.append(r.value)
        ys.append(r.iterations)
    out.write(f"robustness_{axis}.svg", svg.line_plot(
        series, title=f"Iterations to {cfg.eps:g}, changing {axis}", xlabel=axis, ylabel="iterations"))
    for r in rows:
        print(f"{axis}={r.value:g} {r.pair} {r.splitting}: {r.iterations}")
    return EXIT_OK


def cmd_speedup(cfg, opts, out: Outputs) -> int:
    threads = _opt(opts, "thread_counts", "speedup")
    repeats = _opt(opts, "repeats", "speedup")
    coarse_qs = _opt(opts, "coarse_qs", "speedup")
    desk = _opt(opts, "desk_preset", "speedup")
    base = runners.speedup_config(cfg) if desk else cfg
    configs = [base.replace(coarse_q=q) for q in coarse_qs]
    rows, blocks = [], []
    for c in configs:
        rep = runners.run_speedup(c, threads, repeats)
        for r in rep.records:
            rows.append((c.coarse_geometry[0], r.threads, r.seconds, r.speedup))
        blocks.append((c.coarse_geometry[0], ";".join(map(str, rep.coarse_blocks)),
                       ";".join(map(str, rep.fine_blocks)), rep.iterations, rep.error_vs_exact))
        print(f"coarse q={c.coarse_geometry[0]}: blocks per coarse stage {rep.coarse_blocks}, "
              f"error after {rep.iterations} iterations {rep.error_vs_exact:.4e}")
        for r in rep.records:
            print(f"  threads={r.threads}: {r.seconds:.3f} s, S = {r.speedup:.3f}")
    print(f"logical CPUs available: {os.cpu_count()}")
    out.csv("speedup.csv", ("coarse_q", "threads", "seconds", "speedup"), rows, timed=True)
    out.csv("blocks.csv", ("coarse_q", "coarse_blocks_per_stage", "fine_blocks_per_stage",
                           "iterations", "error_vs_exact"), blocks)
    series = {}
    for q in coarse_qs:
        series[f"q = {q}"] = ([r[1] for r in rows if r[0] == q], [r[3] for r in rows if r[0] == q])
    out.write("speedup.svg", svg.line_plot(series, title="Speedup", xlabel="threads",
                                           ylabel="S"), timed=True)
    return EXIT_OK


def cmd_certify(cfg, opts, out: Outputs) -> int:
    pairs = _opt(opts, "pairs", "certify")
    Ms = _opt(opts, "Ms", "certify")
    s_values = _opt(opts, "s_values", "certify")
    for pair in pairs:
        if pair not in analysis.BOUNDS:
            raise ConfigError(f"--pairs: no proved bound for {pair!r}", "pairs")
    for M in Ms:
        if M not in (2, 3):
            raise ConfigError("--Ms: grid certification supports M = 2 and 3", "Ms")
    rows, ok = [], True
    with parallel.budget(cfg.threads):
        for pair in pairs:
            for M in Ms:
                n = _opt(opts, "points_m2" if M == 2 else "points_m3", "certify")
                res = analysis.certify_bound(pair, M, n, s_values)
                for line in res.lines():
                    print(line)
                ok &= res.passed
                for s in res.s_values:
                    rows.append((pair, M, n, s, res.max_k[s],
                                 ";".join(repr(v) for v in res.argmax[s]), res.bound, res.passed))
    out.csv("certify.csv", ("pair", "M", "points_per_axis", "s", "max_K", "argmax_z", "bound",
                            "passed"), rows)
    print("ALL PASS" if ok else "SOME FAILED")
    return EXIT_OK if ok else EXIT_CERT_FAIL


RECTS = {"small": analysis.SMALL_RECT, "large": analysis.LARGE_RECT}


def _rect(name: str):
    if name in RECTS:
        return name, RECTS[name]
    vals = _floats(name.replace(";", ","))
    if len(vals) != 4:
        raise ConfigError(f"--rects entries are 'small', 'large' or re0;re1;im0;im1, got {name!r}")
    return "custom", tuple(vals)


def cmd_scan_region(cfg, opts, out: Outputs) -> int:
    pairs = _opt(opts, "pairs", "scan-region")
    rects = [_rect(r) for r in _opt(opts, "rects", "scan-region")]
    res = _opt(opts, "resolution", "scan-region")
    s_values = _opt(opts, "s_values", "scan-region")
    for p in pairs:
        analysis.pair_schemes(p)
    if res < 2:
        raise ConfigError("--resolution must be at least 2", "resolution")
    with parallel.budget(cfg.threads):
        for pair in pairs:
            for s in s_values:
                z, K = analysis.real_axis_slice(pair, s=s)
                out.csv(f"real_axis_{pair}_s{s}.csv", ("re", "im", "K"),
                        [(float(a), 0.0, float(k)) for a, k in zip(z, K)])
            for rname, rect in rects:
                scans = [analysis.scan_region(pair, rect, res, s) for s in s_values]
                for sc in scans:
                    out.csv(f"scan_{pair}_{rname}_s{sc.s}.csv", ("re", "im", "K"), list(sc.rows()))
                    inside = float(sc.convergent.mean())
                    print(f"{pair} {rname} s={sc.s}: {100 * inside:.1f}% of cells with K < 1")
                top = scans[-1]
                out.write(f"scan_{pair}_{rname}.svg", svg.heatmap(
                    top.re, top.im, top.K, {f"K = 1, s = {sc.s}": sc.contour for sc in scans},
                    title=f"{pair}: K on z1 = z2 = z"))
    return EXIT_OK


def cmd_fine_accuracy(cfg, opts, out: Outputs) -> int:
    scheme = opts.get("scheme")
    err = runners.run_fine_accuracy(cfg, scheme)
    out.csv("fine_accuracy.csv", ("preset", "h", "dt", "splitting", "scheme", "error"),
            [(cfg.preset, cfg.h, cfg.dt, cfg.splitting,
              scheme or analysis.pair_schemes(cfg.pair)[1], err)])
    print(f"fine solution error vs exact: {err:.6e}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve, "error-curve": cmd_error_curve, "s-sweep": cmd_s_sweep,
    "robustness": cmd_robustness, "speedup": cmd_speedup, "certify": cmd_certify,
    "scan-region": cmd_scan_region, "fine-accuracy": cmd_fine_accuracy,
}


def _replay_args(parser, ns) -> argparse.Namespace:
    path = Path(ns.manifest)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
        command = manifest["command"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"not a parasplit manifest: {path} ({exc})") from None
    argv = [command, "--config", str(path)]
    if ns.output:
        argv += ["--output", ns.output]
    return parser.parse_args(argv)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            args = _replay_args(parser, args)
        cfg, opts = resolve(args)
        out = Outputs(Path(cfg.output))
        t0 = time.perf_counter()
        with parallel.budget(cfg.threads):
            status = COMMANDS[args.command](cfg, opts, out)
        elapsed = time.perf_counter() - t0
        manifest = {
            "command": args.command,
            "args": opts,
            "config": cfg.to_dict(),
            "config_ini": cfg.to_ini(),
            "versions": _versions(),
            "timings": {"total_seconds": elapsed},
            "outputs": out.deterministic,
            "timed_outputs": out.timed,
            "status": status,
        }
        (out.dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return status
    except ConfigError as exc:
        print(f"parasplit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SingularPivotError, FloatingPointError) as exc:
        print(f"parasplit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


def main() -> None:
    sys.exit(run())
