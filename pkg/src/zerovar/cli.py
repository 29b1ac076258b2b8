"""Command-line entry points: ``zerovar constants|dnr|moments|kostlan|limit-check|replay``.

Every command that writes CSVs also writes ``<command>.manifest.json`` next to them.
Exit codes: 0 ok, 2 numerical non-convergence (or replay mismatch), 64 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .constants import REPORT_COLUMNS, QuadratureConfig, positivity_report, report_row
from .geometry import DimPair, all_pairs
from .jacobian import decorrelated_moment, moment_curve, small_t_moment_limit
from .kostlan import kac_rice_variance_1d, second_chaos_variance
from .limit_model import identity_suite
from .stats import RngStream
from .zeros import ZERO_COLUMNS, crofton_length_stats, empirical_root_stats, zero_row

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_USAGE = 64

SEED_ENV = "ZEROVAR_SEED"
# arguments that never change results and stay out of the config hash
_VOLATILE = {"out", "threads", "config", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- output helpers

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclasses.dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    sample_budgets: dict
    started: str
    finished: str
    outputs: dict  # file name -> sha256
    tool_version: str
    args: dict

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _stable_args(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}


def config_hash(args) -> str:
    return sha256(json.dumps(_stable_args(args), sort_keys=True).encode())


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


class Outputs:
    """Collects CSV/JSON payloads and writes them with a manifest."""

    def __init__(self, args, command: str, budgets: dict):
        self.args = args
        self.command = command
        self.budgets = budgets
        self.files: dict[str, bytes] = {}
        self.started = _now()

    def add(self, name: str, data: bytes) -> None:
        self.files[name] = data

    def finish(self) -> Path:
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in self.files.items():
            (out / name).write_bytes(data)
        man = RunManifest(
            command=self.command, config_hash=config_hash(self.args), seed=int(self.args.seed),
            sample_budgets=self.budgets, started=self.started, finished=_now(),
            outputs={k: sha256(v) for k, v in self.files.items()}, tool_version=__version__,
            args=_stable_args(self.args),
        )
        path = out / f"{self.command.replace(' ', '-')}.manifest.json"
        man.write(path)
        return path


# ---------------------------------------------------------------- grids

def parse_grid(text: str) -> np.ndarray:
    """'log:a:b:N', 'lin:a:b:N' or a comma-separated list."""
    try:
        if text.startswith(("log:", "lin:")):
            kind, a, b, m = text.split(":")
            a, b, m = float(a), float(b), int(m)
            if m < 1 or (kind == "log" and not 0 < a < b) or (kind == "lin" and not a < b):
                raise ValueError
            return np.geomspace(a, b, m) if kind == "log" else np.linspace(a, b, m)
        vals = np.array([float(x) for x in text.split(",") if x.strip()])
        if vals.size == 0:
            raise ValueError
        return vals
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use log:a:b:N, lin:a:b:N or a comma list") from None


def _positive(name, value):
    if value is None or value <= 0:
        raise UsageError(f"--{name} must be positive")


# ---------------------------------------------------------------- commands

def cmd_constants(args) -> int:
    _positive("n-max", args.n_max)
    _positive("samples-per-node", args.samples_per_node)
    try:
        cfg = QuadratureConfig(t_min=args.t_min, t_max=args.t_max, nodes_per_panel=args.nodes_per_panel,
                               panels=args.panels, mc_samples_per_node=args.samples_per_node)
    except ValueError as e:
        raise UsageError(str(e)) from None
    reports = positivity_report(args.n_max, cfg, args.seed, args.threads)
    out = Outputs(args, "constants", {"mc_samples_per_node": args.samples_per_node,
                                      "nodes_per_panel": args.nodes_per_panel})
    out.add("constants.csv", csv_bytes(REPORT_COLUMNS, [report_row(r) for r in reports]))
    out.finish()
    for r in reports:
        print(f"n={r.pair.n} r={r.pair.r} c={r.leading_constant:.5f} +- {r.leading_constant_err:.5f} "
              f"lb={r.lower_bound:.5f} positive={r.positive} converged={r.converged}")
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NONCONVERGED


def cmd_dnr(args) -> int:
    try:
        pair = DimPair(args.n, args.r)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _positive("samples", args.samples)
    ts = parse_grid(args.t_grid)
    if np.any(ts <= 0):
        raise UsageError("t values must be positive")
    est = moment_curve(ts, pair, args.samples, RngStream(args.seed, 1000 * pair.n + pair.r), threads=args.threads)
    c = decorrelated_moment(pair)
    rows = []
    for e in est:
        scale = (-math.expm1(-e.t)) ** (-0.5 * pair.r)
        rows.append([e.t, e.mean, e.stderr, e.mean * scale - c, e.stderr * scale])
    out = Outputs(args, "dnr", {"samples": args.samples})
    out.add("dnr.csv", csv_bytes(("t", "E_odet_pair", "stderr", "Dnr", "Dnr_stderr"), rows))
    out.finish()
    return EXIT_OK


def cmd_moments(args) -> int:
    _positive("n-max", args.n_max)
    _positive("samples", args.samples)
    ts = parse_grid(args.t_grid)
    rows = []
    for pair in all_pairs(args.n_max):
        est = moment_curve(ts, pair, args.samples, RngStream(args.seed, 1000 * pair.n + pair.r),
                           threads=args.threads)
        small = small_t_moment_limit(pair) if pair.r < pair.n else None
        for e in est:
            rows.append([pair.n, pair.r, e.t, e.mean, e.stderr, decorrelated_moment(pair),
                         math.nan if small is None else small])
    out = Outputs(args, "moments", {"samples": args.samples})
    out.add("moments.csv", csv_bytes(("n", "r", "t", "mean", "stderr", "large_t_limit", "small_t_limit"), rows))
    out.finish()
    return EXIT_OK


CHAOS_COLUMNS = ("d", "n", "r", "J", "var2", "normalized_var2", "limit", "rel_err")


def cmd_kostlan_chaos(args) -> int:
    try:
        pair = DimPair(args.n, args.r)
    except ValueError as e:
        raise UsageError(str(e)) from None
    rows = []
    for d in parse_grid(args.d):
        try:
            v = second_chaos_variance(float(d), pair)
        except ValueError as e:
            raise UsageError(str(e)) from None
        rows.append([float(d), pair.n, pair.r, v.J, v.var2, v.normalized, v.limit, v.rel_err])
        print(f"d={d:g} normalized={v.normalized:.8g} limit={v.limit:.8g} rel_err={v.rel_err:.3e}")
    out = Outputs(args, "kostlan chaos", {})
    out.add("kostlan_chaos.csv", csv_bytes(CHAOS_COLUMNS, rows))
    out.finish()
    return EXIT_OK


def _simulate(args, d, samples):
    return empirical_root_stats(d, samples, RngStream(args.seed, 7), threads=args.threads, histogram=True)


def cmd_kostlan_simulate(args) -> int:
    _positive("d", args.d)
    _positive("samples", args.samples)
    st, hist = _simulate(args, args.d, args.samples)
    out = Outputs(args, "kostlan simulate", {"samples": args.samples})
    out.add("kostlan_simulate.csv", csv_bytes(ZERO_COLUMNS, [zero_row(st)]))
    if args.histogram:
        out.add("kostlan_simulate_hist.json",
                (json.dumps({"d": args.d, "counts": [int(c) for c in hist]}) + "\n").encode())
    out.finish()
    print(f"d={st.d} mean={st.mean:.6f} +- {st.mean_ci:.6f} var={st.var:.6f} +- {st.var_ci:.6f} "
          f"var/sqrt(d)={st.var_over_sqrt_d:.6f}")
    return EXIT_OK


KR_COLUMNS = ("d", "variance", "stderr", "quad_delta", "integral", "samples_per_node", "seed")
COMPARE_COLUMNS = ("d", "kacrice_var", "kacrice_stderr", "simulated_var", "simulated_var_ci", "rel_diff")


def cmd_kostlan_kacrice(args) -> int:
    _positive("d", args.d)
    _positive("samples-per-node", args.samples_per_node)
    kr = kac_rice_variance_1d(args.d, args.samples_per_node, RngStream(args.seed, 11),
                              nodes_per_panel=args.nodes_per_panel, threads=args.threads)
    out = Outputs(args, "kostlan kacrice", {"samples_per_node": args.samples_per_node,
                                            "compare_samples": args.compare_samples})
    out.add("kostlan_kacrice.csv", csv_bytes(KR_COLUMNS, [[args.d, kr.variance, kr.stderr, kr.quad_delta,
                                                           kr.integral, kr.samples, args.seed]]))
    print(f"d={args.d} kac-rice variance={kr.variance:.6f} +- {kr.stderr:.6f} (quad delta {kr.quad_delta:.2e})")
    if args.compare_samples:
        st, _ = _simulate(args, args.d, args.compare_samples)
        rel = abs(kr.variance - st.var) / st.var
        out.add("kostlan_compare.csv", csv_bytes(COMPARE_COLUMNS, [[args.d, kr.variance, kr.stderr,
                                                                    st.var, st.var_ci, rel]]))
        print(f"simulated variance={st.var:.6f} +- {st.var_ci:.6f} relative gap={rel:.4f}")
    out.finish()
    converged = kr.quad_delta <= 3.0 * max(2.0 * kr.stderr, 1e-12)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_kostlan_crofton(args) -> int:
    _positive("d", args.d)
    _positive("samples", args.samples)
    _positive("slices", args.slices)
    st = crofton_length_stats(args.d, args.samples, args.slices, RngStream(args.seed, 13), threads=args.threads)
    out = Outputs(args, "kostlan crofton", {"samples": args.samples, "slices": args.slices})
    out.add("kostlan_crofton.csv", csv_bytes(ZERO_COLUMNS, [zero_row(st)]))
    out.finish()
    print(f"d={st.d} length={st.mean:.6f} +- {st.mean_ci:.6f} (expected {math.pi * math.sqrt(st.d):.6f})")
    return EXIT_OK


def cmd_limit_check(args) -> int:
    checks = identity_suite()
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  max_err={c.max_error:.3e}  tol={c.tolerance:.0e}  {'PASS' if c.passed else 'FAIL'}")
    if args.out:
        rows = [[c.name, c.max_error, c.tolerance, c.passed] for c in checks]
        out = Outputs(args, "limit-check", {})
        out.add("limit_check.csv", csv_bytes(("identity", "max_error", "tolerance", "passed"), rows))
        out.finish()
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NONCONVERGED


def cmd_replay(args) -> int:
    man = RunManifest.read(args.manifest)
    out_dir = Path(args.out) if args.out else Path(args.manifest).parent
    argv = manifest_argv(man) + ["--out", str(out_dir), "--threads", str(args.threads)]
    code = main(argv)
    if code == EXIT_USAGE:
        return code
    ok = True
    for name, digest in man.outputs.items():
        got = sha256((out_dir / name).read_bytes())
        same = got == digest
        ok &= same
        print(f"{name}: {'identical' if same else 'DIFFERS'}")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def manifest_argv(man: RunManifest) -> list[str]:
    argv = man.command.split()
    for k, v in man.args.items():
        if k in ("command", "sub") or v is None or v is False:
            continue
        flag = "--" + k.replace("_", "-")
        argv += [flag] if v is True else [flag, str(v)]
    return argv


# ---------------------------------------------------------------- parser

def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _common(p, seed: int):
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="out")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--config", help="TOML file; values in the section named after the command are defaults")


def build_parser(seed: int = 0) -> argparse.ArgumentParser:
    ap = _Parser(prog="zerovar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("constants", help="I_{n,r}, leading constants and positivity table")
    _common(p, seed)
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--samples-per-node", type=int, default=200_000)
    p.add_argument("--nodes-per-panel", type=int, default=16)
    p.add_argument("--panels", type=int, default=8)
    p.add_argument("--t-min", type=float, default=1e-6)
    p.add_argument("--t-max", type=float, default=60.0)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("dnr", help="tabulate D_{n,r}(t) on a t-grid")
    _common(p, seed)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--t-grid", default="log:1e-3:40:50")
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_dnr)

    p = sub.add_parser("moments", help="E[odet X odet Y] against its small- and large-t limits")
    _common(p, seed)
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--t-grid", default="1e-3,1e-2,1,30")
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_moments)

    k = sub.add_parser("kostlan", help="KSS polynomial experiments")
    ksub = k.add_subparsers(dest="sub", required=True, parser_class=_Parser)
    p = ksub.add_parser("chaos", help="second-chaos variance and its large-d limit")
    _common(p, seed)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--d", default="100000", help="degree or grid of degrees")
    p.set_defaults(func=cmd_kostlan_chaos)

    p = ksub.add_parser("simulate", help="real-root counts of univariate KSS polynomials")
    _common(p, seed)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--histogram", action="store_true")
    p.set_defaults(func=cmd_kostlan_simulate)

    p = ksub.add_parser("kacrice", help="root-count variance from the Kac-Rice density (n = r = 1)")
    _common(p, seed)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--samples-per-node", type=int, default=200_000)
    p.add_argument("--nodes-per-panel", type=int, default=12)
    p.add_argument("--compare-samples", type=int, default=0,
                   help="also simulate this many polynomials and emit a comparison row")
    p.set_defaults(func=cmd_kostlan_kacrice)

    p = ksub.add_parser("crofton", help="length of KSS curves in RP^2 from random line slices")
    _common(p, seed)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--slices", type=int, default=50)
    p.set_defaults(func=cmd_kostlan_crofton)

    p = sub.add_parser("limit-check", help="identity suite of the limit covariance algebra")
    _common(p, seed)
    p.set_defaults(func=cmd_limit_check, out=None)

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_replay)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = ap.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if not cfg_path:
        return args
    try:
        with open(cfg_path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise UsageError(f"cannot read config {cfg_path}: {e}") from None
    section_name = args.command if args.command != "kostlan" else f"kostlan.{args.sub}"
    section = data
    for part in section_name.split("."):
        section = section.get(part, {})
    known = vars(args)
    updates = {}
    for key, val in section.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("func", "command", "sub"):
            raise UsageError(f"unknown key {key!r} in [{section_name}]")
        updates[dest] = val
    # file values act as defaults: re-parse so explicit flags still win
    leaf = _leaf_parser(ap, args)
    leaf.set_defaults(**updates)
    return ap.parse_args(argv)


def _leaf_parser(ap, args):
    def find(parser, name):
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                return action.choices[name]
        raise KeyError(name)

    p = find(ap, args.command)
    if args.command == "kostlan":
        p = find(p, args.sub)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ap = build_parser(_default_seed())
        args = _apply_config(ap, argv)
        if hasattr(args, "threads") and args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return int(args.func(args))
    except UsageError as e:
        print(f"zerovar: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
