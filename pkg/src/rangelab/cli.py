"""rangelab command line: simulate, spectral, solve, verify.

Exit codes: 0 success, 1 a gated check failed, 2 usage or config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import secrets
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DomainError, PreconditionError, RangeLabError, SizeExceeded

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

CSV_HELP = """\
output files
  simulate:  result.json     full experiment result (schema rangelab.experiment/1)
             moments.csv     N, statistic, p, k, moment, moment_se, factorial,
                             factorial_se, predicted_as_stated, predicted_cross_check
                             (moments are of the scaled statistic)
             moments.dat     gnuplot blocks: 1/logN 1/N moment se
             moments_k*.png  scaled moments against 1/log N
             manifest.json   version, config hash, seed, timestamps, outputs
  spectral:  conductance.csv x1, ..., xd, g        (--conductance)
             hitting.csv     b1, b2, P             (--hitting)
             bounds.csv      N, midpoint_inverse, midpoint_bound,
                             midband_min_inverse, midband_bound, ok (--bound-check)
  solve:     field.csv       x1, ..., xd, u1, ..., uK over interior grid nodes
             field.json      h, domain, domain hash, residuals
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    def __init__(self, command: str, out_dir: Path):
        self.out_dir = out_dir
        self.data = {"tool": "rangelab", "version": __version__, "command": command,
                     "started": _now(), "outputs": []}

    def add(self, path: Path):
        self.data["outputs"].append(str(Path(path).name))
        return path

    def write(self, **extra) -> Path:
        self.data.update(extra)
        self.data["finished"] = _now()
        path = self.out_dir / "manifest.json"
        self.data["outputs"].append(path.name)
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return path


# --------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    from .config import config_hash, parse_config, read_config
    from .lab import run_experiment, scales
    from . import plots

    data = read_config(args.config)
    seed_source = "flag"
    seed = args.seed
    if seed is None:
        if "seed" in data.get("experiment", {}):
            seed_source = "config"
        else:
            seed, seed_source = secrets.randbits(63), "entropy"
    cfg, out = parse_config(data, seed, args.workers)
    out_dir = Path(args.out_dir or out.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest("simulate", out_dir)
    man.data["config_file"] = str(args.config)

    res = run_experiment(cfg, keep_samples=out.histogram)
    rpath = out_dir / "result.json"
    rpath.write_text(res.to_json())
    man.add(rpath)
    rows = res.csv_rows()
    if rows:
        man.add(_write_csv(out_dir / "moments.csv", list(rows[0]), [list(r.values()) for r in rows]))
    if out.plot_data:
        man.add(plots.write_plot_data(res, out_dir / "moments.dat"))
    if out.plots:
        for k in range(1, cfg.k_max + 1):
            man.add(plots.moments_figure(res, out_dir / f"moments_k{k}.png", k))
    if out.histogram and res.samples:
        N = cfg.n_grid[-1]
        man.add(plots.histogram_figure(res.samples[N], scales(cfg.dimension, N)["range"],
                                       out_dir / "range_hist.png", f"scaled range, N={N}"))
    man.write(config_hash=config_hash(cfg), seed=cfg.seed, seed_source=seed_source,
              workers=cfg.workers)
    _summary(res)
    return EXIT_OK


def _summary(res):
    for e in res.per_n:
        st = e["statistics"]
        print(f"N={e['N']:<6d} tau/N^2={st['tau']['mean']:.5f}+-{st['tau']['se']:.5f}  "
              f"range={st['range']['mean']:.5f}+-{st['range']['se']:.5f}  "
              f"R/tau={e['ratios']['range/tau']['mean']:.5f}")
    for f in res.fits:
        c = ", ".join(f"{x['convention']} {x['constant']:.4g} (z={x['z']:+.1f})" for x in f["candidates"])
        p = "" if f["p"] is None else f" p={f['p']}"
        print(f"fit {f['statistic']}{p} k={f['k']}: c={f['c_hat']:.4f}+-{f['c_hat_se']:.4f}  [{c}]")


# --------------------------------------------------------------------------
# spectral

def cmd_spectral(args) -> int:
    from . import plots
    from .spectral import (conductance_table, hitting_table_series, midband_bounds)

    Ns = args.n
    if any(N < 2 for N in Ns):
        raise UsageError("--n must be >= 2")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        man = Manifest("spectral", out_dir)
    status = EXIT_OK
    if args.conductance:
        if len(Ns) != 1:
            raise UsageError("--conductance takes a single --n")
        t = conductance_table(Ns[0], args.d)
        header = [f"x{i + 1}" for i in range(args.d)] + ["g"]
        rows = [[int(v) for v in r[:-1]] + [float(r[-1])] for r in t.rows()]
        _emit(header, rows, out_dir and man.add(out_dir / "conductance.csv"))
    elif args.hitting:
        if len(Ns) != 1:
            raise UsageError("--hitting takes a single --n")
        N = Ns[0]
        x = tuple(args.hitting)
        if any(not 0 < v < N for v in x):
            raise UsageError(f"target {x} is not interior to (0, {N})^2")
        P = hitting_table_series(N, x)
        rows = [[i + 1, j + 1, float(P[i, j])] for i in range(N - 1) for j in range(N - 1)]
        _emit(["b1", "b2", "P"], rows, out_dir and man.add(out_dir / "hitting.csv"))
    elif args.bound_check:
        if any(N < 3 for N in Ns):
            raise UsageError("--bound-check needs N >= 3")
        rows = [midband_bounds(N) for N in Ns]
        keys = ["N", "midpoint_inverse", "midpoint_bound", "midband_min_inverse", "midband_bound"]
        table = [[r[k] for k in keys] + [r["midpoint_ok"] and r["midband_ok"]] for r in rows]
        _emit(keys + ["ok"], table, out_dir and man.add(out_dir / "bounds.csv"))
        for r in rows:
            print(f"# N={r['N']}: min over midband of g^-1/log N = {r['midband_min_over_logN']:.4f} "
                  f"(needs >= {1 / (2 * 3.141592653589793 ** 2):.4f}); "
                  f"midpoint g^-1 = {r['midpoint_inverse']:.4f} vs log N/pi^2 = {r['midpoint_bound']:.4f}",
                  file=sys.stderr)
        if out_dir and len(rows) > 1:
            man.add(plots.bound_figure(rows, out_dir / "bounds.png"))
        if not all(t[-1] for t in table):
            status = EXIT_FAIL
    else:
        raise UsageError("choose one of --conductance, --hitting X1 X2, --bound-check")
    if out_dir:
        man.write(n=Ns, d=args.d)
    return status


def _emit(header, rows, path=None):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    text = buf.getvalue()
    sys.stdout.write(text)
    if path:
        Path(path).write_text(text)


# --------------------------------------------------------------------------
# solve

def cmd_solve(args) -> int:
    from .config import read_config
    from .domain import DomainSpec
    from .poisson import evaluate_at, solve_hierarchy

    data = read_config(args.config)
    if "domain" not in data:
        raise ConfigError("missing [domain] section")
    spec = DomainSpec.from_config(data["domain"])
    ex = data.get("experiment", {})
    h = args.h if args.h is not None else float(ex.get("h", 1 / 128))
    K = args.k if args.k is not None else int(ex.get("k_max", 2))
    field_ = solve_hierarchy(spec, h, K)
    out_dir = Path(args.out_dir or data.get("output", {}).get("dir", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest("solve", out_dir)
    coords, idx = field_.node_coords()
    d = spec.dimension
    rows = []
    for c, i in zip(coords, idx):
        rows.append([float(v) for v in c] + [float(field_.values[(k,) + tuple(i)]) for k in range(K)])
    man.add(_write_csv(out_dir / "field.csv", [f"x{i + 1}" for i in range(d)] +
                       [f"u{k + 1}" for k in range(K)], rows))
    meta = {"h": h, "K": K, "domain": spec.to_config(), "domain_hash": spec.hash(),
            "residuals": list(field_.residuals), "nodes": len(rows)}
    if "a" in ex:
        meta["at"] = {"a": list(ex["a"]),
                      "u": [evaluate_at(field_, ex["a"], k) for k in range(1, K + 1)]}
        print("u(a) =", " ".join(f"{v:.8g}" for v in meta["at"]["u"]))
    (out_dir / "field.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    man.add(out_dir / "field.json")
    man.write(config_hash=hashlib.sha256(json.dumps(meta["domain"], sort_keys=True).encode()
                                         + repr((h, K)).encode()).hexdigest())
    return EXIT_OK


# --------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    from .verify import SEED, run_suite

    seed = SEED if args.seed is None else args.seed
    rep = run_suite(args.suite, tuple(args.inject_fault or ()), workers=args.workers, seed=seed,
                    echo=print)
    public = {k: v for k, v in rep.items() if not k.startswith("_")}
    if args.json:
        Path(args.json).write_text(json.dumps(public, indent=2, sort_keys=True, allow_nan=True) + "\n")
    if rep["passed"]:
        print(f"verify {args.suite}: all gated checks passed")
        return EXIT_OK
    names = {r.id: r.title for r in rep["_results"]}
    for cid in rep["failed"]:
        print(f"FAILED [{cid}] {names[cid]}", file=sys.stderr)
    return EXIT_FAIL


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rangelab", description="Range of random walks stopped at exit from N D.",
                formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_HELP)
    p.add_argument("--version", action="version", version=f"rangelab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="run an experiment from a config file",
                       formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_HELP)
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir")

    s = sub.add_parser("spectral", help="exact conductance and hitting tables on the square")
    s.add_argument("--n", type=int, nargs="+", required=True)
    s.add_argument("--d", type=int, default=2, choices=(1, 2, 3))
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--conductance", action="store_true")
    mode.add_argument("--hitting", type=int, nargs=2, metavar=("X1", "X2"))
    mode.add_argument("--bound-check", action="store_true")
    s.add_argument("--out-dir")

    s = sub.add_parser("solve", help="solve the exit-time moment hierarchy")
    s.add_argument("--config", required=True)
    s.add_argument("--h", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--out-dir")

    s = sub.add_parser("verify", help="run the acceptance checks")
    s.add_argument("--suite", choices=("fast", "full"), default="fast")
    s.add_argument("--json")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--inject-fault", action="append", choices=("sine-table",))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: simulate, spectral, solve or verify")
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise UsageError("--workers must be >= 1")
        fn = {"simulate": cmd_simulate, "spectral": cmd_spectral, "solve": cmd_solve,
              "verify": cmd_verify}[args.command]
        return fn(args)
    except UsageError as exc:
        print(f"rangelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError, PreconditionError, SizeExceeded) as exc:
        print(f"rangelab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RangeLabError as exc:
        print(f"rangelab: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything unexpected is still a runtime error, not a traceback
        print(f"rangelab: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
