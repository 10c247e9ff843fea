"""Acceptance checks 1-13 as a registry, runnable as a fast or a full suite.

Report-only checks (9 and 13) are computed and printed but never change the
verdict.  ``inject`` switches on a named fault (currently ``sine-table``) to
show the harness notices a broken series.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral
from .domain import DomainSpec
from .lab import ExperimentConfig, d1_density_check, fit_constant, run_experiment, start_point
from .poisson import evaluate_at, solve_hierarchy
from .rng import stream_seed
from .spectral import (conductance_table, cube_domain, exact_hitting_solve, green_series,
                       hitting_probability, hitting_table_series, midband_bounds,
                       multirange_bound_check)
from .walks import (WalkLaw, estimate_return_probability, hit_frequencies, simulate_exits,
                    unconstrained_range_profile)

SCHEMA = "rangelab.verify/1"
SEED = 20240611

SIZES = {
    "fast": {"mc4": 200_000, "p0_reps": 20_000, "p0_cutoff": 100_000, "prof_max": 6,
             "prof_reps": 64, "props": 2_000, "bound_reps": 50_000, "fit_reps": 500},
    "full": {"mc4": 1_000_000, "p0_reps": 100_000, "p0_cutoff": 1_000_000, "prof_max": 7,
             "prof_reps": 48, "props": 10_000, "bound_reps": 200_000, "fit_reps": 2_000},
}


@dataclass
class CheckResult:
    id: int
    title: str
    gated: bool
    passed: bool
    details: dict
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        if not self.gated:
            tag += " (report-only)"
        return f"[{self.id:2d}] {tag:<19} {self.title} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "gated": self.gated, "passed": self.passed,
                "seconds": round(self.seconds, 3), "details": self.details}


@dataclass
class Context:
    suite: str
    seed: int = SEED
    workers: int = 1
    cache: dict = field(default_factory=dict)

    @property
    def size(self) -> dict:
        return SIZES[self.suite]


REGISTRY: dict[int, tuple[str, bool, Callable]] = {}


def criterion(cid: int, title: str, gated: bool = True):
    def wrap(fn):
        REGISTRY[cid] = (title, gated, fn)
        return fn
    return wrap


# --------------------------------------------------------------------------

@criterion(1, "exact conductance on the tiny cubes")
def _c1(ctx):
    g2_series = 1.0 / green_series(2, (1, 1), (1, 1))
    g2_solve = exact_hitting_solve(cube_domain(2), (1, 1)).g
    g3_series = 1.0 / green_series(3, (1, 1), (1, 1))
    g3_solve = exact_hitting_solve(cube_domain(3), (1, 1)).g
    ok = (g2_series == 1.0 and g2_solve == 1.0
          and abs(g3_series - 6 / 7) <= 1e-12 and abs(g3_solve - 6 / 7) <= 1e-12)
    return ok, {"g2_series": g2_series, "g2_solve": g2_solve, "g3_series": g3_series,
                "g3_solve": g3_solve, "g3_exact": 6 / 7}


@criterion(2, "series/solver equivalence for hitting probabilities and conductances")
def _c2(ctx):
    worst = {}
    for N in (4, 8, 16):
        dom = cube_domain(N)
        g_series = conductance_table(N).g
        err = 0.0
        for x in dom.enumerate_interior():
            x = tuple(int(v) for v in x)
            sol = exact_hitting_solve(dom, x)
            ser = hitting_table_series(N, x)
            idx = sol.points - 1
            err = max(err, float(np.abs(ser[idx[:, 0], idx[:, 1]] - sol.values).max()),
                      abs(g_series[x[0] - 1, x[1] - 1] - sol.g))
        worst[N] = err
    return max(worst.values()) <= 1e-10, {"max_abs_diff": worst, "tol": 1e-10}


@criterion(3, "inverse conductance against (1/pi^2) log N and (1/(2 pi^2)) log N")
def _c3(ctx):
    rows = [midband_bounds(N) for N in (64, 128, 256, 512, 1024)]
    ctx.cache["bound_rows"] = rows
    ok = all(r["midpoint_ok"] and r["midband_ok"] for r in rows)
    return ok, {"rows": [{k: r[k] for k in ("N", "midpoint_inverse", "midpoint_bound",
                                            "midband_min_inverse", "midband_bound")} for r in rows]}


@criterion(4, "Monte Carlo escape and hitting frequencies at N=16")
def _c4(ctx):
    n = ctx.size["mc4"]
    law = WalkLaw.simple(2)
    dom = cube_domain(16)
    checks = []
    for i, (b, x) in enumerate([((8, 8), (8, 8)), ((1, 2), (1, 2)), ((4, 5), (8, 8)),
                                ((3, 12), (6, 10))]):
        hits = hit_frequencies(law, dom, b, x, stream_seed(ctx.seed, 400 + i), n)
        q = float(hits.mean())
        if b == x:
            est, exact = 1 - q, 1.0 / green_series(16, x, x)
            kind = "escape"
        else:
            est, exact = q, hitting_probability(16, b, x)
            kind = "hitting"
        se = math.sqrt(est * (1 - est) / n)
        checks.append({"kind": kind, "b": list(b), "x": list(x), "mc": est, "exact": exact,
                       "se": se, "z": (est - exact) / se})
    return all(abs(c["z"]) <= 4 for c in checks), {"replicates": n, "checks": checks}


@criterion(5, "moment hierarchy on the disk and the ball")
def _c5(ctx):
    disk = DomainSpec.ball((0, 0), 1)
    errs = []
    vals = {}
    for h in (1 / 32, 1 / 64, 1 / 128):
        f = solve_hierarchy(disk, h, 2)
        u1, u2 = evaluate_at(f, (0, 0), 1), evaluate_at(f, (0, 0), 2)
        vals[h] = (u1, u2)
        errs.append(abs(u2 - 0.375))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ball = solve_hierarchy(DomainSpec.ball((0, 0, 0), 1), 1 / 16, 1)
    b1 = evaluate_at(ball, (0, 0, 0), 1)
    u1, u2 = vals[1 / 128]
    ok = abs(u1 - 0.5) <= 0.01 and abs(u2 - 0.375) <= 0.01 and min(orders) >= 1.7 \
        and abs(b1 - 1 / 3) <= 0.01
    return ok, {"disk_u1": u1, "disk_u2": u2, "u2_errors": errs, "orders": orders,
                "ball3_u1": b1}


@criterion(6, "exit-time moments on the square, N=256")
def _c6(ctx):
    f = solve_hierarchy(DomainSpec.unit_square(), 1 / 128, 2)
    u1, u2 = evaluate_at(f, (0.5, 0.5), 1), evaluate_at(f, (0.5, 0.5), 2)
    cfg = ExperimentConfig(WalkLaw.simple(2), DomainSpec.unit_square(), (0.5, 0.5), (256,), 10_000,
                           p_max=1, k_max=2, seed=stream_seed(ctx.seed, 6), workers=ctx.workers)
    res = run_experiment(cfg)
    st = res.per_n[0]["statistics"]["tau"]
    m1, m2 = st["moments"]
    r1, r2 = m1 / (2 * u1) - 1, m2 / (4 * u2) - 1
    return abs(r1) <= 0.03 and abs(r2) <= 0.06, {
        "mean": m1, "mean_se": st["moment_se"][0], "predicted_mean": 2 * u1, "rel_err_mean": r1,
        "second": m2, "second_se": st["moment_se"][1], "predicted_second": 4 * u2,
        "rel_err_second": r2}


def _d3_samples(ctx):
    if "d3" not in ctx.cache:
        s = ctx.size
        est = estimate_return_probability(3, s["p0_cutoff"], s["p0_reps"], stream_seed(ctx.seed, 7))
        dom = DomainSpec.cube(3).lattice(64)
        S = simulate_exits(WalkLaw.simple(3), dom, start_point(dom, (0.5, 0.5, 0.5)),
                           stream_seed(ctx.seed, 70), 5_000, p_max=4, workers=ctx.workers)
        ctx.cache["d3"] = (est, S)
    return ctx.cache["d3"]


@criterion(7, "d=3 range per unit exit time against 1 - p0")
def _c7(ctx):
    est, S = _d3_samples(ctx)
    ratio = float(np.mean(S.range / S.tau))
    target = 1 - est.p0
    rel = ratio / target - 1
    return abs(rel) <= 0.05, {"p0": est.p0, "p0_se": est.se, "p0_cutoff": est.n_cutoff,
                              "p0_replicates": est.replicates, "p0_reference": 0.3405,
                              "mean_R_over_tau": ratio, "target": target, "rel_err": rel}


@criterion(8, "d=3 multiple-range ratio R^(2)/R^(1) against p0")
def _c8(ctx):
    est, S = _d3_samples(ctx)
    ok_ = S.multi[:, 0] > 0
    ratio = float(np.mean(S.multi[ok_, 1] / S.multi[ok_, 0]))
    rel = ratio / est.p0 - 1
    return abs(rel) <= 0.10, {"p0": est.p0, "mean_ratio": ratio, "rel_err": rel}


@criterion(9, "d=2 unconstrained range trend toward pi", gated=False)
def _c9(ctx):
    s = ctx.size
    cps = np.array([10 ** e for e in range(4, s["prof_max"] + 1)], dtype=np.int64)
    prof = unconstrained_range_profile(WalkLaw.simple(2), cps, stream_seed(ctx.seed, 9), p_max=2,
                                       replicates=s["prof_reps"])
    n = cps.astype(float)
    r = (prof.range * np.log(n) / n).mean(axis=0)
    m1 = (prof.multi[:, :, 0] * np.log(n) ** 2 / n).mean(axis=0)
    m2 = (prof.multi[:, :, 1] * np.log(n) ** 2 / n).mean(axis=0)
    increasing = bool(np.all(np.diff(r) > 0))
    rel = r[-1] / math.pi - 1
    return increasing and abs(rel) <= 0.25, {
        "checkpoints": cps.tolist(), "replicates": s["prof_reps"],
        "R_logn_over_n": r.tolist(), "increasing": increasing, "rel_err_last": rel,
        "R1_log2n_over_n": m1.tolist(), "R2_log2n_over_n": m2.tolist(), "pi_squared": math.pi ** 2}


@criterion(10, "d=1 range distribution (KS and mean)")
def _c10(ctx):
    rep = d1_density_check(0.5, 1000, 100_000, stream_seed(ctx.seed, 10))
    return rep["ok"], rep


@criterion(11, "per-sample structural identities and the multiple-range bound")
def _c11(ctx):
    total = ctx.size["props"]
    rng = np.random.default_rng(stream_seed(ctx.seed, 11))
    shapes = [DomainSpec.unit_square(), DomainSpec.ball((0.5, 0.5), 0.5),
              DomainSpec.polygon([(0, 0), (1, 0), (0.3, 1)]), DomainSpec.cardioid(),
              DomainSpec.cube(3)]
    per = 50
    bad = {"occupation": 0, "sites": 0, "range_le_tau": 0}
    n_samples = 0
    overflow = 0
    cfg_i = 0
    while n_samples < total:
        spec = shapes[int(rng.integers(len(shapes)))]
        N = int(rng.integers(6, 33))
        dom = spec.lattice(N)
        pts = dom.enumerate_interior()
        if len(pts) == 0:
            continue
        start = tuple(int(v) for v in pts[int(rng.integers(len(pts)))])
        S = simulate_exits(WalkLaw.simple(spec.dimension), dom, start,
                           stream_seed(ctx.seed, 1100 + cfg_i), per, p_max=256)
        cfg_i += 1
        p = np.arange(1, S.p_max + 1)
        bad["occupation"] += int(np.sum((S.multi * p).sum(1) + S.overflow_mass != S.tau))
        bad["sites"] += int(np.sum(S.multi.sum(1) + S.overflow_sites != S.range))
        bad["range_le_tau"] += int(np.sum(S.range > S.tau))
        overflow += int(S.overflow_sites.sum())
        n_samples += len(S)
    bounds = []
    for j, (N, b, x, p) in enumerate([(16, (4, 5), (8, 8), 1), (16, (4, 5), (8, 8), 2),
                                      (32, (10, 20), (16, 16), 1), (32, (3, 3), (5, 6), 3)]):
        bc = multirange_bound_check(N, b, x, p, ctx.size["bound_reps"], stream_seed(ctx.seed, 1150 + j))
        bounds.append({"N": N, "b": list(b), "x": list(x), "p": p, "q_hat": bc.q_hat, "se": bc.se,
                       "bound": bc.bound, "ok": bc.ok})
    ok = not any(bad.values()) and all(b["ok"] for b in bounds)
    return ok, {"samples": n_samples, "configs": cfg_i, "violations": bad,
                "overflow_sites": overflow, "bound_checks": bounds}


def _small_config(workers: int, seed: int) -> ExperimentConfig:
    return ExperimentConfig(WalkLaw.simple(2), DomainSpec.unit_square(), (0.5, 0.5), (16, 24, 32),
                            800, p_max=3, k_max=2, seed=seed, workers=workers, h=1 / 64)


@criterion(12, "byte-identical results across worker counts")
def _c12(ctx):
    seed = stream_seed(ctx.seed, 12)
    a = run_experiment(_small_config(1, seed)).to_json()
    b = run_experiment(_small_config(8, seed)).to_json()
    return a == b, {"bytes": len(a), "identical": a == b, "workers": [1, 8]}


@criterion(13, "d=3 range constant against both candidate constants", gated=False)
def _c13(ctx):
    est, _ = _d3_samples(ctx)
    cfg = ExperimentConfig(WalkLaw.simple(3), DomainSpec.cube(3), (0.5, 0.5, 0.5), (16, 32, 64),
                           ctx.size["fit_reps"], p_max=2, k_max=1, seed=stream_seed(ctx.seed, 13),
                           workers=ctx.workers, p0=est.p0, h=1 / 32)
    res = run_experiment(cfg)
    cand = [p for p in res.predictions if p["statistic"] == "range" and p["k"] == 1]
    rep = fit_constant(res, "range", 1, cand)
    return True, rep


# --------------------------------------------------------------------------

def run_suite(suite: str = "fast", inject: tuple[str, ...] = (), only=None, workers: int = 1,
              seed: int = SEED, echo=None) -> dict:
    if suite not in SIZES:
        raise ValueError(f"suite must be one of {sorted(SIZES)}")
    unknown = set(inject) - {"sine-table"}
    if unknown:
        raise ValueError(f"unknown fault(s) {sorted(unknown)}")
    ctx = Context(suite, seed, workers)
    saved = set(spectral.FAULTS)
    spectral.FAULTS.update(inject)
    results = []
    try:
        for cid in sorted(REGISTRY):
            if only is not None and cid not in only:
                continue
            title, gated, fn = REGISTRY[cid]
            t0 = time.perf_counter()
            try:
                passed, details = fn(ctx)
            except Exception as exc:  # a crashing check is a failing check
                passed, details = False, {"error": f"{type(exc).__name__}: {exc}"}
            r = CheckResult(cid, title, gated, bool(passed), _clean(details),
                            time.perf_counter() - t0)
            results.append(r)
            if echo is not None:
                echo(r.line())
    finally:
        spectral.FAULTS.clear()
        spectral.FAULTS.update(saved)
    failed = [r.id for r in results if r.gated and not r.passed]
    return {"schema": SCHEMA, "suite": suite, "seed": seed, "faults": sorted(inject),
            "passed": not failed, "failed": failed,
            "criteria": [r.to_dict() for r in results], "_results": results,
            "_context": ctx}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj
