"""Experiment orchestration: ensembles over an N-grid, scaled moments, constant fits.

A run draws ``replicates`` exits for every N in the grid, rescales the range,
multiple ranges and exit time with the normalizations below, and compares
their k-th moments to c^k u^(k)(a) from the moment hierarchy.

    d = 2:   R / (N^2/log N),   R^(p) / (N^2/log^2 N),   tau / N^2
    d >= 3:  R / N^2,           R^(p) / N^2,             tau / N^2

The per-N replicate streams are ``stream_seed(seed, N)`` so adding a grid
point never changes the samples of the others.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import integrate, stats

from .domain import DomainSpec, LatticeDomain
from .errors import ConfigError, DomainError, PreconditionError
from .poisson import LimitPrediction, predict_limit_moments, solve_hierarchy
from .rng import stream_seed
from .walks import (SampleSet, WalkLaw, batch_mean, estimate_return_probability, falling,
                    interval_ranges, simulate_exits)

SCHEMA = "rangelab.experiment/1"
CONVENTIONS = ("as-stated", "cross-check")
FIT_MIN_N_D2 = 64
P0_REFERENCE = 0.3405  # simple walk, d = 3


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    law: WalkLaw
    spec: DomainSpec
    a: tuple[float, ...]
    n_grid: tuple[int, ...]
    replicates: int
    p_max: int = 4
    k_max: int = 2
    seed: int = 0
    workers: int = 1
    conventions: tuple[str, ...] = CONVENTIONS
    p0: float | None = None
    p0_replicates: int = 20_000
    p0_cutoff: int = 100_000
    h: float = 1 / 128
    step_cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "conventions", tuple(self.conventions))
        if self.law.dimension != self.spec.dimension:
            raise ConfigError("walk dimension does not match domain dimension")
        if len(self.a) != self.spec.dimension:
            raise ConfigError(f"experiment.a must have {self.spec.dimension} coordinates")
        if not bool(self.spec.contains(np.array(self.a))):
            raise ConfigError(f"experiment.a = {list(self.a)} is not inside the domain")
        if not self.n_grid:
            raise ConfigError("experiment.n_grid is empty")
        if any(n < 2 for n in self.n_grid):
            raise ConfigError("experiment.n_grid entries must be >= 2")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("experiment.n_grid must be strictly increasing")
        if self.replicates < 100:
            raise ConfigError("experiment.replicates must be >= 100")
        if self.p_max < 1 or self.k_max < 1:
            raise ConfigError("experiment.p_max and experiment.k_max must be >= 1")
        if self.workers < 1:
            raise ConfigError("experiment.workers must be >= 1")
        bad = set(self.conventions) - set(CONVENTIONS)
        if bad:
            raise ConfigError(f"unknown convention(s) {sorted(bad)}")
        if self.p0 is not None and not 0 < self.p0 < 1:
            raise ConfigError("experiment.p0 must lie in (0, 1)")
        if not 0 < self.h < 0.5:
            raise ConfigError("experiment.h must lie in (0, 1/2)")

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def semantic(self) -> dict:
        """Every input that can change the result.  The worker count is not one."""
        return {"domain": self.spec.to_config(), "walk": self.law.to_config(),
                "a": list(self.a), "n_grid": list(self.n_grid), "replicates": self.replicates,
                "p_max": self.p_max, "k_max": self.k_max, "seed": self.seed,
                "conventions": list(self.conventions), "p0": self.p0,
                "p0_replicates": self.p0_replicates, "p0_cutoff": self.p0_cutoff,
                "h": self.h, "step_cap": self.step_cap}


def start_point(dom: LatticeDomain, a: Sequence[float]) -> tuple[int, ...]:
    """a_N: round N a per coordinate, then fall back to the nearest interior site."""
    target = np.asarray(a, dtype=float) * dom.N
    x = tuple(int(v) for v in np.floor(target + 0.5))
    if dom.contains(x):
        return x
    pts = dom.enumerate_interior()
    if len(pts) == 0:
        raise DomainError(f"D_N is empty at N={dom.N}")
    d2 = ((pts - target) ** 2).sum(axis=1)
    return tuple(int(v) for v in pts[int(np.argmin(d2))])


def scales(d: int, N: int) -> dict[str, float]:
    if d == 1:
        return {"tau": float(N) ** 2, "range": float(N), "multirange": float(N)}
    if d == 2:
        L = math.log(N)
        return {"tau": float(N) ** 2, "range": N * N / L, "multirange": N * N / (L * L)}
    return {"tau": float(N) ** 2, "range": float(N) ** 2, "multirange": float(N) ** 2}


# --------------------------------------------------------------------------
# estimators

def factorial_moment(samples, k: int, replicate=None) -> tuple[float, float]:
    """Mean of x(x-1)...(x-k+1) with its batch-means standard error."""
    x = np.asarray(samples, dtype=float)
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if len(x) <= k:
        raise PreconditionError(f"need more than k={k} samples, got {len(x)}")
    rep = np.arange(len(x)) if replicate is None else np.asarray(replicate)
    return batch_mean(falling(x, k), rep)


def _scaled_stat(values, rep, scale: float, k_max: int) -> dict:
    v = np.asarray(values, dtype=float)
    out = {"moments": [], "moment_se": [], "factorial": [], "factorial_se": []}
    for k in range(1, k_max + 1):
        m, se = batch_mean((v / scale) ** k, rep)
        f, fse = batch_mean(falling(v, k), rep)
        out["moments"].append(m)
        out["moment_se"].append(se)
        out["factorial"].append(f / scale ** k)
        out["factorial_se"].append(fse / scale ** k)
    out["mean"] = out["moments"][0]
    out["se"] = out["moment_se"][0]
    return out


def _ratio(num, den, rep) -> dict:
    ok = den > 0
    m, se = batch_mean(num[ok] / den[ok], rep[ok])
    return {"mean": m, "se": se, "n": int(ok.sum())}


def _per_n(cfg: ExperimentConfig, N: int, S: SampleSet, start) -> dict:
    d = cfg.dimension
    sc = scales(d, N)
    rep = S.replicate
    tau = S.tau.astype(float)
    R = S.range.astype(float)
    stats_ = {"tau": _scaled_stat(tau, rep, sc["tau"], cfg.k_max),
              "range": _scaled_stat(R, rep, sc["range"], cfg.k_max),
              "multirange": {str(p): _scaled_stat(S.multi[:, p - 1], rep, sc["multirange"], cfg.k_max)
                             for p in range(1, cfg.p_max + 1)}}
    ratios = {"range/tau": _ratio(R, tau, rep)}
    if d == 2:
        lt = np.log(np.maximum(tau, 1.0))
        ratios["range*log(tau)/tau"] = _ratio(R * lt, tau, rep)
    ratios["multirange p+1/p"] = {
        str(p): _ratio(S.multi[:, p].astype(float), S.multi[:, p - 1].astype(float), rep)
        for p in range(1, cfg.p_max)}

    # per-sample sanity: R/(N^2/log N) <= tau log N / N^2 is R <= tau
    order_ok = True
    for st in [stats_["tau"], stats_["range"], *stats_["multirange"].values()]:
        if len(st["moments"]) > 1 and st["moments"][1] < st["moments"][0] ** 2:
            order_ok = False
    sanity = {"range_le_tau": int(np.sum(R > tau)) == 0,
              "occupation_sum": bool(np.all(S.overflow_mass + (S.multi * np.arange(1, cfg.p_max + 1)).sum(1)
                                            == S.tau)),
              "moment_ordering": order_ok,
              "overflow_sites": int(S.overflow_sites.sum())}
    return {"N": N, "start": list(start), "n": len(S), "scale": sc, "statistics": stats_,
            "ratios": ratios, "sanity": sanity}


# --------------------------------------------------------------------------
# results

@dataclass
class ExperimentResult:
    config: dict
    per_n: list[dict]
    predictions: list[dict] = field(default_factory=list)
    fits: list[dict] = field(default_factory=list)
    p0: dict | None = None
    u: dict | None = None
    samples: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return int(self.config["domain"]["dimension"])

    def stat(self, N_index: int, statistic: str, p: int | None = None) -> dict:
        st = self.per_n[N_index]["statistics"][statistic]
        return st[str(p)] if statistic == "multirange" else st

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "config": self.config, "p0": self.p0, "u": self.u,
                "per_n": self.per_n, "predictions": self.predictions, "fits": self.fits}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def csv_rows(self) -> list[dict]:
        """One row per (N, statistic, p, k) with scaled moments and predictions."""
        pred = {}
        for pr in self.predictions:
            pred[(pr["statistic"], pr["p"], pr["k"], pr["convention"])] = pr["predicted"]
        rows = []
        for entry in self.per_n:
            for name, p, st in _iter_stats(entry["statistics"]):
                for k in range(1, len(st["moments"]) + 1):
                    rows.append({"N": entry["N"], "statistic": name, "p": "" if p is None else p,
                                 "k": k, "moment": st["moments"][k - 1],
                                 "moment_se": st["moment_se"][k - 1],
                                 "factorial": st["factorial"][k - 1],
                                 "factorial_se": st["factorial_se"][k - 1],
                                 "predicted_as_stated": pred.get((name, p, k, "as-stated"), ""),
                                 "predicted_cross_check": pred.get((name, p, k, "cross-check"), "")})
        return rows


def _iter_stats(statistics: dict):
    yield "exit-time", None, statistics["tau"]
    yield "range", None, statistics["range"]
    for p, st in statistics["multirange"].items():
        yield "multirange", int(p), st


def _stat_key(statistic: str) -> str:
    return {"exit-time": "tau", "tau": "tau", "range": "range", "multirange": "multirange"}[statistic]


# --------------------------------------------------------------------------
# running

def _p0_for(cfg: ExperimentConfig) -> dict | None:
    if cfg.dimension < 3 and cfg.law.kind != "biased":
        return None
    if cfg.p0 is not None:
        return {"value": cfg.p0, "se": 0.0, "source": "config"}
    est = estimate_return_probability(cfg.law if cfg.law.kind != "simple" else cfg.dimension,
                                      cfg.p0_cutoff, cfg.p0_replicates,
                                      stream_seed(cfg.seed, 2 ** 40))
    return {"value": est.p0, "se": est.se, "source": "estimated", "n_cutoff": est.n_cutoff,
            "replicates": est.replicates, "note": est.tail_note}


def _predictions(cfg: ExperimentConfig, p0: dict | None) -> tuple[dict | None, list[dict]]:
    if cfg.law.kind != "simple" or cfg.dimension < 2:
        return None, []
    field_ = solve_hierarchy(cfg.spec, cfg.h, cfg.k_max)
    u = {"h": cfg.h, "values": [predict_limit_moments(field_, cfg.a, cfg.dimension, k, "exit-time").u_k
                                for k in range(1, cfg.k_max + 1)]}
    pv = None if p0 is None else p0["value"]
    preds = []
    targets = [("exit-time", None), ("range", None)] + [("multirange", p) for p in range(1, cfg.p_max + 1)]
    for statistic, p in targets:
        for k in range(1, cfg.k_max + 1):
            for conv in cfg.conventions:
                lp = predict_limit_moments(field_, cfg.a, cfg.dimension, k, statistic, p, pv, conv)
                preds.append(_pred_dict(lp))
    return u, preds


def _pred_dict(lp: LimitPrediction) -> dict:
    return {"statistic": lp.statistic, "p": lp.p, "k": lp.k, "convention": lp.convention,
            "base": lp.base, "constant": lp.constant, "u_k": lp.u_k, "predicted": lp.predicted}


def run_experiment(cfg: ExperimentConfig, keep_samples: bool = False) -> ExperimentResult:
    per_n, samples = [], {}
    for N in cfg.n_grid:
        dom = cfg.spec.lattice(N)
        start = start_point(dom, cfg.a)
        # the partition depends on the worker count; the merged samples do not
        chunk = max(100, min(1000, -(-cfg.replicates // (4 * cfg.workers))))
        S = simulate_exits(cfg.law, dom, start, stream_seed(cfg.seed, N), cfg.replicates,
                           p_max=cfg.p_max, step_cap=cfg.step_cap, workers=cfg.workers, chunk=chunk)
        per_n.append(_per_n(cfg, N, S, start))
        if keep_samples:
            samples[N] = S
    p0 = _p0_for(cfg)
    u, preds = _predictions(cfg, p0)
    res = ExperimentResult(cfg.semantic(), per_n, preds, [], p0, u, samples)
    if len(cfg.n_grid) >= 3 and preds:
        fit_targets = [("exit-time", None), ("range", None)] + \
                      [("multirange", p) for p in range(1, min(cfg.p_max, 2) + 1)]
        for statistic, p in fit_targets:
            for k in range(1, cfg.k_max + 1):
                cand = [pr for pr in preds if pr["statistic"] == statistic and pr["p"] == p
                        and pr["k"] == k]
                res.fits.append(fit_constant(res, statistic, k, cand, p=p))
    return res


# --------------------------------------------------------------------------
# constant fits

def weighted_constant(y, se, x) -> tuple[float, float]:
    """Inverse-variance least squares of y = C x through the origin: (C, SE of C)."""
    y = np.asarray(y, dtype=float)
    se = np.asarray(se, dtype=float)
    x = np.broadcast_to(np.asarray(x, dtype=float), y.shape)
    if np.any(~(se > 0)):
        raise PreconditionError("standard errors must be positive")
    w = 1.0 / se ** 2
    sxx = math.fsum((w * x * x).tolist())
    C = math.fsum((w * x * y).tolist()) / sxx
    return C, 1.0 / math.sqrt(sxx)


def fit_constant(result: ExperimentResult, statistic: str, k: int, predictions: list,
                 p: int | None = None) -> dict:
    """Fit ĉ with (scaled k-th moment) ~ ĉ^k u^(k)(a) and score it against each candidate.

    ``predictions`` are LimitPrediction objects or their dict form; all must
    share u^(k)(a).  The report never picks a winner by failing: it gives
    z = (ĉ - c)/SE(ĉ) for every candidate and names the nearest.
    """
    if len(result.per_n) < 3:
        raise PreconditionError(f"fit_constant needs >= 3 N-grid points, got {len(result.per_n)}")
    preds = [_pred_dict(pr) if isinstance(pr, LimitPrediction) else dict(pr) for pr in predictions]
    if not preds:
        raise PreconditionError("no candidate predictions given")
    u_k = preds[0]["u_k"]
    d = result.dimension
    Ns = [e["N"] for e in result.per_n]
    key = _stat_key(statistic)
    y, s = [], []
    for i in range(len(Ns)):
        st = result.stat(i, key, p)
        y.append(st["moments"][k - 1])
        s.append(st["moment_se"][k - 1])
    use = [i for i, N in enumerate(Ns) if d != 2 or N >= FIT_MIN_N_D2]
    notes = []
    if not use:
        use = list(range(len(Ns)))
        notes.append(f"no N >= {FIT_MIN_N_D2}; fitted on the whole grid")
    elif len(use) < len(Ns):
        notes.append(f"excluded N < {FIT_MIN_N_D2} (log corrections dominate)")
    C, seC = weighted_constant([y[i] for i in use], [s[i] for i in use], u_k)
    c_hat = C ** (1.0 / k) if C > 0 else math.nan
    se_hat = seC * c_hat / (k * C) if C > 0 else math.nan
    local = [(Ns[i], (y[i] / u_k) ** (1.0 / k) if y[i] > 0 else math.nan) for i in range(len(Ns))]
    vals = [v for _, v in local]
    if all(b > a for a, b in zip(vals, vals[1:])):
        trend = "increasing"
    elif all(b < a for a, b in zip(vals, vals[1:])):
        trend = "decreasing"
    else:
        trend = "non-monotone"
    cands = []
    for pr in preds:
        z = (c_hat - pr["base"]) / se_hat if se_hat > 0 else math.nan
        cands.append({"convention": pr["convention"], "constant": pr["base"], "z": z})
    nearest = min(cands, key=lambda c: abs(c["z"]) if not math.isnan(c["z"]) else math.inf)
    if d == 2:
        notes.append(f"d=2: relative corrections of order 1/log N (about {1 / math.log(Ns[-1]):.2f} "
                     f"at N={Ns[-1]}) are not removed; the fit is report-only")
    return {"statistic": statistic, "p": p, "k": k, "u_k": u_k, "slope": C, "slope_se": seC,
            "c_hat": c_hat, "c_hat_se": se_hat, "per_n_constant": [[n, v] for n, v in local],
            "trend": trend, "candidates": cands, "nearest": nearest["convention"],
            "slow_convergence": d == 2, "notes": notes}


# --------------------------------------------------------------------------
# d = 1 and biased-walk checks

def interval_density(x, a: float) -> np.ndarray:
    lo, hi = min(a, 1 - a), max(a, 1 - a)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > lo) & (x < hi)
    top = (x >= hi) & (x <= 1)
    out[mid] = lo / x[mid] ** 2
    out[top] = 1 / x[top] ** 2
    return out


def interval_cdf(x, a: float) -> np.ndarray:
    lo, hi = min(a, 1 - a), max(a, 1 - a)
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, lo, 1.0)
    below = 1 - lo / np.minimum(xc, hi)
    above = 1 - lo / hi + 1 / hi - 1 / np.maximum(xc, hi)
    return np.where(x <= lo, 0.0, np.where(xc < hi, below, np.minimum(above, 1.0)))


def interval_mean(a: float) -> float:
    lo, hi = min(a, 1 - a), max(a, 1 - a)
    return lo * math.log(hi / lo) - math.log(hi)


def d1_density_check(a: float, N: int, replicates: int, seed: int,
                     ks_tol: float = 0.01, mean_tol: float = 0.01) -> dict:
    if not 0 < a < 1:
        raise PreconditionError("a must lie in (0, 1)")
    start = min(max(int(math.floor(a * N + 0.5)), 1), N - 1)
    x = interval_ranges(N, start, replicates, seed) / N
    ks = stats.kstest(x, lambda t: interval_cdf(t, a))
    lo, hi = min(a, 1 - a), max(a, 1 - a)
    pieces = [(lo, hi), (hi, 1.0)] if hi > lo else [(hi, 1.0)]
    norm = math.fsum(integrate.quad(lambda t: float(interval_density(np.array([t]), a)[0]), s, e)[0]
                     for s, e in pieces)
    mean = math.fsum(x.tolist()) / len(x)
    exact = interval_mean(a)
    rel = mean / exact - 1
    return {"a": a, "N": N, "start": start, "replicates": replicates, "seed": seed,
            "support": [lo, 1.0], "normalization": norm, "ks": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue), "mean": mean, "mean_exact": exact,
            "mean_rel_err": rel, "mean_se": float(x.std(ddof=1) / math.sqrt(len(x))),
            "ok": bool(ks.statistic <= ks_tol and abs(rel) <= mean_tol)}


def biased_limit_check(law: WalkLaw, spec: DomainSpec, a, n_grid: Sequence[int], replicates: int,
                       seed: int, p0: float | None = None, p0_replicates: int = 20_000,
                       p0_cutoff: int = 10_000, p_max: int = 3, workers: int = 1,
                       tol: float = 0.05) -> dict:
    """R_N/N for a drifting walk against (1 - p0) c(a, D).

    The multiple range is reported against (1-p0)^2 p0^(p-1) c and against
    (1-p0)^2 p0^p c; only the range enters the verdict.
    """
    if law.kind != "biased" or not np.any(np.abs(law.mean) > 1e-12):
        raise PreconditionError("biased_limit_check needs a walk with nonzero mean")
    if spec.dimension < 2:
        raise PreconditionError("biased_limit_check needs d >= 2")
    if len(n_grid) < 2:
        raise PreconditionError("need at least two N values")
    c = spec.ray_exit(a, law.mean)
    if p0 is None:
        est = estimate_return_probability(law, p0_cutoff, p0_replicates, stream_seed(seed, 2 ** 40))
        p0v, p0se = est.p0, est.se
    else:
        p0v, p0se = float(p0), 0.0
    target = (1 - p0v) * c
    rows = []
    for N in n_grid:
        dom = spec.lattice(N)
        start = start_point(dom, a)
        S = simulate_exits(law, dom, start, stream_seed(seed, N), replicates, p_max=p_max,
                           workers=workers)
        x = S.range / N
        mr = []
        for p in range(1, p_max + 1):
            v = S.multi[:, p - 1] / N
            mr.append({"p": p, "mean": float(v.mean()), "var": float(v.var(ddof=1)),
                       "target_p_minus_1": (1 - p0v) ** 2 * p0v ** (p - 1) * c,
                       "target_p": (1 - p0v) ** 2 * p0v ** p * c})
        rows.append({"N": N, "start": list(start), "mean": float(x.mean()),
                     "var": float(x.var(ddof=1)), "multirange": mr})
    var = [r["var"] for r in rows]
    shrinking = all(b < a_ for a_, b in zip(var, var[1:]))
    var_ratio = var[-1] / var[0]
    rel = rows[-1]["mean"] / target - 1
    return {"c": c, "drift": law.mean.tolist(), "p0": p0v, "p0_se": p0se, "target": target,
            "per_n": rows, "variance_shrinks": shrinking, "variance_ratio": var_ratio,
            "mean_rel_err": rel,
            "ok": bool(shrinking and var_ratio < 0.5 and abs(rel) <= tol)}
