"""Lattice random walks stopped at exit from D_N, and their range statistics.

The heavy loops are numba kernels working on a dense padded membership mask
of the lattice box; a site is addressed by its flat index in that mask and a
step by a flat offset.  Visits are occupations at times 0 <= n < tau_N, so
the start site counts at time 0 and sum_p p * R^(p) = tau_N holds exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .domain import DomainSpec, LatticeDomain
from .errors import CapExceeded, ConfigError, DomainError, IncompatibleSamples
from .rng import SeedPolicy, binomial, next_below, next_double, seed_state

BLOCK = 100


# --------------------------------------------------------------------------
# walk laws

@dataclass(frozen=True)
class WalkLaw:
    """Finite-range step distribution on Z^d."""

    kind: str
    steps: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("simple", "mean-zero", "biased"):
            raise ConfigError(f"walk kind must be simple, mean-zero or biased, got {self.kind!r}")
        if len(self.steps) == 0 or len(self.steps) != len(self.probs):
            raise ConfigError("walk needs matching, non-empty step and probability lists")
        d = len(self.steps[0])
        if any(len(s) != d for s in self.steps):
            raise ConfigError("all steps must have the same dimension")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ConfigError("step probabilities must be nonnegative and sum to 1")
        m = self.mean
        if self.kind == "mean-zero" and np.max(np.abs(m)) > 1e-12:
            raise ConfigError(f"mean-zero walk has mean {m.tolist()}")
        if self.kind == "biased" and np.max(np.abs(m)) <= 1e-12:
            raise ConfigError("biased walk needs a nonzero mean")

    @classmethod
    def simple(cls, d: int) -> "WalkLaw":
        steps = []
        for i in range(d):
            for sgn in (1, -1):
                e = [0] * d
                e[i] = sgn
                steps.append(tuple(e))
        return cls("simple", tuple(steps), tuple([1.0 / (2 * d)] * (2 * d)))

    @classmethod
    def from_table(cls, kind: str, steps, probs) -> "WalkLaw":
        if kind == "simple":
            return cls.simple(len(steps[0]) if steps else 2)
        return cls(kind, tuple(tuple(int(v) for v in s) for s in steps),
                   tuple(float(p) for p in probs))

    @property
    def dimension(self) -> int:
        return len(self.steps[0])

    @property
    def step_array(self) -> np.ndarray:
        return np.array(self.steps, dtype=np.int64)

    @property
    def mean(self) -> np.ndarray:
        return np.array(self.probs) @ self.step_array

    @property
    def covariance(self) -> np.ndarray:
        s = self.step_array.astype(float)
        p = np.array(self.probs)
        m = p @ s
        c = s - m
        return (c * p[:, None]).T @ c

    @property
    def reach(self) -> int:
        return int(np.abs(self.step_array).max())

    def alias_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Walker alias tables (acceptance probabilities, aliases)."""
        p = np.array(self.probs, dtype=float)
        K = len(p)
        scaled = p * K
        prob = np.zeros(K)
        alias = np.zeros(K, dtype=np.int64)
        small = [i for i in range(K) if scaled[i] < 1.0]
        large = [i for i in range(K) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] = scaled[l] + scaled[s] - 1.0
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large + small:
            prob[i] = 1.0
            alias[i] = i
        return prob, alias

    def to_config(self) -> dict:
        if self.kind == "simple":
            return {"kind": "simple", "dimension": self.dimension}
        return {"kind": self.kind, "steps": [list(s) for s in self.steps], "probs": list(self.probs)}

    @classmethod
    def from_config(cls, section: dict, dimension: int) -> "WalkLaw":
        allowed = {"kind", "dimension", "steps", "probs"}
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(f"walk: unknown key(s) {sorted(unknown)}")
        kind = section.get("kind", "simple")
        if "dimension" in section and int(section["dimension"]) != dimension:
            raise ConfigError("walk.dimension does not match domain dimension")
        if kind == "simple":
            return cls.simple(dimension)
        if "steps" not in section or "probs" not in section:
            raise ConfigError(f"walk.steps and walk.probs are required for kind={kind!r}")
        law = cls.from_table(kind, section["steps"], section["probs"])
        if law.dimension != dimension:
            raise ConfigError("walk step dimension does not match domain dimension")
        return law


# --------------------------------------------------------------------------
# samples

@dataclass(frozen=True)
class VisitHistogram:
    counts: dict
    tau: int
    start: tuple[int, ...]


@dataclass(frozen=True)
class ExitSample:
    tau: int
    range: int
    multi_range: tuple[int, ...]
    overflow_sites: int = 0
    overflow_mass: int = 0
    replicate_seed: int = 0

    def r(self, p: int) -> int:
        return self.multi_range[p - 1]


def extract_statistics(hist: VisitHistogram, p_max: int, replicate_seed: int = 0) -> ExitSample:
    """Range, exact-p visit counts for p <= p_max, and the overflow above p_max."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    multi = [0] * p_max
    ovf_sites = ovf_mass = 0
    for c in hist.counts.values():
        if c <= p_max:
            multi[c - 1] += 1
        else:
            ovf_sites += 1
            ovf_mass += c
    return ExitSample(hist.tau, len(hist.counts), tuple(multi), ovf_sites, ovf_mass, replicate_seed)


# --------------------------------------------------------------------------
# numba kernels

@njit(inline="always")
def _draw_step(s, alias_p, alias_i, K):
    u = next_double(s) * K
    j = int(u)
    if j >= K:
        j = K - 1
    if u - j < alias_p[j]:
        return j
    return alias_i[j]


@njit(cache=True)
def _exit_batch(mask, offsets, alias_p, alias_i, start, seeds, step_cap, p_max,
                counts, touched, out_tau, out_range, out_multi, out_ovf_sites, out_ovf_mass):
    s = np.empty(4, dtype=np.uint64)
    K = offsets.shape[0]
    for r in range(seeds.shape[0]):
        seed_state(s, seeds[r])
        pos = start
        n = 0
        nt = 0
        while mask[pos]:
            if counts[pos] == 0:
                touched[nt] = pos
                nt += 1
            counts[pos] += 1
            n += 1
            if n > step_cap:
                for i in range(nt):
                    counts[touched[i]] = 0
                return r
            pos += offsets[_draw_step(s, alias_p, alias_i, K)]
        out_tau[r] = n
        out_range[r] = nt
        osites = 0
        omass = 0
        for i in range(nt):
            c = counts[touched[i]]
            if c <= p_max:
                out_multi[r, c - 1] += 1
            else:
                osites += 1
                omass += c
            counts[touched[i]] = 0
        out_ovf_sites[r] = osites
        out_ovf_mass[r] = omass
    return -1


@njit(cache=True)
def _exit_single(mask, offsets, alias_p, alias_i, start, seed, step_cap, counts, touched):
    s = np.empty(4, dtype=np.uint64)
    seed_state(s, seed)
    K = offsets.shape[0]
    pos = start
    n = 0
    nt = 0
    while mask[pos]:
        if counts[pos] == 0:
            touched[nt] = pos
            nt += 1
        counts[pos] += 1
        n += 1
        if n > step_cap:
            return -1, nt
        pos += offsets[_draw_step(s, alias_p, alias_i, K)]
    return n, nt


@njit(cache=True)
def _hit_batch(mask, offsets, alias_p, alias_i, start, target, seeds, step_cap):
    """1 if the walk from ``start`` reaches ``target`` at some time n >= 1 before exiting."""
    s = np.empty(4, dtype=np.uint64)
    K = offsets.shape[0]
    out = np.zeros(seeds.shape[0], dtype=np.uint8)
    for r in range(seeds.shape[0]):
        seed_state(s, seeds[r])
        pos = start
        n = 0
        while True:
            pos += offsets[_draw_step(s, alias_p, alias_i, K)]
            n += 1
            if not mask[pos]:
                break
            if pos == target:
                out[r] = 1
                break
            if n > step_cap:
                return out, r
    return out, -1


@njit(cache=True)
def _target_visits_batch(mask, offsets, alias_p, alias_i, start, target, seeds, step_cap):
    """Number of occupations of ``target`` at times 0 <= n < tau_N."""
    s = np.empty(4, dtype=np.uint64)
    K = offsets.shape[0]
    out = np.zeros(seeds.shape[0], dtype=np.int64)
    for r in range(seeds.shape[0]):
        seed_state(s, seeds[r])
        pos = start
        n = 0
        c = 0
        while mask[pos]:
            if pos == target:
                c += 1
            n += 1
            if n > step_cap:
                return out, r
            pos += offsets[_draw_step(s, alias_p, alias_i, K)]
        out[r] = c
    return out, -1


# --------------------------------------------------------------------------
# lattice plumbing

@lru_cache(maxsize=16)
def _geometry(spec: DomainSpec, N: int, reach: int):
    dom = LatticeDomain(spec, N)
    mask, origin = dom.mask(pad=reach)
    strides = np.array([int(np.prod(mask.shape[i + 1:])) for i in range(mask.ndim)], dtype=np.int64)
    return dom, np.ascontiguousarray(mask.ravel()), origin, strides, mask.shape


def _flat(point, origin, strides) -> int:
    return int(((np.asarray(point, dtype=np.int64) - origin) * strides).sum())


def _law_arrays(law: WalkLaw, strides):
    offsets = law.step_array @ strides
    p, a = law.alias_tables()
    return offsets.astype(np.int64), p, a


def default_step_cap(N: int) -> int:
    return 10_000 * N * N


def _check_start(dom: LatticeDomain, law: WalkLaw, start):
    if law.dimension != dom.dimension:
        raise DomainError("walk law and domain dimensions differ")
    start = tuple(int(v) for v in np.atleast_1d(start))
    if len(start) != dom.dimension or not dom.contains(start):
        raise DomainError(f"start {start} is not in D_N")
    return start


def run_until_exit(law: WalkLaw, dom: LatticeDomain, start, seed: int,
                   step_cap: int | None = None) -> VisitHistogram:
    """Simulate from ``start`` until the first exit from D_N; return the visit histogram."""
    start = _check_start(dom, law, start)
    cap = default_step_cap(dom.N) if step_cap is None else int(step_cap)
    if cap <= 0:
        raise ValueError("step_cap must be positive")
    _, mask, origin, strides, shape = _geometry(dom.spec, dom.N, law.reach)
    offsets, ap, ai = _law_arrays(law, strides)
    counts = np.zeros(mask.size, dtype=np.int64)
    touched = np.zeros(mask.size, dtype=np.int64)
    tau, nt = _exit_single(mask, offsets, ap, ai, _flat(start, origin, strides),
                           np.uint64(seed), cap, counts, touched)
    if tau < 0:
        raise CapExceeded(f"walk exceeded step cap {cap}")
    flat = touched[:nt]
    coords = np.stack(np.unravel_index(flat, shape), axis=1) + origin
    hist = {tuple(int(v) for v in c): int(counts[f]) for c, f in zip(coords, flat)}
    return VisitHistogram(hist, int(tau), start)


# --------------------------------------------------------------------------
# sample sets and their merge

@dataclass(frozen=True)
class SampleSet:
    """Per-replicate exit statistics for one (law, domain, N, start) configuration.

    ``merge`` is a keyed union on replicate index, so any partition of the
    same replicates merges to identical arrays and identical summaries.
    """

    key: tuple
    replicate: np.ndarray
    seed: np.ndarray
    tau: np.ndarray
    range: np.ndarray
    multi: np.ndarray
    overflow_sites: np.ndarray
    overflow_mass: np.ndarray

    def __len__(self) -> int:
        return len(self.replicate)

    @property
    def p_max(self) -> int:
        return self.multi.shape[1]

    def sample(self, i: int) -> ExitSample:
        return ExitSample(int(self.tau[i]), int(self.range[i]), tuple(int(v) for v in self.multi[i]),
                          int(self.overflow_sites[i]), int(self.overflow_mass[i]), int(self.seed[i]))

    def merge(self, other: "SampleSet") -> "SampleSet":
        return merge(self, other)

    def summary(self, k_max: int = 3) -> dict:
        return summarize(self, k_max)


def merge(*sets: SampleSet) -> SampleSet:
    if not sets:
        raise ValueError("nothing to merge")
    key = sets[0].key
    for s in sets[1:]:
        if s.key != key:
            raise IncompatibleSamples(f"cannot merge samples of {s.key} into {key}")
    rep = np.concatenate([s.replicate for s in sets])
    order = np.argsort(rep, kind="stable")
    rep = rep[order]
    if len(rep) > 1 and np.any(rep[1:] == rep[:-1]):
        raise IncompatibleSamples("replicate indices overlap")

    def cat(name):
        return np.concatenate([getattr(s, name) for s in sets])[order]

    return SampleSet(key, rep, cat("seed"), cat("tau"), cat("range"), cat("multi"),
                     cat("overflow_sites"), cat("overflow_mass"))


def batch_mean(values, replicate, block: int = BLOCK) -> tuple[float, float]:
    """Mean and batch-means standard error over replicate blocks of ``block``.

    Sums use ``math.fsum`` so the result does not depend on sample order.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values.tolist()) / n
    ids = np.asarray(replicate) // block
    uniq, inv = np.unique(ids, return_inverse=True)
    nb = len(uniq)
    if nb < 2:
        if n < 2:
            return mean, math.nan
        var = math.fsum(((values - mean) ** 2).tolist()) / (n - 1)
        return mean, math.sqrt(var / n)
    sums = np.zeros(nb)
    cnts = np.bincount(inv, minlength=nb).astype(float)
    for b in range(nb):
        sums[b] = math.fsum(values[inv == b].tolist())
    means = sums / cnts
    w = cnts / n
    se2 = math.fsum((w * w * (means - mean) ** 2).tolist()) * nb / (nb - 1)
    return mean, math.sqrt(se2)


def falling(x, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    for j in range(k):
        out = out * (x - j)
    return out


def _describe(values, replicate, k_max: int) -> dict:
    v = np.asarray(values, dtype=float)
    moments, moment_se, fact, fact_se = [], [], [], []
    for k in range(1, k_max + 1):
        m, se = batch_mean(v ** k, replicate)
        moments.append(m)
        moment_se.append(se)
        f, fse = batch_mean(falling(v, k), replicate)
        fact.append(f)
        fact_se.append(fse)
    return {"mean": moments[0], "se": moment_se[0], "moments": moments, "moment_se": moment_se,
            "factorial": fact, "factorial_se": fact_se}


def summarize(samples: SampleSet, k_max: int = 3) -> dict:
    rep = samples.replicate
    out = {"n": len(samples),
           "tau": _describe(samples.tau, rep, k_max),
           "range": _describe(samples.range, rep, k_max),
           "multirange": {str(p): _describe(samples.multi[:, p - 1], rep, k_max)
                          for p in range(1, samples.p_max + 1)}}
    return out


# --------------------------------------------------------------------------
# ensembles

def _block_job(args):
    (law, spec, N, start, master, lo, hi, p_max, cap) = args
    _, mask, origin, strides, _ = _geometry(spec, N, law.reach)
    offsets, ap, ai = _law_arrays(law, strides)
    seeds = SeedPolicy(master).seeds(lo, hi)
    n = hi - lo
    counts = np.zeros(mask.size, dtype=np.int32)
    touched = np.zeros(mask.size, dtype=np.int64)
    tau = np.zeros(n, dtype=np.int64)
    rng_ = np.zeros(n, dtype=np.int64)
    multi = np.zeros((n, p_max), dtype=np.int64)
    osites = np.zeros(n, dtype=np.int64)
    omass = np.zeros(n, dtype=np.int64)
    bad = _exit_batch(mask, offsets, ap, ai, _flat(start, origin, strides), seeds, cap, p_max,
                      counts, touched, tau, rng_, multi, osites, omass)
    if bad >= 0:
        raise CapExceeded(f"replicate {lo + bad} exceeded step cap {cap}")
    return (np.arange(lo, hi, dtype=np.int64), seeds, tau, rng_, multi, osites, omass)


def _pool_map(fn, jobs: list, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    import multiprocessing as mp
    with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork")) as ex:
        return list(ex.map(fn, jobs))


def simulate_exits(law: WalkLaw, dom: LatticeDomain, start, master_seed: int, replicates: int,
                   p_max: int = 8, step_cap: int | None = None, workers: int = 1,
                   first_index: int = 0, chunk: int = 1000) -> SampleSet:
    """Run ``replicates`` independent exits; replicate i uses stream seed(master, i)."""
    start = _check_start(dom, law, start)
    cap = default_step_cap(dom.N) if step_cap is None else int(step_cap)
    key = (law, dom.spec, dom.N, start, p_max)
    bounds = list(range(first_index, first_index + replicates, chunk)) + [first_index + replicates]
    jobs = [(law, dom.spec, dom.N, start, master_seed, lo, hi, p_max, cap)
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    parts = _pool_map(_block_job, jobs, workers)
    sets = [SampleSet(key, *p) for p in parts]
    return merge(*sets)


def hit_frequencies(law: WalkLaw, dom: LatticeDomain, start, target, master_seed: int,
                    replicates: int, step_cap: int | None = None) -> np.ndarray:
    """Indicator per replicate that the walk hits ``target`` at a time n >= 1 before exit."""
    start = _check_start(dom, law, start)
    target = _check_start(dom, law, target)
    cap = default_step_cap(dom.N) if step_cap is None else int(step_cap)
    _, mask, origin, strides, _ = _geometry(dom.spec, dom.N, law.reach)
    offsets, ap, ai = _law_arrays(law, strides)
    seeds = SeedPolicy(master_seed).seeds(0, replicates)
    out, bad = _hit_batch(mask, offsets, ap, ai, _flat(start, origin, strides),
                          _flat(target, origin, strides), seeds, cap)
    if bad >= 0:
        raise CapExceeded(f"replicate {bad} exceeded step cap {cap}")
    return out


def target_visit_counts(law: WalkLaw, dom: LatticeDomain, start, target, master_seed: int,
                        replicates: int, step_cap: int | None = None) -> np.ndarray:
    start = _check_start(dom, law, start)
    target = _check_start(dom, law, target)
    cap = default_step_cap(dom.N) if step_cap is None else int(step_cap)
    _, mask, origin, strides, _ = _geometry(dom.spec, dom.N, law.reach)
    offsets, ap, ai = _law_arrays(law, strides)
    seeds = SeedPolicy(master_seed).seeds(0, replicates)
    out, bad = _target_visits_batch(mask, offsets, ap, ai, _flat(start, origin, strides),
                                    _flat(target, origin, strides), seeds, cap)
    if bad >= 0:
        raise CapExceeded(f"replicate {bad} exceeded step cap {cap}")
    return out


# --------------------------------------------------------------------------
# unconstrained walks on Z^d

@njit(inline="always")
def _hash_slot(key, mask_bits):
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    return np.int64(h >> np.uint64(64 - mask_bits))


@njit(cache=True)
def _grow(keys, vals, bits):
    nbits = bits + 1
    nkeys = np.full(1 << nbits, -1, dtype=np.int64)
    nvals = np.zeros(1 << nbits, dtype=np.int64)
    cap = (1 << nbits) - 1
    for i in range(keys.shape[0]):
        k = keys[i]
        if k >= 0:
            j = _hash_slot(k, nbits)
            while nkeys[j] >= 0:
                j = (j + 1) & cap
            nkeys[j] = k
            nvals[j] = vals[i]
    return nkeys, nvals, nbits


@njit(cache=True)
def _free_profile(steps, alias_p, alias_i, seed, checkpoints, p_max, bits_per_axis,
                  out_range, out_multi):
    """One walk X_0..X_n on Z^d; records range and exact-p counts of {X_0..X_n} at checkpoints.

    Sites are held in an open-addressing table keyed by packed coordinates.
    Returns 0, or -1 if a coordinate left the packable window.
    """
    d = steps.shape[1]
    K = steps.shape[0]
    s = np.empty(4, dtype=np.uint64)
    seed_state(s, seed)
    bits = 12
    keys = np.full(1 << bits, -1, dtype=np.int64)
    vals = np.zeros(1 << bits, dtype=np.int64)
    used = 0
    half = np.int64(1) << (bits_per_axis - 1)
    pos = np.zeros(d, dtype=np.int64)
    multi = np.zeros(p_max + 2, dtype=np.int64)
    rng_ = 0
    ci = 0
    n_end = checkpoints[checkpoints.shape[0] - 1]
    n = 0
    while True:
        key = np.int64(0)
        for i in range(d):
            c = pos[i] + half
            if c < 0 or c >= 2 * half:
                return -1
            key = (key << bits_per_axis) | c
        cap = (1 << bits) - 1
        j = _hash_slot(key, bits)
        while keys[j] >= 0 and keys[j] != key:
            j = (j + 1) & cap
        if keys[j] < 0:
            keys[j] = key
            vals[j] = 1
            used += 1
            rng_ += 1
            if p_max >= 1:
                multi[1] += 1
            if 2 * used > (1 << bits):
                keys, vals, bits = _grow(keys, vals, bits)
        else:
            c_old = vals[j]
            vals[j] = c_old + 1
            if c_old <= p_max:
                multi[c_old] -= 1
            if c_old + 1 <= p_max:
                multi[c_old + 1] += 1
        while ci < checkpoints.shape[0] and checkpoints[ci] == n:
            out_range[ci] = rng_
            for p in range(1, p_max + 1):
                out_multi[ci, p - 1] = multi[p]
            ci += 1
        if n >= n_end:
            break
        k = _draw_step(s, alias_p, alias_i, K)
        for i in range(d):
            pos[i] += steps[k, i]
        n += 1
    return 0


@dataclass(frozen=True)
class RangeProfile:
    checkpoints: np.ndarray
    range: np.ndarray          # shape (replicates, len(checkpoints))
    multi: np.ndarray          # shape (replicates, len(checkpoints), p_max)


def unconstrained_range_profile(law: WalkLaw, checkpoints: Sequence[int], seed: int,
                                p_max: int = 4, replicates: int = 1) -> RangeProfile:
    """Range and p-multiple range of {X_0, ..., X_n} for a walk started at 0, at each checkpoint n.

    Replicate i uses stream seed(seed, i).  With this convention the range at
    n = 1 is 2 for any law without a zero step.
    """
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or len(cps) == 0 or np.any(np.diff(cps) <= 0) or cps[0] < 0:
        raise ValueError("checkpoints must be a nonempty increasing list of nonnegative integers")
    d = law.dimension
    bits = 63 // d
    if bits > 31:
        bits = 31
    ap, ai = law.alias_tables()
    rng_ = np.zeros((replicates, len(cps)), dtype=np.int64)
    multi = np.zeros((replicates, len(cps), p_max), dtype=np.int64)
    policy = SeedPolicy(seed)
    for r in range(replicates):
        status = _free_profile(law.step_array, ap, ai, np.uint64(policy.seed(r)), cps, p_max,
                               bits, rng_[r], multi[r])
        if status != 0:
            raise CapExceeded("walk left the packable coordinate window")
    return RangeProfile(cps, rng_, multi)


@njit(cache=True)
def _returns_jump(d, seeds, cutoff):
    """Return time (or 0 if none by ``cutoff``) of simple random walk on Z^d from the origin.

    From L1 distance r the origin cannot be reached in fewer than r steps, so
    r - 1 steps are taken at once: the axis allocation is multinomial and each
    axis displacement is 2 Bin(n_i, 1/2) - n_i, which is the exact law of the
    (r - 1)-step displacement.
    """
    s = np.empty(4, dtype=np.uint64)
    out = np.zeros(seeds.shape[0], dtype=np.int64)
    x = np.zeros(d, dtype=np.int64)
    for rep in range(seeds.shape[0]):
        seed_state(s, seeds[rep])
        for i in range(d):
            x[i] = 0
        j = next_below(s, 2 * d)
        x[j // 2] += 1 if j % 2 == 0 else -1
        n = 1
        while True:
            r = 0
            for i in range(d):
                r += abs(x[i])
            if r == 0:
                out[rep] = n
                break
            if cutoff - n < r:
                break
            if r == 1:
                j = next_below(s, 2 * d)
                x[j // 2] += 1 if j % 2 == 0 else -1
                n += 1
                continue
            k = r - 1
            n += k
            left = k
            for i in range(d):
                if i == d - 1:
                    ni = left
                else:
                    ni = binomial(s, left, 1.0 / (d - i))
                left -= ni
                x[i] += 2 * binomial(s, ni, 0.5) - ni
    return out


@njit(cache=True)
def _returns_stepwise(steps, alias_p, alias_i, seeds, cutoff):
    d = steps.shape[1]
    K = steps.shape[0]
    s = np.empty(4, dtype=np.uint64)
    out = np.zeros(seeds.shape[0], dtype=np.int64)
    x = np.zeros(d, dtype=np.int64)
    for rep in range(seeds.shape[0]):
        seed_state(s, seeds[rep])
        for i in range(d):
            x[i] = 0
        for n in range(1, cutoff + 1):
            k = _draw_step(s, alias_p, alias_i, K)
            at0 = True
            for i in range(d):
                x[i] += steps[k, i]
                if x[i] != 0:
                    at0 = False
            if at0:
                out[rep] = n
                break
    return out


@dataclass(frozen=True)
class ReturnEstimate:
    p0: float
    se: float
    n_cutoff: int
    replicates: int
    tail_note: str

    def __iter__(self):
        return iter((self.p0, self.se))


def return_times(law: WalkLaw, n_cutoff: int, replicates: int, seed: int,
                 method: str = "auto") -> np.ndarray:
    seeds = SeedPolicy(seed).seeds(0, replicates)
    if method == "auto":
        method = "jump" if law.kind == "simple" else "stepwise"
    if method == "jump":
        if law.kind != "simple":
            raise ValueError("jump acceleration is only exact for the simple walk")
        return _returns_jump(law.dimension, seeds, int(n_cutoff))
    ap, ai = law.alias_tables()
    return _returns_stepwise(law.step_array, ap, ai, seeds, int(n_cutoff))


def estimate_return_probability(d: int | WalkLaw, n_cutoff: int, replicates: int, seed: int,
                                method: str = "auto") -> ReturnEstimate:
    """Fraction of walks from the origin that return by time ``n_cutoff``.

    ``d`` is a dimension (simple walk) or an explicit law.  The estimate is
    biased low by P(first return after n_cutoff), which for the simple walk
    in d >= 3 decays like n_cutoff^(1 - d/2).
    """
    law = WalkLaw.simple(d) if isinstance(d, int) else d
    dim = law.dimension
    if law.kind != "biased" and dim <= 2:
        raise DomainError(f"mean-zero walks in d={dim} are recurrent (p0 = 1); nothing to estimate")
    if n_cutoff < 10_000:
        raise ValueError("n_cutoff must be >= 1e4")
    t = return_times(law, n_cutoff, replicates, seed, method)
    hits = (t > 0).astype(float)
    p = float(hits.mean())
    se = math.sqrt(max(p * (1 - p), 0.0) / replicates)
    note = (f"biased low by P(first return after {n_cutoff}); "
            + (f"O(n^{1 - dim / 2:g}) for mean-zero walks" if law.kind != "biased"
               else "exponentially small for drifting walks"))
    return ReturnEstimate(p, se, int(n_cutoff), int(replicates), note)


# --------------------------------------------------------------------------
# d = 1 range via the extension chain

@njit(cache=True)
def _interval_range_chain(N, start, seeds):
    """Range of simple walk on {1..N-1} from ``start`` up to exit.

    The visited set is an interval [lo, hi] with the walker at a freshly
    reached end; the next extension is on the same side with gambler's-ruin
    probability R/(R+1), R = hi - lo + 1.  Exit happens when an extension
    lands on 0 or N.
    """
    s = np.empty(4, dtype=np.uint64)
    out = np.zeros(seeds.shape[0], dtype=np.int64)
    for rep in range(seeds.shape[0]):
        seed_state(s, seeds[rep])
        lo = start
        hi = start
        at_hi = True
        while True:
            R = hi - lo + 1
            same = next_double(s) * (R + 1) < R
            if same == at_hi:
                nxt = hi + 1
                if nxt >= N:
                    break
                hi = nxt
                at_hi = True
            else:
                nxt = lo - 1
                if nxt <= 0:
                    break
                lo = nxt
                at_hi = False
        out[rep] = hi - lo + 1
    return out


def interval_ranges(N: int, start: int, replicates: int, seed: int) -> np.ndarray:
    """R_N for simple walk from ``start`` on D_N = {1, ..., N-1}, sampled via the extension chain."""
    if not 0 < start < N:
        raise DomainError("start must lie in {1, ..., N-1}")
    seeds = SeedPolicy(seed).seeds(0, replicates)
    return _interval_range_chain(int(N), int(start), seeds)
