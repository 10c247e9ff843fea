"""Hitting probabilities and conductances on the cube (0, N)^d from the discrete sine series.

With phi_k(x) = prod_i sqrt(2/N) sin(k_i pi x_i / N) and
lambda_k = 1 - (1/d) sum_i cos(k_i pi / N), the Green function of the walk
killed on exit is G(b, x) = sum_k phi_k(b) phi_k(x) / lambda_k, the
conductance is g(x) = 1 / G(x, x) and P_b(x) = g(x) G(b, x).  The d = 2
case is the primary target; d = 3 uses the same product construction.

``exact_hitting_solve`` is the independent route: a sparse solve of the
first-step equations on any lattice domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import DomainSpec, LatticeDomain
from .errors import DomainError, SizeExceeded
from .rng import SeedPolicy

MAX_UNKNOWNS = 100_000

# Fault injection for the verification harness; see ``verify``.
FAULTS: set[str] = set()


def sine_table(N: int) -> np.ndarray:
    """S[k-1, l-1] = sin(k pi l / N) for 1 <= k, l <= N-1, with exact argument reduction."""
    k = np.arange(1, N, dtype=np.int64)
    kl = np.outer(k, k) % (2 * N)
    S = np.sin(np.pi * kl / N)
    S[kl == 0] = 0.0
    S[kl == N] = 0.0
    if "sine-table" in FAULTS and N > 2:
        S = S.copy()
        S[0, 0] *= 1.01
    return S


def eigenvalues(N: int, d: int = 2) -> np.ndarray:
    """lambda_k = 1 - (1/d) sum_i cos(k_i pi / N) as a d-dimensional array over 1..N-1."""
    k = np.arange(1, N)
    c = np.cos(np.pi * k / N)
    c[2 * k == N] = 0.0
    lam = np.zeros((N - 1,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = N - 1
        lam = lam + c.reshape(shape)
    return 1.0 - lam / d


def orthogonality_defect(N: int) -> float:
    """max |sum_l sin(n pi l/N) sin(n' pi l/N) - (N/2) 1(n = n')| over 1 <= n, n' <= N-1."""
    S = sine_table(N)
    return float(np.abs(S @ S.T - (N / 2) * np.eye(N - 1)).max())


def _check_interior(N: int, *pts):
    for p in pts:
        if any(not 0 < int(v) < N for v in p):
            raise DomainError(f"{tuple(p)} is not interior to (0, {N})^d")


@dataclass(frozen=True)
class SpectralField:
    """Conductance table g_N on the interior of (0, N)^d, plus its sine and eigenvalue tables."""

    N: int
    d: int
    g: np.ndarray = field(repr=False)
    sines: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)

    def at(self, x) -> float:
        _check_interior(self.N, x)
        return float(self.g[tuple(int(v) - 1 for v in x)])

    def midpoint(self) -> tuple[int, ...]:
        return (self.N // 2,) * self.d

    def rows(self):
        """(x_1, ..., x_d, g) rows in lexicographic order."""
        idx = np.argwhere(np.ones(self.g.shape, dtype=bool)) + 1
        return np.column_stack([idx, self.g.ravel()])


def inverse_conductance_table(N: int, d: int = 2) -> np.ndarray:
    """G(x, x) = 1 / g_N(x) for every interior x, computed as a tensor contraction."""
    if N < 2:
        raise ValueError("N must be >= 2")
    S2 = sine_table(N) ** 2
    W = 1.0 / eigenvalues(N, d)
    scale = (2.0 / N) ** d
    if d == 1:
        return scale * (S2 @ W)
    if d == 2:
        return scale * (S2.T @ W @ S2)
    if d == 3:
        T = np.einsum("ia,abc->ibc", S2.T, W, optimize=True)
        T = np.einsum("jb,ibc->ijc", S2.T, T, optimize=True)
        return scale * np.einsum("kc,ijc->ijk", S2.T, T, optimize=True)
    raise ValueError("sine series implemented for d <= 3")


def conductance_table(N: int, d: int = 2) -> SpectralField:
    """Exact g_N(x) = P_x(exit before returning to x) for all interior x of (0, N)^d."""
    Ginv = inverse_conductance_table(N, d)
    return SpectralField(int(N), int(d), 1.0 / Ginv, sine_table(N), eigenvalues(N, d))


def green_series(N: int, b, x) -> float:
    """G(b, x) for the walk on (0, N)^d killed on exit, by the sine series.

    The series has signed terms; it is reduced one axis at a time and the
    last axis is summed with ``math.fsum``.
    """
    d = len(x)
    _check_interior(N, b, x)
    S = sine_table(N)
    W = 1.0 / eigenvalues(N, d)
    vecs = [S[:, int(bi) - 1] * S[:, int(xi) - 1] for bi, xi in zip(b, x)]
    T = W
    for v in vecs[:-1]:
        T = np.tensordot(v, T, axes=(0, 0))
    return (2.0 / N) ** d * math.fsum((T * vecs[-1]).tolist())


def hitting_probability(N: int, b, x, d: int | None = None) -> float:
    """P_b(x): probability the walk from b reaches x before leaving (0, N)^d."""
    b = tuple(int(v) for v in b)
    x = tuple(int(v) for v in x)
    if len(b) != len(x):
        raise DomainError("b and x must have the same dimension")
    if b == x:
        _check_interior(N, x)
        return 1.0
    gxx = green_series(N, x, x)
    return green_series(N, b, x) / gxx


def hitting_table_series(N: int, x) -> np.ndarray:
    """P_b(x) for every interior b of (0, N)^2, as an (N-1) x (N-1) array indexed by b - 1."""
    x = tuple(int(v) for v in x)
    if len(x) != 2:
        raise ValueError("table form implemented for d = 2")
    _check_interior(N, x)
    S = sine_table(N)
    W = 1.0 / eigenvalues(N, 2)
    s1 = S[:, x[0] - 1]
    s2 = S[:, x[1] - 1]
    G = (4.0 / N ** 2) * (S.T * s1) @ W @ (S * s2[:, None])
    P = G / G[x[0] - 1, x[1] - 1]
    P[x[0] - 1, x[1] - 1] = 1.0
    return P


# --------------------------------------------------------------------------
# the linear-solve oracle

@dataclass(frozen=True)
class HittingTable:
    """P_b(x) for a fixed target x over all b in D_N; zero off D_N and one at x."""

    domain: LatticeDomain
    target: tuple[int, ...]
    points: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    g: float = 0.0
    residual: float = 0.0

    def __call__(self, b) -> float:
        b = tuple(int(v) for v in b)
        i = self._index().get(b)
        return 0.0 if i is None else float(self.values[i])

    def _index(self) -> dict:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {tuple(int(v) for v in p): i for i, p in enumerate(self.points)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def harmonicity_residual(self) -> float:
        """max over b in D_N, b != x, of |P(b) - mean of P over the 2d neighbours|."""
        d = self.points.shape[1]
        worst = 0.0
        for p, v in zip(self.points, self.values):
            t = tuple(int(c) for c in p)
            if t == self.target:
                continue
            acc = 0.0
            for i in range(d):
                for sgn in (1, -1):
                    q = list(t)
                    q[i] += sgn
                    acc += self(q)
            worst = max(worst, abs(v - acc / (2 * d)))
        return worst


def exact_hitting_solve(dom: LatticeDomain, x, max_unknowns: int = MAX_UNKNOWNS) -> HittingTable:
    """Solve P(b) = mean_neighbours P for b != x, P(x) = 1, P = 0 off D_N; also g(x)."""
    x = tuple(int(v) for v in x)
    if not dom.contains(x):
        raise DomainError(f"{x} is not in D_N")
    pts = dom.enumerate_interior()
    M = len(pts)
    if M > max_unknowns:
        raise SizeExceeded(f"{M} unknowns exceeds the cap of {max_unknowns}")
    d = dom.dimension
    index = {tuple(int(v) for v in p): i for i, p in enumerate(pts)}
    xi = index[x]
    rows, cols, vals = [], [], []
    rhs = np.zeros(M)
    for i, p in enumerate(pts):
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        if i == xi:
            rhs[i] = 1.0
            continue
        t = tuple(int(c) for c in p)
        for a in range(d):
            for sgn in (1, -1):
                q = list(t)
                q[a] += sgn
                j = index.get(tuple(q))
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(-1.0 / (2 * d))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(M, M))
    P = spla.spsolve(A.tocsc(), rhs)
    res = float(np.abs(A @ P - rhs).max())
    acc = 0.0
    for a in range(d):
        for sgn in (1, -1):
            q = list(x)
            q[a] += sgn
            j = index.get(tuple(q))
            if j is not None:
                acc += P[j]
    g = 1.0 - acc / (2 * d)
    return HittingTable(dom, x, pts, P, float(g), res)


def cube_domain(N: int, d: int = 2) -> LatticeDomain:
    return (DomainSpec.unit_square() if d == 2 else DomainSpec.cube(d)).lattice(N)


# --------------------------------------------------------------------------
# local conductance and bounds

def local_conductance(width: int, d: int = 2) -> float:
    """Escape probability from the centre of a lattice box of the given width before returning.

    Odd widths use floor(width / 2) sites of clearance on each side, i.e. the
    even box of width 2 floor(width / 2).
    """
    if width < 2:
        raise ValueError("box width must be >= 2")
    M = 2 * (int(width) // 2)
    c = (M // 2,) * d
    return 1.0 / green_series(M, c, c)


def midband_bounds(N: int, table: SpectralField | None = None) -> dict:
    """Inverse conductance against (1/pi^2) log N at the midpoint and (1/(2 pi^2)) log N on the midband."""
    t = table if table is not None else conductance_table(N)
    w = N / math.log(N) ** 2
    coords = np.arange(1, N)
    band = (coords >= w) & (coords <= N - w)
    ginv = 1.0 / t.g
    mid = t.midpoint()
    mid_val = float(ginv[tuple(m - 1 for m in mid)])
    band_min = float(ginv[np.ix_(band, band)].min())
    logN = math.log(N)
    return {"N": N, "width": w, "midpoint_inverse": mid_val,
            "midpoint_bound": logN / math.pi ** 2,
            "midband_min_inverse": band_min,
            "midband_bound": logN / (2 * math.pi ** 2),
            "midband_min_over_logN": band_min / logN,
            "midpoint_ok": mid_val >= logN / math.pi ** 2,
            "midband_ok": band_min >= logN / (2 * math.pi ** 2)}


@dataclass(frozen=True)
class BoundCheck:
    N: int
    b: tuple
    x: tuple
    p: int
    q_hat: float
    se: float
    g: float
    P: float

    @property
    def bound(self) -> float:
        return self.g * self.P

    @property
    def ok(self) -> bool:
        return self.q_hat <= self.bound + 4 * self.se


def multirange_bound_check(N: int, b, x, p: int, replicates: int, seed: int) -> BoundCheck:
    """Monte Carlo P_b(x visited exactly p times before exit) against g_N(x) P_b(x)."""
    from .walks import WalkLaw, target_visit_counts

    b = tuple(int(v) for v in b)
    x = tuple(int(v) for v in x)
    dom = cube_domain(N, len(x))
    counts = target_visit_counts(WalkLaw.simple(len(x)), dom, b, x, seed, replicates)
    hits = (counts == p).astype(float)
    q = float(hits.mean())
    se = math.sqrt(max(q * (1 - q), 1.0 / replicates) / replicates)
    g = 1.0 / green_series(N, x, x)
    return BoundCheck(N, b, x, p, q, se, g, hitting_probability(N, b, x))
