"""Continuum domains D and their lattice scalings D_N = {x in Z^d : x/N in D}.

Lattice membership is decided exactly.  Shape parameters are held as
``Fraction``; each predicate is first evaluated in floating point and any
point whose float value falls within a rounding margin of zero is re-decided
with Python integers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, DomainError

SHAPES = ("unit-square", "cube", "ball", "polygon", "cardioid", "interval")

_FILTER_EPS = 1e-11


def as_fraction(v: Any) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        # decimal literal in a config means the decimal, not its binary rounding
        return Fraction(repr(v))
    return Fraction(v)


def _lcm(values) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), values, 1)


@dataclass(frozen=True)
class DomainSpec:
    """An open bounded domain D in R^d.

    Use the constructors (:meth:`unit_square`, :meth:`cube`, :meth:`ball`,
    :meth:`polygon`, :meth:`cardioid`, :meth:`interval`) rather than the raw
    fields.
    """

    shape: str
    dimension: int
    center: tuple[Fraction, ...] | None = None
    radius: Fraction | None = None
    vertices: tuple[tuple[Fraction, Fraction], ...] | None = None
    scale: Fraction | None = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def unit_square(cls) -> "DomainSpec":
        return cls("unit-square", 2)

    @classmethod
    def cube(cls, dimension: int = 2) -> "DomainSpec":
        if dimension < 1:
            raise DomainError("cube dimension must be positive")
        return cls("cube", int(dimension))

    @classmethod
    def interval(cls) -> "DomainSpec":
        return cls("interval", 1)

    @classmethod
    def ball(cls, center: Sequence, radius) -> "DomainSpec":
        c = tuple(as_fraction(v) for v in center)
        r = as_fraction(radius)
        if r <= 0:
            raise DomainError("ball radius must be positive")
        return cls("ball", len(c), center=c, radius=r)

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence]) -> "DomainSpec":
        verts = tuple((as_fraction(x), as_fraction(y)) for x, y in vertices)
        if len(verts) < 3:
            raise DomainError("polygon needs at least 3 vertices")
        if not _is_simple_polygon(verts):
            raise DomainError("polygon vertices do not form a simple closed curve")
        area2 = sum(a[0] * b[1] - b[0] * a[1] for a, b in zip(verts, verts[1:] + verts[:1]))
        if area2 == 0:
            raise DomainError("polygon has zero area")
        return cls("polygon", 2, vertices=verts)

    @classmethod
    def cardioid(cls, scale=Fraction(9, 25)) -> "DomainSpec":
        """Cardioid r = s (1 + cos t) about a pole, translated to sit centred in (0,1)^2."""
        s = as_fraction(scale)
        # half-height is 3*sqrt(3)/4 * s; keep it inside the unit box
        if s <= 0 or 27 * s * s >= 4:
            raise DomainError("cardioid scale must lie in (0, 2/sqrt(27))")
        pole = (Fraction(1, 2) - Fraction(7, 8) * s, Fraction(1, 2))
        return cls("cardioid", 2, center=pole, scale=s)

    # -- config round trip ------------------------------------------------
    def to_config(self) -> dict:
        out: dict[str, Any] = {"shape": self.shape, "dimension": self.dimension}
        if self.shape == "ball":
            out["center"] = [str(v) for v in self.center]
            out["radius"] = str(self.radius)
        elif self.shape == "polygon":
            out["vertices"] = [[str(x), str(y)] for x, y in self.vertices]
        elif self.shape == "cardioid":
            out["scale"] = str(self.scale)
        return out

    @classmethod
    def from_config(cls, section: dict) -> "DomainSpec":
        allowed = {"shape", "dimension", "center", "radius", "vertices", "scale"}
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(f"domain: unknown key(s) {sorted(unknown)}")
        if "shape" not in section:
            raise ConfigError("domain.shape is required")
        shape = section["shape"]
        try:
            if shape == "unit-square":
                spec = cls.unit_square()
            elif shape == "cube":
                spec = cls.cube(int(section.get("dimension", 2)))
            elif shape == "interval":
                spec = cls.interval()
            elif shape == "ball":
                if "center" not in section or "radius" not in section:
                    raise ConfigError("domain.center and domain.radius are required for a ball")
                spec = cls.ball(section["center"], section["radius"])
            elif shape == "polygon":
                if "vertices" not in section:
                    raise ConfigError("domain.vertices is required for a polygon")
                spec = cls.polygon(section["vertices"])
            elif shape == "cardioid":
                spec = cls.cardioid(section.get("scale", Fraction(9, 25)))
            else:
                raise ConfigError(f"domain.shape must be one of {SHAPES}, got {shape!r}")
        except DomainError as exc:
            raise ConfigError(f"domain: {exc}") from exc
        if "dimension" in section and int(section["dimension"]) != spec.dimension:
            raise ConfigError(
                f"domain.dimension={section['dimension']} inconsistent with shape {shape!r}")
        return spec

    # -- geometry ---------------------------------------------------------
    @cached_property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.dimension
        if self.shape in ("unit-square", "cube", "interval"):
            return np.zeros(d), np.ones(d)
        if self.shape == "ball":
            c = np.array([float(v) for v in self.center])
            r = float(self.radius)
            return c - r, c + r
        if self.shape == "polygon":
            v = np.array([[float(x), float(y)] for x, y in self.vertices])
            return v.min(axis=0), v.max(axis=0)
        s = float(self.scale)
        px, py = (float(v) for v in self.center)
        h = 3.0 * math.sqrt(3.0) / 4.0 * s
        return np.array([px - s / 4, py - h]), np.array([px + 2 * s, py + h])

    def hash(self) -> str:
        import hashlib
        import json
        blob = json.dumps(self.to_config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def contains(self, points) -> np.ndarray:
        """Floating-point membership of continuum points, shape (..., d) -> bool."""
        p = np.asarray(points, dtype=float)
        if p.shape[-1] != self.dimension:
            raise DomainError(f"expected points of dimension {self.dimension}")
        if self.shape in ("unit-square", "cube", "interval"):
            return np.all((p > 0.0) & (p < 1.0), axis=-1)
        if self.shape == "ball":
            c = np.array([float(v) for v in self.center])
            return np.sum((p - c) ** 2, axis=-1) < float(self.radius) ** 2
        if self.shape == "polygon":
            verts = np.array([[float(x), float(y)] for x, y in self.vertices])
            return _float_polygon_contains(p, verts)
        s = float(self.scale)
        u = p[..., 0] - float(self.center[0])
        v = p[..., 1] - float(self.center[1])
        r2 = u * u + v * v
        w = r2 - s * u
        return (r2 > 0) & ((w < 0) | (w * w < s * s * r2))

    def ray_exit(self, a, m) -> float:
        """c(a, D) = inf{c > 0 : a + c m lies outside D}."""
        a = np.asarray(a, dtype=float)
        m = np.asarray(m, dtype=float)
        if not self.contains(a):
            raise DomainError("ray origin must lie in D")
        if not np.any(m):
            raise DomainError("ray direction must be nonzero")
        if self.shape in ("unit-square", "cube", "interval"):
            ts = []
            for ai, mi in zip(a, m):
                if mi > 0:
                    ts.append((1.0 - ai) / mi)
                elif mi < 0:
                    ts.append(-ai / mi)
            return float(min(ts))
        if self.shape == "ball":
            c = np.array([float(v) for v in self.center])
            v = a - c
            A = m @ m
            B = 2 * v @ m
            C = v @ v - float(self.radius) ** 2
            return float((-B + math.sqrt(B * B - 4 * A * C)) / (2 * A))
        if self.shape == "polygon":
            verts = [(float(x), float(y)) for x, y in self.vertices]
            best = math.inf
            for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
                ex, ey = x1 - x0, y1 - y0
                den = m[0] * ey - m[1] * ex
                if den == 0:
                    continue
                wx, wy = x0 - a[0], y0 - a[1]
                t = (wx * ey - wy * ex) / den
                u = (wx * m[1] - wy * m[0]) / den
                if t > 0 and -1e-15 <= u <= 1 + 1e-15:
                    best = min(best, t)
            return float(best)
        # cardioid: march to the first exterior point, then bisect
        lo, hi = 0.0, 1e-3 / float(np.linalg.norm(m))
        while self.contains(a + hi * m):
            lo, hi = hi, hi * 1.05
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.contains(a + mid * m):
                lo = mid
            else:
                hi = mid
        return float(hi)

    def lattice(self, N: int) -> "LatticeDomain":
        return LatticeDomain(self, N)


def _float_polygon_contains(p: np.ndarray, verts: np.ndarray) -> np.ndarray:
    x = p[..., 0]
    y = p[..., 1]
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    for (ax, ay), (bx, by) in zip(verts, np.roll(verts, -1, axis=0)):
        cross = (y - ay) * (bx - ax) - (x - ax) * (by - ay)
        straddle = (ay > y) != (by > y)
        inside ^= straddle & ((cross > 0) == (by > ay))
        on_edge |= (cross == 0) & (np.minimum(ax, bx) <= x) & (x <= np.maximum(ax, bx)) \
            & (np.minimum(ay, by) <= y) & (y <= np.maximum(ay, by))
    return inside & ~on_edge


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, p3), orient(p1, p2, p4), orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, p3)) or (o2 == 0 and on_seg(p1, p2, p4))
            or (o3 == 0 and on_seg(p3, p4, p1)) or (o4 == 0 and on_seg(p3, p4, p2)))


def _is_simple_polygon(verts) -> bool:
    n = len(verts)
    if len(set(verts)) != n:
        return False
    edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        if j == i + 1 or (i == 0 and j == n - 1):
            continue
        if _segments_intersect(*edges[i], *edges[j]):
            return False
    return True


# --- exact lattice predicates -----------------------------------------------

def _ball_mask(pts: np.ndarray, N: int, spec: DomainSpec) -> np.ndarray:
    q = _lcm([v.denominator for v in spec.center] + [spec.radius.denominator])
    C = [int(v * q) for v in spec.center]
    R = int(spec.radius * q)
    diffs = [q * pts[:, i].astype(float) - N * C[i] for i in range(spec.dimension)]
    lhs = sum(dd * dd for dd in diffs)
    rhs = float(N * R) ** 2
    f = lhs - rhs
    inside = f < 0
    unsure = np.abs(f) <= _FILTER_EPS * (lhs + rhs)
    for idx in np.nonzero(unsure)[0]:
        row = [int(v) for v in pts[idx]]
        val = sum((q * x - N * c) ** 2 for x, c in zip(row, C)) - (N * R) ** 2
        inside[idx] = val < 0
    return inside


def _polygon_mask(pts: np.ndarray, N: int, spec: DomainSpec) -> np.ndarray:
    q = _lcm([c.denominator for v in spec.vertices for c in v])
    V = [(int(x * q) * N, int(y * q) * N) for x, y in spec.vertices]
    X = q * pts[:, 0].astype(np.int64)
    Y = q * pts[:, 1].astype(np.int64)
    Xf = X.astype(float)
    Yf = Y.astype(float)
    inside = np.zeros(len(pts), dtype=bool)
    boundary = np.zeros(len(pts), dtype=bool)
    for (ax, ay), (bx, by) in zip(V, V[1:] + V[:1]):
        t1 = (Yf - ay) * float(bx - ax)
        t2 = (Xf - ax) * float(by - ay)
        cross = t1 - t2
        unsure = np.abs(cross) <= _FILTER_EPS * (np.abs(t1) + np.abs(t2))
        sign = np.sign(cross).astype(np.int64)
        for idx in np.nonzero(unsure)[0]:
            xi, yi = int(X[idx]), int(Y[idx])
            c = (yi - ay) * (bx - ax) - (xi - ax) * (by - ay)
            sign[idx] = (c > 0) - (c < 0)
        straddle = (ay > Y) != (by > Y)
        inside ^= straddle & ((sign > 0) == (by > ay)) & (sign != 0)
        boundary |= (sign == 0) & (np.minimum(ax, bx) <= X) & (X <= max(ax, bx)) \
            & (min(ay, by) <= Y) & (Y <= max(ay, by))
    return inside & ~boundary


def _cardioid_mask(pts: np.ndarray, N: int, spec: DomainSpec) -> np.ndarray:
    s = spec.scale
    px, py = spec.center
    q = _lcm([s.denominator, px.denominator, py.denominator])
    Sq, Pxq, Pyq = int(s * q), int(px * q), int(py * q)
    S = N * Sq
    U = q * pts[:, 0].astype(float) - N * Pxq
    V = q * pts[:, 1].astype(float) - N * Pyq
    r2 = U * U + V * V
    W = r2 - S * U
    lhs = W * W
    rhs = float(S) ** 2 * r2
    inside = (r2 > 0) & ((W < 0) | (lhs < rhs))
    unsure = (np.abs(W) <= _FILTER_EPS * (r2 + abs(S) * np.abs(U))) | \
             (np.abs(lhs - rhs) <= _FILTER_EPS * (lhs + rhs)) | (r2 <= 1.0)
    for idx in np.nonzero(unsure)[0]:
        x, y = int(pts[idx, 0]), int(pts[idx, 1])
        u = q * x - N * Pxq
        v = q * y - N * Pyq
        rr = u * u + v * v
        w = rr - S * u
        inside[idx] = rr > 0 and (w < 0 or w * w < S * S * rr)
    return inside


def lattice_membership(spec: DomainSpec, N: int, pts) -> np.ndarray:
    """Exact test of x/N in D for integer points ``pts`` of shape (M, d)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
    if pts.shape[1] != spec.dimension:
        raise DomainError(f"expected lattice points of dimension {spec.dimension}")
    if spec.shape in ("unit-square", "cube", "interval"):
        return np.all((pts > 0) & (pts < N), axis=1)
    if spec.shape == "ball":
        return _ball_mask(pts, N, spec)
    if spec.shape == "polygon":
        return _polygon_mask(pts, N, spec)
    return _cardioid_mask(pts, N, spec)


# --- L-infinity distance helpers ----------------------------------------------

def _linf_point_segment(px, py, ax, ay, bx, by) -> float:
    dx0, dy0 = ax - px, ay - py
    ex, ey = bx - ax, by - ay
    cands = [0.0, 1.0]
    for num, den in ((-dx0, ex), (-dy0, ey), (-(dx0 - dy0), ex - ey), (-(dx0 + dy0), ex + ey)):
        if den != 0:
            t = num / den
            if 0.0 < t < 1.0:
                cands.append(t)
    return min(max(abs(dx0 + t * ex), abs(dy0 + t * ey)) for t in cands)


@dataclass(frozen=True)
class LatticeDomain:
    """The lattice point set D_N = N D intersected with Z^d."""

    spec: DomainSpec
    N: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if int(self.N) < 1:
            raise DomainError("scale N must be a positive integer")
        object.__setattr__(self, "N", int(self.N))

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @cached_property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer box [lo, hi] (inclusive) containing every point of D_N."""
        lo, hi = self.spec.bounding_box
        return (np.floor(lo * self.N).astype(np.int64) - 1,
                np.ceil(hi * self.N).astype(np.int64) + 1)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.int64).reshape(1, -1)
        return bool(lattice_membership(self.spec, self.N, x)[0])

    def mask(self, pad: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Dense boolean membership array over the box grown by ``pad`` and its origin."""
        key = ("mask", pad)
        if key not in self._cache:
            lo, hi = self.box
            lo = lo - pad
            hi = hi + pad
            shape = tuple(int(h - l + 1) for l, h in zip(lo, hi))
            inner = self._inner_mask()
            m = np.zeros(shape, dtype=np.bool_)
            sl = tuple(slice(pad, pad + s) for s in inner.shape)
            m[sl] = inner
            self._cache[key] = (m, lo)
        return self._cache[key]

    def _inner_mask(self) -> np.ndarray:
        if "inner" not in self._cache:
            lo, hi = self.box
            axes = [np.arange(l, h + 1) for l, h in zip(lo, hi)]
            shape = tuple(len(a) for a in axes)
            if self.spec.shape in ("unit-square", "cube", "interval"):
                m = np.ones(shape, dtype=np.bool_)
                for i, a in enumerate(axes):
                    ok = (a > 0) & (a < self.N)
                    m &= ok.reshape([-1 if j == i else 1 for j in range(len(axes))])
            else:
                grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
                m = lattice_membership(self.spec, self.N, grid).reshape(shape)
            self._cache["inner"] = m
        return self._cache["inner"]

    def enumerate_interior(self) -> np.ndarray:
        """All points of D_N in lexicographic order, shape (M, d)."""
        lo, _ = self.box
        idx = np.argwhere(self._inner_mask())
        return idx + lo

    def size(self) -> int:
        return int(self._inner_mask().sum())

    def boundary_distance(self, x) -> float:
        """Sup-norm distance from x to the complement of N D (lattice units)."""
        x = np.asarray(x, dtype=np.int64)
        if not self.contains(x):
            raise DomainError(f"{tuple(int(v) for v in x)} is not in D_N")
        N = self.N
        spec = self.spec
        if spec.shape in ("unit-square", "cube", "interval"):
            return float(min(min(int(v), N - int(v)) for v in x))
        xf = x.astype(float)
        if spec.shape == "ball":
            c = np.array([float(v) for v in spec.center]) * N
            rho = float(spec.radius) * N
            v = np.abs(xf - c)
            S = v.sum()
            d = len(v)
            disc = S * S - d * (v @ v - rho * rho)
            return float((-S + math.sqrt(disc)) / d)
        if spec.shape == "polygon":
            V = [(float(a) * N, float(b) * N) for a, b in spec.vertices]
            return float(min(_linf_point_segment(xf[0], xf[1], *A, *B)
                             for A, B in zip(V, V[1:] + V[:1])))
        return self._cardioid_distance(xf)

    def _cardioid_distance(self, xf: np.ndarray) -> float:
        s = float(self.spec.scale) * self.N
        px, py = (float(v) * self.N for v in self.spec.center)

        def dist(t):
            r = s * (1 + math.cos(t))
            return max(abs(px + r * math.cos(t) - xf[0]), abs(py + r * math.sin(t) - xf[1]))

        ts = np.linspace(-math.pi, math.pi, 4097)
        vals = [dist(t) for t in ts]
        i = int(np.argmin(vals))
        h = ts[1] - ts[0]
        res = minimize_scalar(dist, bounds=(ts[i] - h, ts[i] + h), method="bounded",
                              options={"xatol": 1e-12})
        return float(min(res.fun, vals[i]))

    def boundary_layer(self, width: float) -> "BoundaryLayer":
        return BoundaryLayer(self, float(width))


@dataclass(frozen=True)
class BoundaryLayer:
    """Split of D_N into deep points (boundary distance >= width) and a shallow layer."""

    domain: LatticeDomain
    width: float

    @classmethod
    def midband(cls, domain: LatticeDomain) -> "BoundaryLayer":
        N = domain.N
        return cls(domain, N / math.log(N) ** 2)

    def classify(self, x) -> str:
        return "deep" if self.domain.boundary_distance(x) >= self.width else "shallow"

    def deep_points(self) -> np.ndarray:
        pts = self.domain.enumerate_interior()
        if self.domain.spec.shape in ("unit-square", "cube", "interval"):
            N = self.domain.N
            dist = np.minimum(pts, N - pts).min(axis=1)
        else:
            dist = np.array([self.domain.boundary_distance(p) for p in pts])
        return pts[dist >= self.width]
