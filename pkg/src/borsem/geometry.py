"""Bodies of revolution described by their generatrix in the (rho, z) half-plane.

A generatrix is a chain of straight and circular pieces traversed from the
top of the body to the bottom, so the outward normal is ``(-dz/ds, drho/ds)``.
Piece boundaries are corners and always become mesh nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_DENSITY = 8
DEFAULT_TRUNCATED_FLARE_DEG = 23.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Line:
    p0: tuple[float, float]
    p1: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    def point(self, u):
        u = np.asarray(u, dtype=float)
        rho = self.p0[0] + u * (self.p1[0] - self.p0[0])
        z = self.p0[1] + u * (self.p1[1] - self.p0[1])
        return rho, z

    def tangent(self, u):
        u = np.asarray(u, dtype=float)
        L = self.length
        tr = (self.p1[0] - self.p0[0]) / L
        tz = (self.p1[1] - self.p0[1]) / L
        return np.full_like(u, tr), np.full_like(u, tz)

    def extremes(self):
        return [self.p0, self.p1]


@dataclass(frozen=True)
class Arc:
    """Circular arc ``(rc + r cos th, zc + r sin th)`` for th from ``th0`` to ``th1``."""

    center: tuple[float, float]
    radius: float
    th0: float
    th1: float

    @property
    def length(self) -> float:
        return self.radius * abs(self.th1 - self.th0)

    @property
    def p0(self):
        return self._at(self.th0)

    @property
    def p1(self):
        return self._at(self.th1)

    def _at(self, th):
        return (self.center[0] + self.radius * math.cos(th), self.center[1] + self.radius * math.sin(th))

    def point(self, u):
        th = self.th0 + np.asarray(u, dtype=float) * (self.th1 - self.th0)
        return self.center[0] + self.radius * np.cos(th), self.center[1] + self.radius * np.sin(th)

    def tangent(self, u):
        th = self.th0 + np.asarray(u, dtype=float) * (self.th1 - self.th0)
        sgn = 1.0 if self.th1 > self.th0 else -1.0
        return -sgn * np.sin(th), sgn * np.cos(th)

    def extremes(self):
        lo, hi = sorted((self.th0, self.th1))
        pts = [self.p0, self.p1]
        for k in range(-4, 5):
            th = k * math.pi / 2
            if lo < th < hi:
                pts.append(self._at(th))
        return pts


@dataclass(frozen=True)
class BorGeometry:
    """Closed body of revolution.

    ``a`` is the maximum transverse dimension (2 max rho) and ``L`` the axial
    extent; both are recomputed from the pieces on construction.
    """

    pieces: tuple
    kind: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        if not self.pieces:
            raise GeometryError("generatrix needs at least one piece")
        for prev, nxt in zip(self.pieces, self.pieces[1:]):
            if math.dist(prev.p1, nxt.p0) > 1e-12:
                raise GeometryError("generatrix pieces are not connected")
        for pc in self.pieces:
            if pc.length <= 0:
                raise GeometryError("consecutive generatrix points must be distinct")
        pts = self._sampled()
        if np.min(pts[:, 0]) < -1e-14:
            raise GeometryError("generatrix must satisfy rho >= 0")
        if self.L <= 0:
            raise GeometryError("body must have positive axial length")
        if not _is_simple(pts):
            raise GeometryError("generatrix is self-intersecting")

    def _sampled(self, per_piece: int = 64) -> np.ndarray:
        chunks = []
        for pc in self.pieces:
            n = per_piece if isinstance(pc, Arc) else 1
            r, z = pc.point(np.linspace(0.0, 1.0, n + 1))
            chunks.append(np.column_stack([r, z])[:-1])
        chunks.append(np.array([self.pieces[-1].p1]))
        return np.vstack(chunks)

    @cached_property
    def _extremes(self) -> np.ndarray:
        return np.array([p for pc in self.pieces for p in pc.extremes()])

    @property
    def generatrix(self) -> list[tuple[float, float]]:
        """Corner points of the generatrix, top to bottom."""
        return [self.pieces[0].p0] + [pc.p1 for pc in self.pieces]

    @property
    def a(self) -> float:
        return 2.0 * float(np.max(self._extremes[:, 0]))

    @property
    def L(self) -> float:
        z = self._extremes[:, 1]
        return float(np.max(z) - np.min(z))

    @property
    def z_center(self) -> float:
        z = self._extremes[:, 1]
        return 0.5 * float(np.max(z) + np.min(z))

    @property
    def ratio_aL(self) -> float:
        return self.a / self.L

    @property
    def closed_axis_ends(self) -> tuple[bool, bool]:
        return (abs(self.pieces[0].p0[0]) < 1e-14, abs(self.pieces[-1].p1[0]) < 1e-14)

    @property
    def length(self) -> float:
        """Arc length of the generatrix."""
        return sum(pc.length for pc in self.pieces)

    @property
    def transit(self) -> float:
        """Light-transit time (c = 1) across the larger body dimension."""
        return max(self.a, self.L)

    def surface_area(self) -> float:
        total = 0.0
        x, w = np.polynomial.legendre.leggauss(16)
        u, w = 0.5 * (x + 1), 0.5 * w
        for pc in self.pieces:
            r, _ = pc.point(u)
            total += 2 * math.pi * pc.length * float(np.sum(w * r))
        return total


def _is_simple(pts: np.ndarray) -> bool:
    segs = list(zip(pts[:-1], pts[1:]))
    n = len(segs)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    for i in range(n):
        p, q = segs[i]
        for j in range(i + 2, n):
            r, s = segs[j]
            d1, d2 = cross(r, s, p), cross(r, s, q)
            d3, d4 = cross(p, q, r), cross(p, q, s)
            if (d1 * d2 < -1e-24) and (d3 * d4 < -1e-24):
                return False
    return True


def _check_a(a):
    if not (a > 0 and math.isfinite(a)):
        raise GeometryError(f"a must be positive, got {a}")


def make_cone(a: float, half_flare: float) -> BorGeometry:
    """Cone with apex on the axis and a flat base disc of diameter ``a``."""
    _check_a(a)
    if not 0 < half_flare < math.pi / 2:
        raise GeometryError("half flare angle must lie in (0, pi/2)")
    L = 0.5 * a / math.tan(half_flare)
    return _cone(a, L, ("half_flare", half_flare))


def make_cone_by_ratio(a: float, ratio_aL: float) -> BorGeometry:
    """Cone fixed by its aspect ratio a/L; the flare angle follows from it."""
    _check_a(a)
    if not ratio_aL > 0:
        raise GeometryError("ratio a/L must be positive")
    return _cone(a, a / ratio_aL, ("ratio_aL", ratio_aL))


def _cone(a, L, param):
    r = 0.5 * a
    pieces = (Line((0.0, L), (r, 0.0)), Line((r, 0.0), (0.0, 0.0)))
    return BorGeometry(pieces, "cone", (("a", a), param))


def frustum_small_radius(a: float, L: float, full_flare: float) -> float:
    return 0.5 * a - L * math.tan(0.5 * full_flare)


def make_truncated_cone(a: float, ratio_aL: float,
                        full_flare: float = math.radians(DEFAULT_TRUNCATED_FLARE_DEG)) -> BorGeometry:
    """Frustum with large-end diameter ``a``, length ``a/ratio_aL`` and both ends capped.

    The side slope is set by the full flare angle (default 23 degrees).
    """
    _check_a(a)
    if not ratio_aL > 0:
        raise GeometryError("ratio a/L must be positive")
    if not 0 < full_flare < math.pi:
        raise GeometryError("full flare angle must lie in (0, pi)")
    L = a / ratio_aL
    rs = frustum_small_radius(a, L, full_flare)
    if rs <= 0:
        raise GeometryError(
            f"flare {math.degrees(full_flare):.3g} deg and a/L={ratio_aL} give small-end radius {rs:.3g} <= 0"
        )
    r = 0.5 * a
    pieces = (
        Line((0.0, L), (rs, L)),
        Line((rs, L), (r, 0.0)),
        Line((r, 0.0), (0.0, 0.0)),
    )
    return BorGeometry(pieces, "truncated_cone", (("a", a), ("ratio_aL", ratio_aL), ("full_flare", full_flare)))


def make_cylinder(a: float, ratio_aL: float) -> BorGeometry:
    _check_a(a)
    if not ratio_aL > 0:
        raise GeometryError("ratio a/L must be positive")
    L = a / ratio_aL
    r = 0.5 * a
    pieces = (
        Line((0.0, L), (r, L)),
        Line((r, L), (r, 0.0)),
        Line((r, 0.0), (0.0, 0.0)),
    )
    return BorGeometry(pieces, "cylinder", (("a", a), ("ratio_aL", ratio_aL)))


def make_sphere(a: float) -> BorGeometry:
    _check_a(a)
    r = 0.5 * a
    pieces = (
        Arc((0.0, 0.0), r, math.pi / 2, 0.0),
        Arc((0.0, 0.0), r, 0.0, -math.pi / 2),
    )
    return BorGeometry(pieces, "sphere", (("a", a),))


DEFAULT_RATIOS = {"cone": 0.505, "truncated_cone": 0.749, "cylinder": 0.5}


def make_body(kind: str, a: float = 1.0, ratio_aL: float | None = None,
              flare_deg: float | None = None) -> BorGeometry:
    """Construct a body from a config-style description."""
    if kind == "sphere":
        return make_sphere(a)
    if kind == "cone":
        if ratio_aL is None and flare_deg is not None:
            return make_cone(a, math.radians(flare_deg) / 2)
        return make_cone_by_ratio(a, ratio_aL if ratio_aL is not None else DEFAULT_RATIOS["cone"])
    if kind == "truncated_cone":
        flare = math.radians(flare_deg if flare_deg is not None else DEFAULT_TRUNCATED_FLARE_DEG)
        return make_truncated_cone(a, ratio_aL if ratio_aL is not None else DEFAULT_RATIOS[kind], flare)
    if kind == "cylinder":
        return make_cylinder(a, ratio_aL if ratio_aL is not None else DEFAULT_RATIOS[kind])
    raise GeometryError(f"unknown body kind {kind!r}")


@dataclass(frozen=True)
class Segment:
    piece: int
    u0: float
    u1: float
    p0: tuple[float, float]
    p1: tuple[float, float]
    length: float
    midpoint: tuple[float, float]
    normal: tuple[float, float]


@dataclass(frozen=True, eq=False)
class BorMesh:
    geometry: BorGeometry
    segments: tuple[Segment, ...]
    density: float

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def h_max(self) -> float:
        return max(s.length for s in self.segments)

    @property
    def h_min(self) -> float:
        return min(s.length for s in self.segments)

    @property
    def total_length(self) -> float:
        return math.fsum(s.length for s in self.segments)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Segment end points, shape (n_segments + 1, 2)."""
        return np.array([self.segments[0].p0] + [s.p1 for s in self.segments])

    def sample(self, seg: np.ndarray, x: np.ndarray):
        """Points on segments at local parameters ``x`` in [0, 1].

        Returns ``rho, z, t_rho, t_z`` arrays shaped like ``x``; the segment
        Jacobian d(arc)/dx is ``segments[i].length`` since pieces are
        parametrised proportionally to arc length.
        """
        seg = np.asarray(seg)
        x = np.asarray(x, dtype=float)
        rho = np.empty(np.broadcast(seg, x).shape)
        z, tr, tz = np.empty_like(rho), np.empty_like(rho), np.empty_like(rho)
        seg_b, x_b = np.broadcast_arrays(seg, x)
        for i in np.unique(seg_b):
            sel = seg_b == i
            s = self.segments[i]
            pc = self.geometry.pieces[s.piece]
            u = s.u0 + x_b[sel] * (s.u1 - s.u0)
            rho[sel], z[sel] = pc.point(u)
            tr[sel], tz[sel] = pc.tangent(u)
        return rho, z, tr, tz


def discretize(g: BorGeometry, segments_per_a: float = 32) -> BorMesh:
    """Split every generatrix piece into equal arc-length segments of length <= a/segments_per_a."""
    if segments_per_a < MIN_DENSITY:
        raise GeometryError(f"density {segments_per_a} below minimum {MIN_DENSITY} segments per a")
    h = g.a / segments_per_a
    segs = []
    for ip, pc in enumerate(g.pieces):
        n = max(1, math.ceil(pc.length / h - 1e-9))
        for k in range(n):
            u0, u1 = k / n, (k + 1) / n
            r, z = pc.point(np.array([u0, u1, 0.5 * (u0 + u1)]))
            tr, tz = pc.tangent(0.5 * (u0 + u1))
            segs.append(Segment(
                piece=ip, u0=u0, u1=u1,
                p0=(float(r[0]), float(z[0])), p1=(float(r[1]), float(z[1])),
                length=pc.length / n,
                midpoint=(float(r[2]), float(z[2])),
                normal=(float(-tz), float(tr)),
            ))
    return BorMesh(g, tuple(segs), segments_per_a)
