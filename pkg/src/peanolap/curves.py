"""Peano-curve approximations gamma_m and their identification classes.

Three generation engines cover the six spaces:

* ``ifs``: segments live in a cell F_w of an iterated function system and
  join two of the cell's vertices (SG, PG, OG).
* ``triangle``: like ``ifs`` with an extra central cell; each midline is run
  once through the central cell and once through a corner cell (TRIANGLE).
* ``grid``: segments are unit edges of the 3^m grid on the torus, optionally
  with the carpet holes sewn shut (TORUS, MC).
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .exact import ExactPoint


class CurveError(ValueError):
    pass


class LevelCapError(CurveError):
    """Requested level exceeds the configured cap."""


class FractalId(str, Enum):
    SG = "SG"
    PG = "PG"
    OG = "OG"
    MC = "MC"
    TORUS = "TORUS"
    TRIANGLE = "TRIANGLE"

    @classmethod
    def parse(cls, name) -> "FractalId":
        if isinstance(name, FractalId):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise CurveError(f"unknown fractal id: {name!r}") from None


LEVEL_CAPS = {
    FractalId.SG: 5,
    FractalId.PG: 5,
    FractalId.OG: 3,
    FractalId.MC: 4,
    FractalId.TORUS: 3,
    FractalId.TRIANGLE: 5,
}


def denominator(fractal, m: int) -> int:
    """Parameter denominator D(m)."""
    f = FractalId.parse(fractal)
    return {
        FractalId.SG: 3 ** (m + 1),
        FractalId.PG: 5 ** (m + 1),
        FractalId.OG: 2 * 8 ** (m + 1),
        FractalId.MC: 2 * 8**m,
        FractalId.TORUS: 2 * 9**m,
        FractalId.TRIANGLE: 3 * 4**m,
    }[f]


def segment_count(fractal, m: int) -> int:
    f = FractalId.parse(fractal)
    if f is FractalId.PG:
        return 3 * 5**m
    return denominator(f, m)


# ---------------------------------------------------------------------------
# carpet sewing


class Sewing:
    """Grid vertices and edges of level m on the 3^m torus, with carpet holes sewn.

    Every hole of side s has its bottom edge glued to its top edge and its left
    edge to its right edge, so all four hole corners become one point.  With
    ``sewn=False`` only the torus wrap applies.
    """

    def __init__(self, m: int, sewn: bool = True):
        self.m = m
        self.N = 3**m
        self.sewn = sewn
        self._parent = {}
        self._edge_alias = {}
        if sewn:
            for k in range(1, m + 1):
                sz = 3 ** (m - k)
                for a in range(3 ** (k - 1)):
                    for b in range(3 ** (k - 1)):
                        if not _in_carpet(a, b, k - 1):
                            continue
                        X, Y = (3 * a + 1) * sz, (3 * b + 1) * sz
                        for t in range(sz + 1):
                            self._union((X + t, Y), (X + t, Y + sz))
                            self._union((X, Y + t), (X + sz, Y + t))
                        for t in range(sz):
                            self._edge_alias[("h", X + t, Y)] = ("h", X + t, Y + sz)
                            self._edge_alias[("v", X, Y + t)] = ("v", X + sz, Y + t)

    def _find(self, p):
        while self._parent.get(p, p) != p:
            p = self._parent[p]
        return p

    def _union(self, a, b):
        a = self._find((a[0] % self.N, a[1] % self.N))
        b = self._find((b[0] % self.N, b[1] % self.N))
        if a != b:
            self._parent[max(a, b)] = min(a, b)

    def canonical_point(self, p):
        return self._find((p[0] % self.N, p[1] % self.N))

    def canonical_edge(self, p, e):
        """Key of the undirected unit edge from p in direction e."""
        q = (p[0] + e[0], p[1] + e[1])
        if e[1] == 0:
            k = ("h", min(p[0], q[0]) % self.N, p[1] % self.N)
        else:
            k = ("v", p[0] % self.N, min(p[1], q[1]) % self.N)
        return self._edge_alias.get(k, k)

    def hole_of(self, ci, cj):
        """(X, Y, size) of the hole containing unit cell (ci, cj), or None."""
        if not self.sewn:
            return None
        ci %= self.N
        cj %= self.N
        for k in range(1, self.m + 1):
            sz = 3 ** (self.m - k)
            if (ci // sz) % 3 == 1 and (cj // sz) % 3 == 1:
                return ((ci // (3 * sz)) * 3 * sz + sz, (cj // (3 * sz)) * 3 * sz + sz, sz)
        return None

    def owner_frame(self, p, e):
        """Frame (origin, e, n) with n pointing into the cell that owns the edge.

        Horizontal edges belong to the cell above and vertical edges to the cell
        on the right; an edge on the lower/left side of a hole is replaced by its
        sewn partner.
        """
        n = (0, 1) if e[1] == 0 else (1, 0)
        ci = p[0] + min(0, e[0])
        cj = p[1] + min(0, e[1])
        h = self.hole_of(ci, cj)
        if h is not None:
            sz = h[2]
            p = (p[0], p[1] + sz) if e[1] == 0 else (p[0] + sz, p[1])
        return p, e, n


def _in_carpet(i, j, m):
    for _ in range(m):
        if i % 3 == 1 and j % 3 == 1:
            return False
        i //= 3
        j //= 3
    return True


@lru_cache(maxsize=None)
def sewing(m: int, sewn: bool) -> Sewing:
    return Sewing(m, sewn)


_SIDES = {(1, 0): "S", (-1, 0): "S", (0, 1): "W", (0, -1): "W"}


@dataclass(frozen=True)
class EdgeAddress:
    """Unit edge of the level-m grid named by a cell and one of its sides."""

    level: int
    cell: tuple
    side: str

    @property
    def cell_path(self):
        """Base-3 digit word of the cell, coarsest digit first."""
        i, j = self.cell
        word = []
        for _ in range(self.level):
            word.append((i % 3, j % 3))
            i //= 3
            j //= 3
        return tuple(reversed(word))

    def canonical(self, sewn: bool = True) -> "EdgeAddress":
        """Representative as the S or W side of its owning cell."""
        N = 3**self.level
        i, j = self.cell
        if self.side == "N":
            i, j, side = i, j + 1, "S"
        elif self.side == "E":
            i, j, side = i + 1, j, "W"
        else:
            side = self.side
        i %= N
        j %= N
        sw = sewing(self.level, sewn)
        h = sw.hole_of(i, j)
        if h is not None:
            X, Y, sz = h
            if side == "S":
                j = (Y + sz) % N
            else:
                i = (X + sz) % N
        return EdgeAddress(self.level, (i, j), side)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class Segment:
    paramStart: Fraction
    paramEnd: Fraction
    geoStart: ExactPoint
    geoEnd: ExactPoint
    typeTag: str
    isJump: bool = False
    edge: EdgeAddress | None = None


@dataclass(frozen=True)
class CurveApprox:
    fractal: FractalId
    level: int
    segments: tuple

    @property
    def D(self) -> int:
        return denominator(self.fractal, self.level)

    def points(self):
        """Parameter numerators k of the segment start points, in order."""
        D = self.D
        return [int(s.paramStart * D) for s in self.segments]


@dataclass
class SubstitutionSystem:
    fractal: FractalId
    base_level: int
    data: dict
    version: str
    baseCurve: CurveApprox | None = None
    rules: dict = field(default_factory=dict)


@dataclass(frozen=True)
class IdentificationMap:
    fractal: FractalId
    level: int
    D: int
    classes: tuple  # sorted tuples of numerators, ordered by smallest member
    classOf: dict  # numerator -> class id (smallest member)

    def vertex_ids(self):
        return [c[0] for c in self.classes]


# ---------------------------------------------------------------------------
# substitution systems


@lru_cache(maxsize=1)
def _rule_data():
    text = resources.files("peanolap").joinpath("data/substitutions.json").read_text()
    return json.loads(text)


def build_system(fractal) -> SubstitutionSystem:
    f = FractalId.parse(fractal)
    data = _rule_data()
    d = data[f.value]
    sysm = SubstitutionSystem(f, d["base_level"], d, data["version"])
    if d["engine"] == "ifs":
        sysm.rules = {k: [tuple(c) for c in v] for k, v in d["rules"].items()}
    elif d["engine"] == "grid":
        sysm.rules = {"edge": [tuple(map(tuple, c)) for c in d["rule"]]}
    else:
        sysm.rules = {"edge": "corner-midline-midline-corner"}
    sysm.baseCurve = generate(f, d["base_level"])
    return sysm


# internal state per engine -------------------------------------------------


def _ifs_setup(d):
    n = d["ring"]
    nv = d["vertices"]
    rho = ExactPoint.make(n, d["contraction"]["coeffs"], d["contraction"]["den"])
    one = ExactPoint.integer(n, 1)
    if n == 3 and nv == 3:
        verts = [ExactPoint.root(3, k) for k in range(3)]
    else:
        verts = [ExactPoint.root(n, k * n // nv) for k in range(nv)]
    return n, nv, rho, one, verts


def _ifs_states(d, level):
    """Chord states (alpha, beta, a, c) at the requested level."""
    n, nv, rho, one, verts = _ifs_setup(d)
    base_level = d["base_level"]
    rules = {k: [tuple(c) for c in v] for k, v in d["rules"].items()}
    states = [(one, ExactPoint.integer(n, 0), a, c) for a, c in d["base"]]
    for _ in range(level - base_level):
        nxt = []
        for alpha, beta, a, c in states:
            tag = str((c - a) % nv)
            for cell, s, t in rules[tag]:
                i = (a + cell) % nv
                # F_w o F_i (z) = alpha*rho*z + alpha*(1-rho)*P_i + beta
                nxt.append((alpha * rho, alpha * (one - rho) * verts[i] + beta, (a + s) % nv, (a + t) % nv))
        states = nxt
    return states, verts, rho, one


def _triangle_states(d, level):
    n, nv, rho, one, verts = _ifs_setup(d)
    half = ExactPoint.integer(n, 1, 2)
    zero = ExactPoint.integer(n, 0)
    states = [(one, zero, a, c, ()) for a, c in d["base"]]
    for _ in range(level - d["base_level"]):
        nxt = []

        def corner(alpha, beta, w, i, s, t):
            return (alpha * half, alpha * half * verts[i] + beta, s, t, w + (i,))

        def central(alpha, beta, w, s, t):
            return (-(alpha * half), beta, s, t, w + (3,))

        for alpha, beta, x, y, w in states:
            z = 3 - x - y
            nxt.append(corner(alpha, beta, w, x, x, z))
            # midline near the start vertex through the central cell, near the end
            # vertex through the corner cell; rotation-equivariant
            nxt.append(central(alpha, beta, w, y, z))
            nxt.append(corner(alpha, beta, w, y, x, z))
            nxt.append(corner(alpha, beta, w, y, z, y))
        states = nxt
    return [(a, b, s, t) for a, b, s, t, _ in states], verts


def _grid_segments(d, level):
    sewn = d["sewn"]
    segs = [(tuple(p), tuple(e)) for p, e in d["base"]]
    rule = [(tuple(p), tuple(e)) for p, e in d["rule"]]
    for lv in range(d["base_level"], level):
        sw = sewing(lv, sewn)
        nxt = []
        for p, e in segs:
            o, e0, nn = sw.owner_frame(p, e)
            for (x, y), (dx, dy) in rule:
                nxt.append(
                    (
                        (3 * o[0] + x * e0[0] + y * nn[0], 3 * o[1] + x * e0[1] + y * nn[1]),
                        (dx * e0[0] + dy * nn[0], dx * e0[1] + dy * nn[1]),
                    )
                )
        segs = nxt
    return segs


def _grid_point(p, N):
    return ExactPoint.make(4, [p[0] % N, p[1] % N], N)


def _edge_address(level, p, e, sewn):
    q = (p[0] + e[0], p[1] + e[1])
    if e[1] == 0:
        cell, side = (min(p[0], q[0]), p[1]), "S"
    else:
        cell, side = (p[0], min(p[1], q[1])), "W"
    return EdgeAddress(level, cell, side).canonical(sewn)


def generate(fractal, level: int) -> CurveApprox:
    f = FractalId.parse(fractal)
    d = _rule_data()[f.value]
    if level < d["base_level"]:
        raise CurveError(f"{f.value} curves start at level {d['base_level']}")
    if level > LEVEL_CAPS[f]:
        raise LevelCapError(f"{f.value} level {level} exceeds cap {LEVEL_CAPS[f]}")
    D = denominator(f, level)
    segs = []
    if d["engine"] == "ifs" and f is not FractalId.PG:
        states, verts, _, _ = _ifs_states(d, level)
        nv = d["vertices"]
        for k, (alpha, beta, a, c) in enumerate(states):
            segs.append(
                Segment(Fraction(k, D), Fraction(k + 1, D), alpha * verts[a] + beta, alpha * verts[c] + beta,
                        str((c - a) % nv))
            )
    elif f is FractalId.PG:
        states, verts, rho, one = _ifs_states(d, level)
        widths = d["piece_widths"]
        k = 0
        for alpha, beta, a, c in states:
            A = alpha * verts[a] + beta
            C = alpha * verts[c] + beta
            X = A + rho * (C - A)
            Y = C + rho * (A - C)
            tag = str((c - a) % 5)
            for (P, Q, kind), w in zip(((A, X, "end"), (X, Y, "mid"), (Y, C, "end")), widths):
                segs.append(Segment(Fraction(k, D), Fraction(k + w, D), P, Q, f"{tag}:{kind}"))
                k += w
    elif d["engine"] == "triangle":
        states, verts = _triangle_states(d, level)
        for k, (alpha, beta, a, c) in enumerate(states):
            segs.append(
                Segment(Fraction(k, D), Fraction(k + 1, D), alpha * verts[a] + beta, alpha * verts[c] + beta,
                        str((c - a) % 3))
            )
    else:
        raw = _grid_segments(d, level)
        N = 3**level
        sw = sewing(level, d["sewn"])
        for k, (p, e) in enumerate(raw):
            q = (p[0] + e[0], p[1] + e[1])
            nxt = raw[(k + 1) % len(raw)][0]
            jump = (q[0] - nxt[0]) % N != 0 or (q[1] - nxt[1]) % N != 0
            segs.append(
                Segment(
                    Fraction(k, D),
                    Fraction(k + 1, D),
                    _grid_point(sw.canonical_point(p), N),
                    _grid_point(sw.canonical_point(q), N),
                    _SIDES[e] + ("+" if e[0] + e[1] > 0 else "-"),
                    jump,
                    _edge_address(level, p, e, d["sewn"]),
                )
            )
    return CurveApprox(f, level, tuple(segs))


def substitute(curve: CurveApprox) -> CurveApprox:
    """Apply the substitution system once."""
    return generate(curve.fractal, curve.level + 1)


# ---------------------------------------------------------------------------
# identification


def identify(curve: CurveApprox) -> IdentificationMap:
    D = curve.D
    fibers = {}
    for s in curve.segments:
        fibers.setdefault(s.geoStart, []).append(int(s.paramStart * D))
    classes = tuple(sorted(tuple(sorted(v)) for v in fibers.values()))
    classOf = {k: c[0] for c in classes for k in c}
    return IdentificationMap(curve.fractal, curve.level, D, classes, classOf)


def class_histogram(idmap: IdentificationMap) -> dict:
    return dict(sorted(Counter(len(c) for c in idmap.classes).items()))


def point_at(curve: CurveApprox, k: int) -> ExactPoint:
    D = curve.D
    if not 0 <= k < D:
        raise CurveError(f"parameter numerator {k} outside [0, {D})")
    for s in curve.segments:
        if s.paramStart * D == k:
            return s.geoStart
    raise CurveError(f"k={k} is not a parameter point of this curve")


def edge_cover(curve: CurveApprox) -> Counter:
    """Traversal count per geometric edge."""
    if curve.segments[0].edge is not None:
        return Counter(s.edge for s in curve.segments)
    return Counter(frozenset((s.geoStart, s.geoEnd)) for s in curve.segments)


def export_csv(curve: CurveApprox, idmap: IdentificationMap | None = None) -> str:
    idmap = idmap or identify(curve)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t_num", "t_den", "x", "y", "class_id", "is_jump"])
    D = curve.D
    for s in curve.segments:
        k = int(s.paramStart * D)
        x, y = s.geoStart.project()
        w.writerow([k, k, D, f"{x:.17g}", f"{y:.17g}", idmap.classOf[k], int(s.isJump)])
    return buf.getvalue()
