"""Weighted graphs Gamma_m, energies, harmonic extension and network traces."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize

from .curves import CurveApprox, FractalId, IdentificationMap, generate, identify

SQRT161 = math.sqrt(161.0)
PG_B = (1.0 + SQRT161) / 10.0
PG_R = (SQRT161 - 9.0) / 8.0


class GraphError(ValueError):
    pass


class UnsupportedFractalError(GraphError):
    pass


@dataclass
class WeightedGraph:
    fractal: FractalId
    level: int
    idmap: IdentificationMap
    vertices: list  # class ids (smallest member k)
    mu: dict  # class id -> Fraction
    edges: dict  # (u, v) with u < v -> {"conductance", "param_length", "multiplicity", ...}
    selfEdges: dict = field(default_factory=dict)  # u -> multiplicity, inert
    slots: dict = field(default_factory=dict)  # class id -> list of neighbour class ids (with repeats)

    @property
    def index(self):
        return {v: i for i, v in enumerate(self.vertices)}

    def conductance_matrix(self) -> np.ndarray:
        """Matrix of the energy form sum c(x,y)(u(x)-u(y))^2."""
        idx = self.index
        n = len(self.vertices)
        Cm = np.zeros((n, n))
        for (u, v), e in self.edges.items():
            i, j = idx[u], idx[v]
            c = e["conductance"]
            Cm[i, j] -= c
            Cm[j, i] -= c
            Cm[i, i] += c
            Cm[j, j] += c
        return Cm


def build_graph(curve: CurveApprox, idmap: IdentificationMap | None = None, b: float = PG_B) -> WeightedGraph:
    idmap = idmap or identify(curve)
    if idmap.level != curve.level or idmap.fractal != curve.fractal:
        raise GraphError("identification map does not belong to this curve")
    D = curve.D
    cls = idmap.classOf
    vertices = list(idmap.vertex_ids())
    mu = {v: Fraction(0) for v in vertices}
    edges = {}
    selfE = {}
    slots = {v: [] for v in vertices}
    segs = curve.segments
    for s in segs:
        k0 = int(s.paramStart * D)
        k1 = int(s.paramEnd * D) % D
        u, v = cls[k0], cls[k1]
        slots[u].append(v)
        slots[v].append(u)
        length = s.paramEnd - s.paramStart
        if curve.fractal is FractalId.PG:
            c = b if s.typeTag.endswith("mid") else 1.0
        else:
            c = 1.0
        if u == v:
            selfE[u] = selfE.get(u, 0) + 1
            continue
        key = (min(u, v), max(u, v))
        e = edges.setdefault(key, {"conductance": 0.0, "param_length": Fraction(0), "multiplicity": 0, "long": 0})
        e["conductance"] += c
        e["param_length"] += length
        e["multiplicity"] += 1
        if curve.fractal is FractalId.PG and s.typeTag.endswith("mid"):
            e["long"] += 1
    # measure
    if curve.fractal is FractalId.PG:
        for k, v in cls.items():
            mu[v] += Fraction(1 if k % 5 == 0 else 2, D)
    else:
        for k, v in cls.items():
            mu[v] += Fraction(1, D)
    return WeightedGraph(curve.fractal, curve.level, idmap, vertices, mu, edges, selfE, slots)


def graph_for(fractal, level, b: float = PG_B) -> WeightedGraph:
    c = generate(fractal, level)
    return build_graph(c, identify(c), b)


def energy(graph: WeightedGraph, u, scale: float = 1.0) -> float:
    """E(u) = sum c(x,y)(u(x)-u(y))^2 times an optional scale such as r^-m.

    ``u`` is a mapping from class id to value or an array in vertex order.
    """
    idx = graph.index
    if isinstance(u, dict):
        val = u
    else:
        val = {v: u[i] for v, i in idx.items()}
    tot = 0.0
    for (a, b), e in graph.edges.items():
        tot += e["conductance"] * (val[a] - val[b]) ** 2
    return scale * tot


def embedding(coarse: WeightedGraph, fine: WeightedGraph) -> dict:
    """Coarse class id -> fine class id, via k -> (D'/D) k."""
    if coarse.fractal not in (FractalId.SG, FractalId.PG, FractalId.TRIANGLE):
        raise UnsupportedFractalError(f"{coarse.fractal.value} identifications do not persist")
    ratio = fine.idmap.D // coarse.idmap.D
    emb = {}
    for k, v in coarse.idmap.classOf.items():
        w = fine.idmap.classOf.get(k * ratio)
        if w is None:
            raise GraphError(f"coarse point {k} has no fine image")
        if emb.setdefault(v, w) != w:
            raise GraphError(f"coarse class {v} splits at the finer level")
    return emb


def trace_form(Cm: np.ndarray, anchors) -> np.ndarray:
    """Schur complement of the form Cm onto the index set ``anchors``."""
    anchors = list(anchors)
    if not anchors:
        raise GraphError("anchor set is empty")
    n = Cm.shape[0]
    aset = set(anchors)
    free = [i for i in range(n) if i not in aset]
    if not free:
        return Cm[np.ix_(anchors, anchors)].copy()
    A = Cm[np.ix_(anchors, anchors)]
    B = Cm[np.ix_(anchors, free)]
    F = Cm[np.ix_(free, free)]
    if np.linalg.matrix_rank(F) < len(free):
        raise GraphError("interior block is singular (a free component is disconnected from the anchors)")
    return A - B @ np.linalg.solve(F, B.T)


def harmonic_extension(coarse: WeightedGraph, fine: WeightedGraph, u) -> np.ndarray:
    """Energy-minimizing extension of coarse vertex values to the fine graph."""
    emb = embedding(coarse, fine)
    cidx, fidx = coarse.index, fine.index
    uu = np.asarray([u[v] for v in coarse.vertices] if isinstance(u, dict) else u, dtype=float)
    anchors = [fidx[emb[v]] for v in coarse.vertices]
    Cm = fine.conductance_matrix()
    n = Cm.shape[0]
    aset = set(anchors)
    free = [i for i in range(n) if i not in aset]
    out = np.zeros(n)
    out[anchors] = uu[[cidx[v] for v in coarse.vertices]]
    if free:
        F = Cm[np.ix_(free, free)]
        B = Cm[np.ix_(free, anchors)]
        out[free] = -np.linalg.solve(F, B @ out[anchors])
    return out


def _pg_traced_ratio(b: float):
    """Trace the level-2 network (long conductance b) onto level-1 vertices.

    Returns (short, long) effective conductances; they are averaged over the
    level-1 edges of each kind.
    """
    g1 = graph_for(FractalId.PG, 1, b)
    g2 = graph_for(FractalId.PG, 2, b)
    emb = embedding(g1, g2)
    idx2 = g2.index
    anchors = [idx2[emb[v]] for v in g1.vertices]
    T = trace_form(g2.conductance_matrix(), anchors)
    idx1 = g1.index
    short, long_ = [], []
    for (a, c), e in g1.edges.items():
        val = -T[idx1[a], idx1[c]]
        (long_ if e["long"] else short).append(val)
    return float(np.mean(short)), float(np.mean(long_))


def solve_pg_renormalization(bracket=(0.5, 3.0), xtol=1e-14):
    """Find b with traced long/short ratio equal to b; r is the traced short conductance."""

    def f(b):
        s, l = _pg_traced_ratio(b)
        return l / s - b

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise GraphError(f"no sign change on bracket [{lo}, {hi}]: f = ({flo:.3g}, {fhi:.3g})")
    try:
        b = optimize.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    except RuntimeError as exc:  # pragma: no cover
        raise GraphError(f"root finder failed on [{lo}, {hi}]: {exc}") from exc
    s, _ = _pg_traced_ratio(b)
    return b, s


def export_csv(graph: WeightedGraph):
    """Edge table and vertex table as two CSV strings."""
    eb = io.StringIO()
    w = csv.writer(eb, lineterminator="\n")
    w.writerow(["u", "v", "conductance", "param_length", "multiplicity"])
    for (a, c), e in sorted(graph.edges.items()):
        w.writerow([a, c, repr(e["conductance"]), str(e["param_length"]), e["multiplicity"]])
    vb = io.StringIO()
    w = csv.writer(vb, lineterminator="\n")
    w.writerow(["class_id", "measure", "member_ks"])
    for cl in graph.idmap.classes:
        w.writerow([cl[0], str(graph.mu[cl[0]]), " ".join(map(str, cl))])
    return eb.getvalue(), vb.getvalue()
