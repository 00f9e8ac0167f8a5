"""Laplacian assembly, eigensolves, clustering, normalization, counting and gaps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .curves import FractalId
from .graphs import PG_B, PG_R, WeightedGraph

# constant in -Delta u = K (u - average over traversal slots)
SLOT_CONSTANT = {FractalId.OG: 4.0, FractalId.MC: 12.0, FractalId.TORUS: 4.0, FractalId.TRIANGLE: 6.0}

OG_FACTOR = 14.885  # 8/r, median level-ratio estimate
OG_TABLE_FACTOR = 14.9  # value used by the printed renormalized table
MC_FACTOR = 6.4
DENSE_MAX = 6000


class SpectralError(RuntimeError):
    pass


class ConstructionError(SpectralError):
    pass


@dataclass
class LaplacianOperator:
    fractal: FractalId
    level: int
    C: np.ndarray  # symmetric stiffness
    M: np.ndarray  # measure diagonal (1-d)
    vertices: list
    scheme: str = "raw"

    def matrix(self) -> np.ndarray:
        """Non-symmetric operator -Delta = M^-1 C."""
        return self.C / self.M[:, None]

    def symmetric(self) -> np.ndarray:
        s = 1.0 / np.sqrt(self.M)
        return self.C * s[:, None] * s[None, :]

    def apply(self, u) -> np.ndarray:
        return (self.C @ np.asarray(u, dtype=float)) / self.M


@dataclass
class SpectralResult:
    fractal: FractalId
    level: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None  # columns, mu-orthonormal, vertex order
    vertices: list | None = None
    metadata: dict = field(default_factory=dict)


def _slot_rows(graph: WeightedGraph, K: float):
    """Check every row against the cited formula and return (C, M)."""
    idx = graph.index
    n = len(graph.vertices)
    nseg = sum(len(v) for v in graph.slots.values()) // 2
    w = 1.0 / (2 * nseg)
    A = np.zeros((n, n))
    deg = np.zeros(n)
    for v, nb in graph.slots.items():
        i = idx[v]
        deg[i] = len(nb)
        for y in nb:
            A[i, idx[y]] += 1
    if graph.fractal is FractalId.MC:
        _check_mc_rows(graph, deg, A)
    if graph.fractal is FractalId.TRIANGLE:
        _check_triangle_rows(graph, deg, A)
    C = K * w * (np.diag(deg) - A)
    M = w * deg
    return C, M


def _check_mc_rows(graph, deg, A):
    # 2 identifications: 12u - 3 sum over 4 slots; 6 identifications: 12u - sum over 12
    # slots, where 4 slots are self-loops at singular points new at this level (8u - sum)
    for i, v in enumerate(graph.vertices):
        loops = A[i, i]
        if (deg[i] == 4 and loops == 0) or (deg[i] == 12 and loops in (0, 4)):
            continue
        raise ConstructionError(f"MC vertex {v}: neighbour structure matches no case (deg {deg[i]:g}, loops {loops:g})")


def _check_triangle_rows(graph, deg, A):
    for i, v in enumerate(graph.vertices):
        row = A[i][A[i] > 0]
        if deg[i] in (2, 6, 12) and A[i, i] == 0 and row.max() <= 3:
            continue
        raise ConstructionError(f"TRIANGLE vertex {v}: unexpected neighbour structure {sorted(row)}")


def assemble(graph: WeightedGraph, scheme: str = "raw", r: float = PG_R) -> LaplacianOperator:
    f = graph.fractal
    if f in SLOT_CONSTANT:
        C, M = _slot_rows(graph, SLOT_CONSTANT[f])
    elif f in (FractalId.PG, FractalId.SG):
        C = graph.conductance_matrix()
        if f is FractalId.PG:
            C = C * r ** (-graph.level)
        M = np.array([float(graph.mu[v]) for v in graph.vertices])
    else:  # pragma: no cover
        raise ConstructionError(f"no operator for {f}")
    return LaplacianOperator(f, graph.level, C, M, list(graph.vertices), scheme)


def _sign_fix(V):
    for j in range(V.shape[1]):
        col = V[:, j]
        i = int(np.argmax(np.abs(col) > np.abs(col).max() * (1 - 1e-9)))
        if col[i] < 0:
            V[:, j] = -col
    return V


def eigensolve(L: LaplacianOperator, count: int | None = None, vectors: bool = True) -> SpectralResult:
    n = L.C.shape[0]
    S = L.symmetric()
    S = 0.5 * (S + S.T)
    s = 1.0 / np.sqrt(L.M)
    if n <= DENSE_MAX:
        if vectors:
            w, V = linalg.eigh(S)
        else:
            w, V = linalg.eigh(S, eigvals_only=True), None
        if count is not None:
            w = w[:count]
            V = None if V is None else V[:, :count]
        path = "dense"
    else:
        if count is None:
            raise SpectralError(f"dimension {n} > {DENSE_MAX} needs an explicit count")
        w, V = splinalg.eigsh(sparse.csr_matrix(S), k=count, sigma=-1e-3, which="LM")
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        path = "iterative"
    if V is not None:
        V = _sign_fix(V * s[:, None])
        R = L.C @ V - (L.M[:, None] * V) * w[None, :]
        res = float(np.max(np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(V, axis=0), 1e-300)))
        if res > 1e-6 * max(1.0, float(np.max(np.abs(w)))):
            raise SpectralError(f"eigensolve residual {res:.3e} too large")
    meta = {"dimension": n, "solver": path, "scheme": L.scheme}
    return SpectralResult(L.fractal, L.level, np.asarray(w), V, list(L.vertices), meta)


def cluster_multiplicities(values, relTol: float = 1e-6, absTol: float | None = None):
    """Greedy clusters as (multiplicity, representative, first index)."""
    vals = np.asarray(values.eigenvalues if isinstance(values, SpectralResult) else values, dtype=float)
    if len(vals) == 0:
        return []
    if absTol is None:
        absTol = 1e-9 * max(1.0, float(np.max(np.abs(vals))))
    out = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > max(absTol, relTol * abs(vals[i])):
            out.append((i - start, float(np.mean(vals[start:i])), start))
            start = i
    return out


def pg_table_factor(level: int, r: float = PG_R) -> float:
    """Factor turning r^-m normalized PG eigenvalues into the tabulated convention."""
    return 1.0 if level <= 1 else r


TRIANGLE_TABLE_SCALE = 1.0 / 3.0


def normalize(res, mode: str = "raw", factor: float | None = None, digits: int = 4) -> np.ndarray:
    """Rescale eigenvalues.

    raw | renorm (per-level factor) | ratio (divide by lambda_2) |
    table (tabulation convention, PG and TRIANGLE) |
    table_ratio (ratio of table values after rounding to ``digits`` decimals).
    """
    vals = np.asarray(res.eigenvalues, dtype=float)
    f, m = res.fractal, res.level
    if mode == "raw":
        return vals.copy()
    if mode == "ratio":
        if len(vals) < 2 or vals[1] <= 0:
            raise SpectralError("ratio-to-first needs a positive second eigenvalue")
        return vals / vals[1]
    if mode == "table":
        if f is FractalId.PG:
            return vals * pg_table_factor(m)
        if f is FractalId.TRIANGLE:
            return vals * TRIANGLE_TABLE_SCALE
        raise SpectralError("table mode applies to PG and TRIANGLE")
    if mode == "table_ratio":
        t = np.round(normalize(res, "table"), digits)
        if len(t) < 2 or t[1] <= 0:
            raise SpectralError("ratio-to-first needs a positive second eigenvalue")
        return t / t[1]
    if mode == "renorm":
        if f is FractalId.OG:
            return vals * (factor or OG_FACTOR) ** m
        if f is FractalId.MC:
            return vals * (factor or MC_FACTOR) ** m
        if f is FractalId.PG:
            return vals.copy()  # conductances already carry r^-m
        return normalize(res, "ratio")
    raise SpectralError(f"unknown normalization mode {mode!r}")


def level_ratios(coarse, fine) -> np.ndarray:
    a = np.asarray(getattr(coarse, "eigenvalues", coarse), dtype=float)
    b = np.asarray(getattr(fine, "eigenvalues", fine), dtype=float)
    n = min(len(a), len(b))
    with np.errstate(divide="ignore", invalid="ignore"):
        return a[:n] / b[:n]


def estimate_factor(coarse, fine, count: int = 10) -> float:
    """Median ratio over the first nonzero matched eigenvalues."""
    r = level_ratios(coarse, fine)[1 : count + 1]
    return float(np.median(r))


def counting(res):
    """Right-continuous rho(x) = #{lambda_j <= x}."""
    vals = np.sort(np.asarray(getattr(res, "eigenvalues", res), dtype=float))

    def rho(x):
        return np.searchsorted(vals, np.asarray(x), side="right")

    return rho


@dataclass
class WeylSeries:
    x: np.ndarray
    rho: np.ndarray
    ratio: np.ndarray
    beta: float


def weyl(res, beta: float, tol: float = 1e-9) -> WeylSeries:
    if beta <= 0:
        raise SpectralError("beta must be positive")
    vals = np.sort(np.asarray(getattr(res, "eigenvalues", res), dtype=float))
    xs = np.unique(vals[vals > tol])
    rho = counting(vals)(xs)
    return WeylSeries(xs, rho, rho / xs**beta, beta)


BETA = {
    FractalId.PG: math.log(5) / (math.log(5) - math.log(PG_R)),
    FractalId.OG: 0.7213,
    FractalId.MC: 1.2,
}


def gaps(res, threshold: float, tol: float = 1e-9):
    """Indices k (1-based) with lambda_{k+1}/lambda_k >= threshold."""
    vals = np.asarray(getattr(res, "eigenvalues", res), dtype=float)
    out = []
    for k in range(1, len(vals)):
        lo = vals[k - 1]
        if lo <= tol:
            continue
        q = vals[k] / lo
        if q >= threshold:
            out.append((k, float(q)))
    return out


def spectrum(fractal, level: int, scheme: str = "raw", vectors: bool = False, count=None) -> SpectralResult:
    """Convenience pipeline: curve -> graph -> operator -> eigenvalues."""
    from .graphs import graph_for

    g = graph_for(fractal, level, PG_B)
    res = eigensolve(assemble(g, scheme), count=count, vectors=vectors)
    return res
