"""Symmetries, eigenspace labels, miniaturization, primitivity, oracles, pullbacks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .curves import CurveApprox, FractalId, IdentificationMap, sewing
from .exact import ExactPoint
from .spectra import LaplacianOperator, SpectralResult, cluster_multiplicities


class AnalysisError(ValueError):
    pass


class SymmetryError(AnalysisError):
    pass


@dataclass(frozen=True)
class CircleSymmetry:
    kind: str  # "translation" or "reflection"
    a: Fraction

    def image(self, k: int, D: int) -> int:
        shift = self.a * D
        if shift.denominator != 1:
            raise SymmetryError(f"{self} does not act on points k/{D}")
        s = int(shift)
        return (k + s) % D if self.kind == "translation" else (s - k) % D


def symmetry_permutation(idmap: IdentificationMap, sym: CircleSymmetry) -> np.ndarray:
    """perm[i] = index of the image class of vertex i (vertices in idmap order)."""
    verts = idmap.vertex_ids()
    index = {v: i for i, v in enumerate(verts)}
    perm = np.empty(len(verts), dtype=int)
    for i, cl in enumerate(idmap.classes):
        images = set()
        for k in cl:
            j = sym.image(k, idmap.D)
            if j not in idmap.classOf:
                raise SymmetryError(f"{sym} sends point {k} to {j}, which is not a parameter point")
            images.add(idmap.classOf[j])
        if len(images) != 1:
            raise SymmetryError(f"{sym} splits class {cl[0]}")
        perm[i] = index[images.pop()]
    if len(set(perm.tolist())) != len(perm):
        raise SymmetryError(f"{sym} is not a bijection on classes")
    return perm


def geometric_permutation(curve: CurveApprox, idmap: IdentificationMap, transform) -> np.ndarray:
    """Permutation of classes induced by a map on points (ExactPoint -> ExactPoint)."""
    where = {}
    for s in curve.segments:
        where[s.geoStart] = idmap.classOf[int(s.paramStart * curve.D)]
    verts = idmap.vertex_ids()
    index = {v: i for i, v in enumerate(verts)}
    perm = np.empty(len(verts), dtype=int)
    for pt, v in where.items():
        img = transform(pt)
        if img not in where:
            raise SymmetryError("point map does not preserve the vertex set")
        perm[index[v]] = index[where[img]]
    return perm


def _grid_transform(level, sewn, matrix):
    sw = sewing(level, sewn)
    N = sw.N

    def f(pt: ExactPoint):
        x, y = pt.coeffs[0] * N // pt.den, pt.coeffs[1] * N // pt.den
        X = matrix[0][0] * x + matrix[0][1] * y
        Y = matrix[1][0] * x + matrix[1][1] * y
        c = sw.canonical_point((X, Y))
        return ExactPoint.make(4, [c[0] % N, c[1] % N], N)

    return f


def dihedral_generators(curve: CurveApprox):
    """Rotation, and the two reflection classes, as point maps.

    Returns dict with keys ``rotation``, ``reflect_edge`` and ``reflect_vertex``
    (for the triangle and pentagon the two reflection classes coincide).
    """
    f = curve.fractal
    if f in (FractalId.MC, FractalId.TORUS):
        sewn = f is FractalId.MC
        lv = curve.level
        return {
            "rotation": _grid_transform(lv, sewn, ((0, -1), (1, 0))),
            "reflect_edge": _grid_transform(lv, sewn, ((-1, 0), (0, 1))),
            "reflect_vertex": _grid_transform(lv, sewn, ((0, 1), (1, 0))),
        }
    n = {FractalId.SG: 3, FractalId.TRIANGLE: 3, FractalId.PG: 5, FractalId.OG: 8}[f]
    z = ExactPoint.root(n, 1)
    return {
        "rotation": lambda p: p * z,
        "reflect_vertex": lambda p: p.conjugate(),
        "reflect_edge": lambda p: p.conjugate() * z,
    }


@dataclass
class SymmetryReport:
    eigenvalue: float
    multiplicity: int
    label: str | None
    characters: dict = field(default_factory=dict)
    periods: list = field(default_factory=list)
    residual: float = 0.0
    primitive: bool | None = None
    decomposition: dict = field(default_factory=dict)


def _action(V, M, perm):
    """Matrix of u -> u o g on the span of the mu-orthonormal columns V."""
    PV = V[perm, :]
    G = V.T @ (M[:, None] * PV)
    res = float(np.linalg.norm(PV - V @ G))
    return G, res


def dihedral_elements(perms: dict):
    """All elements r^j and s r^j of the group generated by ``rotation`` and
    ``reflect_vertex`` as (kind, j, permutation)."""
    r, sv = np.asarray(perms["rotation"]), np.asarray(perms["reflect_vertex"])
    ident = np.arange(len(r))
    out, p = [], ident
    for j in range(64):
        if j and np.array_equal(p, ident):
            break
        out.append(("rot", j, p))
        out.append(("ref", j, sv[p]))
        p = r[p]
    else:  # pragma: no cover
        raise SymmetryError("rotation has no finite order")
    return out


def _irreps(n):
    """Character functions chi(kind, j) of D_n keyed by label."""
    reps = {}
    signs = ((1, 1), (1, -1), (-1, 1), (-1, -1)) if n % 2 == 0 else ((1, 1), (1, -1))
    for a, b in signs:
        # a = rotation character, b = vertex reflection; edge reflection gets a*b
        lab = "1" + ("+" if a * b > 0 else "-") + ("+" if b > 0 else "-") if n % 2 == 0 else "1" + ("+" if b > 0 else "-")
        reps[lab] = (lambda a, b: lambda kind, j: a**j * (b if kind == "ref" else 1))(a, b)
    two = list(range(1, (n - 1) // 2 + 1))
    for k in two:
        lab = "2" if len(two) == 1 else f"2_{k}"
        reps[lab] = (lambda k: lambda kind, j: 0.0 if kind == "ref" else 2 * math.cos(2 * math.pi * j * k / n))(k)
    return reps


def dihedral_decomposition(traces):
    """Irreducible multiplicities from [(kind, j, trace)] over the whole group."""
    n = len(traces) // 2
    out = {}
    for lab, chi in _irreps(n).items():
        c = sum(t * chi(kind, j) for kind, j, t in traces) / (2 * n)
        k = int(round(c))
        if abs(c - k) > 1e-6:
            raise SymmetryError(f"non-integral multiplicity {c:.6f} for {lab}")
        if k:
            out[lab] = k
    return out


def _label(decomp):
    parts = []
    for lab, k in decomp.items():
        parts.append(lab if k == 1 else f"{k}x{lab}")
    return " + ".join(parts) if parts else None


def classify_eigenspace(res: SpectralResult, L: LaplacianOperator, start: int, mult: int,
                        perms: dict, circle: dict | None = None, tol: float = 1e-6) -> SymmetryReport:
    """Characters and irreducible decomposition of eigenvectors start..start+mult-1.

    ``perms`` maps generator names (``rotation``, ``reflect_vertex``, optionally
    ``reflect_edge``) to vertex permutations; ``circle`` maps translation amounts
    (Fraction) to permutations used for period detection.
    """
    if res.eigenvectors is None:
        raise AnalysisError("eigenvectors are required")
    V = res.eigenvectors[:, start : start + mult]
    M = L.M
    chars, worst = {}, 0.0
    for name, perm in perms.items():
        G, r = _action(V, M, perm)
        worst = max(worst, r)
        if r > tol * max(1.0, float(np.linalg.norm(V))):
            raise AnalysisError(f"{name} does not preserve eigenspace at index {start} (residual {r:.2e})")
        chars[name] = float(np.trace(G))
    decomp = {}
    if "rotation" in perms and "reflect_vertex" in perms:
        traces = [(kind, j, float(np.trace(_action(V, M, p)[0]))) for kind, j, p in dihedral_elements(perms)]
        decomp = dihedral_decomposition(traces)
    periods = []
    for a, perm in (circle or {}).items():
        G, r = _action(V, M, perm)
        if r <= tol and np.allclose(G, np.eye(mult), atol=1e-6):
            periods.append(a)
    lam = float(np.mean(res.eigenvalues[start : start + mult]))
    return SymmetryReport(lam, mult, _label(decomp), chars, periods, worst, decomposition=decomp)


def circle_character(res: SpectralResult, L: LaplacianOperator, start: int, mult: int, perm) -> np.ndarray:
    """Eigenvalues of the circle map action on the eigenspace (sorted real parts)."""
    V = res.eigenvectors[:, start : start + mult]
    G, r = _action(V, L.M, perm)
    return np.sort(np.linalg.eigvals(G).real)


def bipartite_partner(res: SpectralResult, L: LaplacianOperator, idmap: IdentificationMap, index: int, tol=1e-8):
    """u*(k) = (-1)^k u(k) for OG; returns (vector, partner eigenvalue)."""
    if res.fractal is not FractalId.OG:
        raise AnalysisError("bipartite pairing applies to OG")
    sign = np.empty(len(idmap.classes))
    for i, cl in enumerate(idmap.classes):
        par = {k % 2 for k in cl}
        if len(par) != 1:
            raise AnalysisError(f"class {cl[0]} mixes parities")
        sign[i] = -1.0 if par.pop() else 1.0
    u = res.eigenvectors[:, index]
    ustar = sign * u
    lam = 8.0 - float(res.eigenvalues[index])
    r = np.linalg.norm(L.C @ ustar - lam * L.M * ustar)
    if r > tol * max(1.0, np.linalg.norm(ustar)) * max(1.0, lam):
        raise AnalysisError(f"partner residual {r:.2e}")
    return ustar, lam


def miniaturize(u, coarse: IdentificationMap, fine: IdentificationMap, factor: int, twist: bool = False) -> np.ndarray:
    """v(t) = u(factor * t mod 1) sampled at the fine parameter points.

    With ``twist`` the sign of v flips on the second half of the circle; on OG
    this is the rule for eigenfunctions that are skew under t -> t + 1/2.
    """
    uval = u if isinstance(u, dict) else dict(zip(coarse.vertex_ids(), np.asarray(u, dtype=float)))
    Dc, Df = coarse.D, fine.D
    out = {}
    for k, cls in fine.classOf.items():
        num = Fraction(factor * k, Df) * Dc
        if num.denominator != 1 or int(num) % Dc not in coarse.classOf:
            raise AnalysisError(f"fine point {k} maps to a non-point of the coarse curve")
        val = uval[coarse.classOf[int(num) % Dc]]
        if twist and 2 * k >= Df:
            val = -val
        if cls in out and abs(out[cls] - val) > 1e-9 * max(1.0, abs(val)):
            raise AnalysisError(f"miniaturized function is not constant on fine class {cls}")
        out[cls] = val
    return np.array([out[v] for v in fine.vertex_ids()])


def split_by_circle(V, M, perm):
    """Split the span of V into the +1 and -1 eigenspaces of an involutive circle map."""
    G, r = _action(V, M, perm)
    if r > 1e-8:
        raise AnalysisError("circle map does not preserve the span")
    G = 0.5 * (G + G.T)
    w, U = np.linalg.eigh(G)
    plus = V @ U[:, w > 0]
    minus = V @ U[:, w < 0]
    return plus, minus


def miniaturize_og(V, L: LaplacianOperator, coarse: IdentificationMap, fine: IdentificationMap) -> np.ndarray:
    """Miniaturize an OG eigenspace (columns of V) from level m to m+1.

    Components symmetric under t -> t + 1/2 use u(8t); skew ones use the
    twisted copy.
    """
    perm = symmetry_permutation(coarse, CircleSymmetry("translation", Fraction(1, 2)))
    plus, minus = split_by_circle(np.atleast_2d(np.asarray(V, dtype=float).T).T, L.M, perm)
    cols = [miniaturize(plus[:, j], coarse, fine, 8) for j in range(plus.shape[1])]
    cols += [miniaturize(minus[:, j], coarse, fine, 8, twist=True) for j in range(minus.shape[1])]
    return np.array(cols).T


def rayleigh(L: LaplacianOperator, v) -> tuple:
    """(Rayleigh quotient, relative residual) of v for C v = lambda M v."""
    v = np.asarray(v, dtype=float)
    lam = float(v @ L.C @ v / (v @ (L.M * v)))
    r = np.linalg.norm(L.C @ v - lam * L.M * v) / max(np.linalg.norm(L.M * v) * max(abs(lam), 1.0), 1e-300)
    return lam, float(r)


def primitivity(prev, cur, tol: float = 1e-6):
    """Per cluster of ``cur``: 'derived' if its value already occurs in ``prev``."""
    pv = cluster_multiplicities(prev)
    out = []
    for mult, val, start in cluster_multiplicities(cur):
        match = [m for m, w, _ in pv if abs(w - val) <= tol * max(1.0, abs(val))]
        derived = bool(match) and match[0] <= mult
        out.append({"start": start, "multiplicity": mult, "eigenvalue": val, "primitive": not derived})
    return out


def torus_oracle(m: int) -> np.ndarray:
    N = 3**m
    p = np.arange(N)
    c = 2 - 2 * np.cos(2 * np.pi * p / N)
    return np.sort((c[:, None] + c[None, :]).ravel())


# corners of the reference triangle used for the Neumann eigenfunctions
TRIANGLE_CORNERS = np.array([[0.0, 0.0], [math.sqrt(3) / 2, 0.5], [math.sqrt(3) / 2, -0.5]])


def triangle_eigenfunction(p: int, q: int):
    v = np.array([1 / math.sqrt(3), 1 / 3])
    w = np.array([0.0, 2 / 3])
    pairs = [(p, q), (-p, -q), (-p, p + q), (q, -p - q), (-p - q, p), (p + q, -q)]

    def u(x):
        x = np.atleast_2d(x)
        tot = np.zeros(len(x), dtype=complex)
        for a, b in pairs:
            tot += np.exp(2j * np.pi * (x @ (a * v + b * w)))
        return tot.real

    return u


def triangle_lattice(level: int) -> np.ndarray:
    n = 2**level
    pts = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            a, b = i / n, j / n
            pts.append((1 - a - b) * TRIANGLE_CORNERS[0] + a * TRIANGLE_CORNERS[1] + b * TRIANGLE_CORNERS[2])
    return np.array(pts)


def triangle_oracle(p: int, q: int, level: int = 3):
    """(eigenvalue, lattice samples, representation label) for the (p, q) Neumann mode."""
    if p < 0 or q < 0:
        raise AnalysisError("p, q must be non-negative")
    lam = (4 * math.pi / 3) ** 2 * (p * p + q * q + p * q)
    pts = triangle_lattice(level)
    u = triangle_eigenfunction(p, q)
    return lam, u(pts), _triangle_rep(p, q)


def _triangle_rep(p, q, n=40, seed=7):
    if p == 0 and q == 0:
        return "1+"
    rng = np.random.default_rng(seed)
    ab = rng.random((n, 2))
    ab = ab[ab.sum(axis=1) <= 1]
    C = TRIANGLE_CORNERS
    x = C[0] + ab[:, :1] * (C[1] - C[0]) + ab[:, 1:] * (C[2] - C[0])
    c = C.mean(axis=0)
    th = 2 * math.pi / 3
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    xr = (x - c) @ R.T + c
    xf = x * np.array([1.0, -1.0])  # reflection through the corner at the origin
    basis = [triangle_eigenfunction(p, q)] + ([triangle_eigenfunction(q, p)] if p != q else [])
    B = np.stack([f(x) for f in basis], axis=1)
    Br = np.stack([f(xr) for f in basis], axis=1)
    Bf = np.stack([f(xf) for f in basis], axis=1)
    Gr = np.linalg.lstsq(B, Br, rcond=None)[0]
    Gf = np.linalg.lstsq(B, Bf, rcond=None)[0]
    tr, tf = np.trace(Gr), np.trace(Gf)
    if len(basis) == 1:
        return "1+" if tf > 0 else "1-"
    if abs(tr - 2) < 1e-6:
        return "1+ + 1-"
    return "2"


def pullback(u, curve: CurveApprox, idmap: IdentificationMap):
    """[(k, t, class_id, value)] for every parameter point, in curve order."""
    val = u if isinstance(u, dict) else dict(zip(idmap.vertex_ids(), np.asarray(u, dtype=float)))
    D = curve.D
    out = []
    for s in curve.segments:
        k = int(s.paramStart * D)
        c = idmap.classOf[k]
        out.append((k, Fraction(k, D), c, float(val[c])))
    return out


def periodic_basis(V, curve: CurveApprox, idmap: IdentificationMap,
                   candidates=(2, 3, 4, 5, 8, 12, 16, 20, 25, 32, 48, 64), tol=1e-8):
    """Rotate the mu-orthonormal columns V so the leading ones have the shortest period on the points.

    Returns (W, period) where the first columns of W span the vectors with
    u(t + period) = u(t); period is None when no candidate period occurs.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float).T).T
    row = {v: i for i, v in enumerate(idmap.vertex_ids())}
    D = idmap.D
    ks = sorted(idmap.classOf)
    X = V[[row[idmap.classOf[k]] for k in ks]]
    scale = max(float(np.abs(X).max()), 1e-300)
    for n in sorted(candidates, reverse=True):
        if D % n:
            continue
        s = D // n
        if any((k + s) % D not in idmap.classOf for k in ks):
            continue
        Y = V[[row[idmap.classOf[(k + s) % D]] for k in ks]]
        _, sv, Wt = np.linalg.svd(Y - X)
        sv = np.concatenate([sv, np.zeros(V.shape[1] - len(sv))])
        fixed = sv <= tol * scale * np.sqrt(len(ks))
        if fixed.any():
            C = np.concatenate([Wt[fixed], Wt[~fixed]]).T
            return V @ C, Fraction(1, n)
    return V, None


def detect_period(series, D: int, candidates=(2, 3, 4, 5, 8, 12, 16, 20, 25, 32, 48, 64), tol=1e-8):
    """Smallest 1/n (n from candidates) with u(t + 1/n) = u(t) on the series."""
    vals = {k: v for k, _, _, v in series}
    scale = max(1e-300, max(abs(v) for v in vals.values()))
    for n in sorted(candidates, reverse=True):
        if D % n:
            continue
        s = D // n
        if all(abs(v - vals.get((k + s) % D, math.inf)) <= tol * scale for k, v in vals.items()):
            return Fraction(1, n)
    return None
