"""Serialization, run manifests, the spectrum cache and the table fixtures."""
from __future__ import annotations

import ast
import csv
import hashlib
import io
import json
import math
import operator
import os
import tempfile
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .curves import FractalId
from .spectra import (
    SpectralResult,
    SpectralError,
    cluster_multiplicities,
    normalize,
    spectrum,
)

SPECTRUM_COLUMNS = ["index", "multiplicity", "eigenvalue", "renormalized", "ratio_to_first"]


class ReportError(OSError):
    pass


# ---------------------------------------------------------------------------
# spectrum files


def _multiplicity_column(vals, relTol, absTol):
    out = np.zeros(len(vals), dtype=int)
    for mult, _, start in cluster_multiplicities(vals, relTol, absTol):
        out[start : start + mult] = mult
    return out


def spectrum_rows(res: SpectralResult, scheme: str = "raw", factor=None, relTol=1e-6, absTol=None):
    vals = np.asarray(res.eigenvalues, dtype=float)
    mult = _multiplicity_column(vals, relTol, absTol)
    ren = normalize(res, scheme, factor) if scheme != "raw" else vals
    ratio = vals / vals[1] if len(vals) > 1 and vals[1] > 0 else np.full(len(vals), np.nan)
    return [(i + 1, int(mult[i]), float(vals[i]), float(ren[i]), float(ratio[i])) for i in range(len(vals))]


def _fmt(x, display):
    if isinstance(x, int):
        return str(x)
    if math.isnan(x):
        return ""
    if display:
        return f"{x:.4f}".replace("-0.0000", "0.0000")
    return repr(float(x))


def spectrum_csv(res: SpectralResult, scheme: str = "raw", factor=None, display: bool = False,
                 relTol=1e-6, absTol=None) -> str:
    """CSV text; one comment line records the run and whether vectors are present."""
    buf = io.StringIO()
    has_vec = res.eigenvectors is not None
    buf.write(f"# fractal={res.fractal.value} level={res.level} scheme={scheme} "
              f"eigenvectors={'included' if has_vec else 'omitted'}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = list(SPECTRUM_COLUMNS)
    if has_vec:
        header += [f"v{v}" for v in res.vertices]
    w.writerow(header)
    for j, row in enumerate(spectrum_rows(res, scheme, factor, relTol, absTol)):
        out = [_fmt(x, display) for x in row]
        if has_vec:
            out += [_fmt(float(x), display) for x in res.eigenvectors[:, j]]
        w.writerow(out)
    return buf.getvalue()


def read_spectrum_csv(text: str):
    """Parse the CSV written by spectrum_csv into a list of dicts."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for r in rows:
        r["index"] = int(r["index"])
        r["multiplicity"] = int(r["multiplicity"])
        for k in ("eigenvalue", "renormalized", "ratio_to_first"):
            r[k] = float(r[k]) if r[k] else math.nan
    return rows


def result_to_dict(res: SpectralResult) -> dict:
    return {
        "fractal": res.fractal.value,
        "level": res.level,
        "eigenvalues": [float(x) for x in res.eigenvalues],
        "eigenvectors": None if res.eigenvectors is None else [[float(x) for x in row] for row in res.eigenvectors],
        "vertices": None if res.vertices is None else list(res.vertices),
        "metadata": res.metadata,
    }


def result_from_dict(d: dict) -> SpectralResult:
    vec = d.get("eigenvectors")
    return SpectralResult(
        FractalId.parse(d["fractal"]),
        int(d["level"]),
        np.asarray(d["eigenvalues"], dtype=float),
        None if vec is None else np.asarray(vec, dtype=float).reshape(len(d["vertices"]), -1),
        None if d.get("vertices") is None else list(d["vertices"]),
        dict(d.get("metadata") or {}),
    )


def spectrum_json(res: SpectralResult) -> str:
    return json.dumps(result_to_dict(res), sort_keys=True, indent=1) + "\n"


def _atomic_write(path: Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc


def write_spectrum(res: SpectralResult, path, format: str = "csv", scheme: str = "raw", factor=None,
                   display: bool = False) -> Path:
    path = Path(path)
    if format == "csv":
        text = spectrum_csv(res, scheme, factor, display)
    elif format == "json":
        text = spectrum_json(res)
    else:
        raise ValueError(f"unknown format {format!r}")
    _atomic_write(path, text)
    return path


def _result_from_csv(text: str) -> SpectralResult:
    head = dict(kv.split("=", 1) for kv in text.splitlines()[0].lstrip("# ").split())
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    vcols = [i for i, h in enumerate(header) if h.startswith("v")]
    vals = np.array([float(r[header.index("eigenvalue")]) for r in body])
    vec = np.array([[float(r[i]) for i in vcols] for r in body]).T if vcols else None
    verts = [int(header[i][1:]) for i in vcols] if vcols else None
    return SpectralResult(FractalId.parse(head["fractal"]), int(head["level"]), vals, vec, verts,
                          {"scheme": head.get("scheme", "raw")})


def read_spectrum(path) -> SpectralResult:
    """Read a file written by write_spectrum (either format)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc}") from exc
    if text.startswith("#"):
        return _result_from_csv(text)
    return result_from_dict(json.loads(text))


def weyl_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "rho", "weyl_ratio"])
    for x, r, q in zip(series.x, series.rho, series.ratio):
        w.writerow([repr(float(x)), int(r), repr(float(q))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# manifest and cache


def input_hash() -> str:
    """Hash of the packaged substitution data, which fixes every curve."""
    data = resources.files("peanolap").joinpath("data/substitutions.json").read_bytes()
    return hashlib.sha256(data).hexdigest()


# options that change where or how results are written, not the results
OUTPUT_ONLY = {"out", "cache", "threads", "format", "display"}


@dataclass
class RunManifest:
    fractal: str
    level: int
    scheme: str = "raw"
    relTol: float = 1e-6
    absTol: float | None = None
    count: int | None = None
    vectors: bool = False
    dimension: int | None = None
    version: str = __version__
    inputs: dict = field(default_factory=lambda: {"substitutions": input_hash()})
    config: dict = field(default_factory=dict)

    def key(self) -> str:
        d = asdict(self)
        d.pop("dimension")  # an output, not an input
        d["config"] = {k: v for k, v in d["config"].items() if k not in OUTPUT_ONLY}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"


class SpectrumCache:
    """Directory of ``<manifest-hash>.json`` entries."""

    def __init__(self, directory):
        self.dir = Path(directory)

    def path(self, manifest: RunManifest) -> Path:
        return self.dir / f"{manifest.key()}.json"

    def lookup(self, manifest: RunManifest) -> SpectralResult | None:
        p = self.path(manifest)
        if not p.exists():
            return None
        try:
            entry = json.loads(p.read_text(encoding="utf-8"))
            if entry.get("manifest", {}).get("version") != __version__:
                return None
            return result_from_dict(entry["result"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            warnings.warn(f"ignoring corrupt cache entry {p}: {exc}", RuntimeWarning, stacklevel=2)
            return None

    def store(self, manifest: RunManifest, res: SpectralResult) -> Path:
        p = self.path(manifest)
        entry = {"manifest": asdict(manifest), "result": result_to_dict(res)}
        _atomic_write(p, json.dumps(entry, sort_keys=True) + "\n")
        return p


def cache_lookup(cache: SpectrumCache, manifest: RunManifest):
    return cache.lookup(manifest)


def cache_store(cache: SpectrumCache, manifest: RunManifest, res: SpectralResult):
    return cache.store(manifest, res)


# ---------------------------------------------------------------------------
# fixtures

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.USub: operator.neg}


def eval_expr(text: str) -> float:
    """Evaluate a number or a small arithmetic expression using sqrt."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and getattr(node.func, "id", None) == "sqrt" and len(node.args) == 1:
            return math.sqrt(ev(node.args[0]))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(str(text), mode="eval"))


@dataclass(frozen=True)
class Fixture:
    id: str
    group: str
    citation: str
    kind: str
    params: dict
    expected: str | None
    tolerance: float
    multiplicity: int | None = None
    known_discrepancy: str | None = None
    rel_tolerance: float | None = None


@lru_cache(maxsize=1)
def load_fixtures() -> tuple:
    raw = json.loads(resources.files("peanolap").joinpath("data/fixtures.json").read_text(encoding="utf-8"))
    return tuple(Fixture(**d) for d in raw["fixtures"])


def fixture_groups():
    return sorted({f.group for f in load_fixtures()})


def select_fixtures(selection=None):
    fx = load_fixtures()
    if not selection:
        return list(fx)
    sel = {s.lower() for s in selection}
    out = [f for f in fx if f.group.lower() in sel or f.id.lower() in sel]
    unknown = sel - {f.group.lower() for f in out} - {f.id.lower() for f in out}
    if unknown:
        raise KeyError(f"unknown fixture selection: {', '.join(sorted(unknown))}")
    return out


@dataclass
class FixtureResult:
    fixture_id: str
    citation: str
    expected: float | None
    actual: float | None
    tolerance: float
    passed: bool
    deviation: float | None = None
    note: str = ""
    known_discrepancy: str | None = None

    def as_dict(self):
        return {
            "fixture_id": self.fixture_id,
            "citation": self.citation,
            "expected": self.expected,
            "actual": self.actual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "deviation": self.deviation,
            "note": self.note,
            "known_discrepancy": self.known_discrepancy,
        }


class _Spectra:
    def __init__(self):
        self._res = {}

    def __call__(self, fractal, level):
        key = (fractal, level)
        if key not in self._res:
            self._res[key] = spectrum(fractal, level)
        return self._res[key]


def _check_fixture(f: Fixture, spectra: _Spectra) -> FixtureResult:
    p = f.params
    note = ""
    if f.kind == "torus_oracle":
        from .analysis import torus_oracle

        res = spectra("TORUS", p["level"])
        dev = float(np.max(np.abs(res.eigenvalues - torus_oracle(p["level"]))))
        return FixtureResult(f.id, f.citation, 0.0, dev, f.tolerance, dev <= f.tolerance, dev,
                             "max |solver - closed form|", f.known_discrepancy)
    expected = eval_expr(f.expected)
    if f.kind in ("renorm_b", "renorm_r"):
        b, r = _renorm()
        actual = b if f.kind == "renorm_b" else r
    elif f.kind == "eigenvalue":
        res = spectra(p["fractal"], p["level"])
        vals = normalize(res, p.get("mode", "raw"), p.get("factor"))
        i = p["index"] - 1
        actual = float(vals[i])
        if f.multiplicity is not None:
            clusters = cluster_multiplicities(res)
            hit = [c for c in clusters if c[2] <= i < c[2] + c[0]]
            mult, start = hit[0][0], hit[0][2]
            if mult != f.multiplicity or start != i:
                note = f"cluster at index {start + 1} has multiplicity {mult}, expected {f.multiplicity} at {i + 1}"
    elif f.kind == "level_ratio":
        a = spectra(p["fractal"], p["level"])
        b = spectra(p["fractal"], p["level"] + 1)
        actual = float(a.eigenvalues[p.get("coarse_index", p["index"]) - 1] / b.eigenvalues[p["index"] - 1])
    elif f.kind == "gap":
        res = spectra(p["fractal"], p["level"])
        k = p["k"]
        actual = float(res.eigenvalues[k] / res.eigenvalues[k - 1])
    else:  # pragma: no cover
        raise ValueError(f"unknown fixture kind {f.kind}")
    dev = abs(actual - expected)
    tol = max(f.tolerance, (f.rel_tolerance or 0.0) * abs(expected))
    ok = dev <= tol and not note
    return FixtureResult(f.id, f.citation, expected, actual, tol, ok, dev, note, f.known_discrepancy)


@lru_cache(maxsize=1)
def _renorm():
    from .graphs import solve_pg_renormalization

    return solve_pg_renormalization()


@dataclass
class FixtureReport:
    results: list

    @property
    def failures(self):
        """Failures that are not documented discrepancies of the published tables."""
        return [r for r in self.results if not r.passed and not r.known_discrepancy]

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> str:
        return json.dumps([r.as_dict() for r in self.results], indent=1) + "\n"


def run_fixtures(selection=None) -> FixtureReport:
    spectra = _Spectra()
    out = []
    for f in select_fixtures(selection):
        try:
            out.append(_check_fixture(f, spectra))
        except (SpectralError, ArithmeticError, ValueError, IndexError) as exc:
            out.append(FixtureResult(f.id, f.citation, None, None, f.tolerance, False, None,
                                     f"error: {exc}", f.known_discrepancy))
    return FixtureReport(out)
