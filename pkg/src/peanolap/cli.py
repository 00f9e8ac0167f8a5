"""Command-line entry point: ``peanolap <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 numerical failure (including failed
fixtures under ``verify``), 4 resource cap exceeded.

TRIANGLE levels follow the tabulated indexing: ``--level m`` builds the curve
of level m+1.  ``--curve-level`` sets the curve level directly for any fractal.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .curves import CurveError, FractalId, LevelCapError, export_csv, generate, identify
from .graphs import GraphError, build_graph, solve_pg_renormalization
from .reports import (
    ReportError,
    RunManifest,
    SpectrumCache,
    fixture_groups,
    run_fixtures,
    spectrum_csv,
    spectrum_json,
    weyl_csv,
)
from .spectra import BETA, SpectralError, assemble, eigensolve, gaps, weyl

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4

CONFIG_KEYS = {"fractal", "level", "curve_level", "count", "scheme", "format", "out", "threads",
               "tol_rel", "tol_abs", "cache", "threshold", "beta", "index", "display"}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.lstrip("-").replace("-", "_")
        if k not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {k!r}")
        out[k] = v
    return out


def _merge_config(args, cfg):
    conv = {"level": int, "curve_level": int, "count": int, "threads": int, "index": int,
            "tol_rel": float, "tol_abs": float, "threshold": float, "beta": float,
            "display": lambda s: s.lower() in ("1", "true", "yes", "on")}
    for k, v in cfg.items():
        if hasattr(args, k) and getattr(args, k) is None:
            setattr(args, k, conv.get(k, str)(v))


def curve_level(args) -> int:
    if args.curve_level is not None:
        return args.curve_level
    if args.level is None:
        raise UsageError("--level or --curve-level is required")
    f = FractalId.parse(args.fractal)
    return args.level + 1 if f is FractalId.TRIANGLE else args.level


def _fractal(args) -> FractalId:
    if args.fractal is None:
        raise UsageError("--fractal is required")
    return FractalId.parse(args.fractal)


def _emit(args, text: str, suffix: str, manifest: RunManifest | None = None):
    if args.out:
        out = Path(args.out)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text, encoding="utf-8")
            if manifest is not None:
                out.with_name(out.stem + ".manifest.json").write_text(manifest.to_json(), encoding="utf-8")
        except OSError as exc:
            raise ReportError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _effective_config(args) -> dict:
    return {k: getattr(args, k) for k in sorted(CONFIG_KEYS) if getattr(args, k, None) is not None}


def _solve(f, m, args, vectors=False):
    """Spectrum with the optional cache; returns (result, manifest)."""
    manifest = RunManifest(f.value, m, scheme=args.scheme or "raw", relTol=args.tol_rel or 1e-6,
                           absTol=args.tol_abs, count=None, vectors=vectors, config=_effective_config(args))
    cache_dir = args.cache or os.environ.get("PEANOLAP_CACHE")
    cache = SpectrumCache(cache_dir) if cache_dir else None
    res = cache.lookup(manifest) if cache else None
    if res is None:
        curve = generate(f, m)
        L = assemble(build_graph(curve, identify(curve)), manifest.scheme)
        n = L.C.shape[0]
        res = eigensolve(L, count=args.count if n > 6000 else None, vectors=vectors)
        if cache:
            cache.store(manifest, res)
    manifest.dimension = int(res.metadata.get("dimension", len(res.eigenvalues)))
    return res, manifest


def _truncate(res, count):
    if count is None or count >= len(res.eigenvalues):
        return res
    from .spectra import SpectralResult

    vec = None if res.eigenvectors is None else res.eigenvectors[:, :count]
    return SpectralResult(res.fractal, res.level, res.eigenvalues[:count], vec, res.vertices, res.metadata)


# ---------------------------------------------------------------------------
# commands


def cmd_curve(args):
    f = _fractal(args)
    m = curve_level(args)
    curve = generate(f, m)
    text = export_csv(curve, identify(curve))
    if args.format == "json":
        rows = list(csv.DictReader(io.StringIO(text)))
        text = json.dumps(rows, indent=1) + "\n"
    _emit(args, text, ".csv")
    return EXIT_OK


def cmd_spectrum(args):
    f = _fractal(args)
    m = curve_level(args)
    res, manifest = _solve(f, m, args)
    scheme = args.scheme or "raw"
    if scheme == "renorm" and f not in (FractalId.PG, FractalId.OG, FractalId.MC):
        scheme = "ratio"
    shown = _truncate(res, args.count)
    if args.format == "json":
        text = spectrum_json(shown)
    else:
        text = spectrum_csv(res, scheme, display=bool(args.display), relTol=args.tol_rel or 1e-6,
                            absTol=args.tol_abs)
        if args.count is not None:
            lines = text.splitlines(keepends=True)
            text = "".join(lines[: 2 + args.count])
    _emit(args, text, ".csv", manifest)
    return EXIT_OK


def cmd_eigenfunction(args):
    from .analysis import (
        AnalysisError,
        SymmetryError,
        classify_eigenspace,
        detect_period,
        dihedral_generators,
        geometric_permutation,
        periodic_basis,
        primitivity,
        pullback,
    )
    from .spectra import cluster_multiplicities, spectrum

    f = _fractal(args)
    m = curve_level(args)
    if args.index is None or args.index < 1:
        raise UsageError("--index (1-based) is required")
    curve = generate(f, m)
    idmap = identify(curve)
    L = assemble(build_graph(curve, idmap))
    res = eigensolve(L, vectors=True)
    if args.index > len(res.eigenvalues):
        raise UsageError(f"--index {args.index} exceeds the {len(res.eigenvalues)} computed eigenvalues")
    j = args.index - 1
    cl = [c for c in cluster_multiplicities(res, args.tol_rel or 1e-6, args.tol_abs) if c[2] <= j < c[2] + c[0]][0]
    # inside a degenerate eigenspace, prefer the basis vectors with the shortest period
    W, _ = periodic_basis(res.eigenvectors[:, cl[2] : cl[2] + cl[0]], curve, idmap)
    series = pullback(W[:, j - cl[2]], curve, idmap)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t", "class_id", "value"])
    for k, t, c, v in series:
        w.writerow([k, f"{t.numerator}/{t.denominator}", c, repr(v)])
    report = {"index": args.index, "eigenvalue": float(res.eigenvalues[j]),
              "period": None, "label": None, "characters": None, "primitive": None}
    per = detect_period(series, idmap.D)
    report["period"] = None if per is None else str(per)
    report["multiplicity"] = cl[0]
    try:
        perms = {k: geometric_permutation(curve, idmap, g) for k, g in dihedral_generators(curve).items()}
        sr = classify_eigenspace(res, L, cl[2], cl[0], perms)
        report["label"], report["characters"] = sr.label, sr.characters
    except (AnalysisError, SymmetryError) as exc:
        report["label"] = f"unclassified: {exc}"
    if m > 0:
        try:
            prev = spectrum(f, m - 1)
            flags = primitivity(prev.eigenvalues, res.eigenvalues)
            report["primitive"] = [d["primitive"] for d in flags if d["start"] == cl[2]][0]
        except (CurveError, SpectralError, IndexError):
            pass
    text = buf.getvalue()
    if args.format == "json":
        text = json.dumps({"series": [{"k": k, "t": str(t), "class_id": c, "value": v} for k, t, c, v in series],
                           "symmetry": report}, indent=1) + "\n"
    _emit(args, text, ".csv")
    if args.out:
        out = Path(args.out)
        out.with_name(out.stem + ".symmetry.json").write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    else:
        sys.stderr.write(json.dumps(report) + "\n")
    return EXIT_OK


def cmd_renorm(args):
    b, r = solve_pg_renormalization()
    if args.format == "json":
        text = json.dumps({"b": b, "r": r}) + "\n"
    else:
        text = f"b = {b:.6f}, r = {r:.6f}\n"
    _emit(args, text, ".txt")
    return EXIT_OK


def cmd_gaps(args):
    f = _fractal(args)
    m = curve_level(args)
    res, manifest = _solve(f, m, args)
    thr = args.threshold if args.threshold is not None else 1.15
    rows = gaps(res, thr)
    if args.format == "json":
        text = json.dumps([{"k": k, "ratio": q} for k, q in rows], indent=1) + "\n"
    else:
        text = "k,ratio\n" + "".join(f"{k},{q:.4f}\n" if args.display else f"{k},{q!r}\n" for k, q in rows)
    _emit(args, text, ".csv", manifest)
    return EXIT_OK


def cmd_weyl(args):
    f = _fractal(args)
    m = curve_level(args)
    beta = args.beta if args.beta is not None else BETA.get(f)
    if beta is None:
        raise UsageError(f"--beta is required for {f.value}")
    res, manifest = _solve(f, m, args)
    series = weyl(res, beta)
    if args.format == "json":
        text = json.dumps({"beta": beta, "x": series.x.tolist(), "rho": series.rho.tolist(),
                           "weyl_ratio": series.ratio.tolist()}) + "\n"
    else:
        text = weyl_csv(series)
    _emit(args, text, ".csv", manifest)
    return EXIT_OK


def cmd_verify(args):
    selection = None if args.all or not args.select else args.select
    try:
        report = run_fixtures(selection)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    if args.format == "json":
        text = report.to_json()
    else:
        lines = []
        for r in report.results:
            status = "PASS" if r.passed else ("KNOWN" if r.known_discrepancy else "FAIL")
            exp = "" if r.expected is None else f"{r.expected:.10g}"
            act = "" if r.actual is None else f"{r.actual:.10g}"
            lines.append(f"{status} {r.fixture_id}  expected={exp} actual={act} tol={r.tolerance:.3g}  [{r.citation}]"
                         + (f"  {r.note}" if r.note else ""))
        n_pass = sum(r.passed for r in report.results)
        n_known = sum((not r.passed) and bool(r.known_discrepancy) for r in report.results)
        lines.append(f"{n_pass} passed, {n_known} documented discrepancies, {len(report.failures)} failed")
        text = "\n".join(lines) + "\n"
    _emit(args, text, ".txt")
    failed = report.failures if not args.strict else [r for r in report.results if not r.passed]
    return EXIT_NUMERIC if failed else EXIT_OK


# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--fractal", type=str.upper, choices=[f.value for f in FractalId], default=None)
    p.add_argument("--level", type=int, default=None, help="level (TRIANGLE: tabulated level, curve level m+1)")
    p.add_argument("--curve-level", type=int, default=None, help="curve level, bypassing the TRIANGLE offset")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--scheme", choices=["raw", "renorm", "ratio", "table"], default=None)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--tol-rel", type=float, default=None)
    p.add_argument("--tol-abs", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--cache", default=None, help="spectrum cache directory (or PEANOLAP_CACHE)")
    p.add_argument("--display", action="store_true", default=None, help="4-decimal output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peanolap", description="Spectra of Laplacians on fractals built from Peano curves.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {
        "curve": (cmd_curve, "export the curve approximation"),
        "spectrum": (cmd_spectrum, "eigenvalues with multiplicities"),
        "eigenfunction": (cmd_eigenfunction, "pull an eigenfunction back to the circle"),
        "renorm": (cmd_renorm, "solve the PG renormalization"),
        "gaps": (cmd_gaps, "spectral gaps above a ratio threshold"),
        "weyl": (cmd_weyl, "counting function and Weyl ratio"),
        "verify": (cmd_verify, "check the embedded table fixtures"),
    }
    for name, (fn, helptext) in cmds.items():
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(func=fn)
        if name == "eigenfunction":
            p.add_argument("--index", type=int, default=None)
        if name == "gaps":
            p.add_argument("--threshold", type=float, default=None)
        if name == "weyl":
            p.add_argument("--beta", type=float, default=None)
        if name == "verify":
            p.add_argument("--all", action="store_true")
            p.add_argument("--select", nargs="+", metavar="GROUP", help=f"groups: {', '.join(fixture_groups())}")
            p.add_argument("--strict", action="store_true", help="count documented discrepancies as failures")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config:
            _merge_config(args, read_config(args.config))
        if args.fractal is not None:
            args.fractal = FractalId.parse(args.fractal).value
        for k in ("index", "threshold", "beta"):
            if not hasattr(args, k):
                setattr(args, k, None)
        if args.count is not None and args.count < 1:
            raise UsageError("--count must be positive")
        limit = contextlib.nullcontext()
        if args.threads:
            from threadpoolctl import threadpool_limits

            limit = threadpool_limits(args.threads)
        with limit:
            return args.func(args)
    except UsageError as exc:
        print(f"peanolap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LevelCapError as exc:
        print(f"peanolap: level cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except CurveError as exc:
        print(f"peanolap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpectralError, GraphError, np.linalg.LinAlgError) as exc:
        print(f"peanolap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ReportError as exc:
        print(f"peanolap: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
