"""Command-line interface: spec loading, builtin generators, subcommands.

Every subcommand writes its numeric outputs as files under ``--out`` with a
fixed 17-significant-digit format and rows ordered by canonical vertex id, so
repeated runs of the same configuration are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import FractalDistError, SpecValidationError
from .harmonic import (
    HarmonicStructure,
    check_structure_conditions,
    default_boundary_matrix,
)
from .measures import HarmonicTuple, cell_measure_table, default_tuple
from .structure import FractalSpec, VertexRef, _word_to_str, generate_spec

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_USAGE = 2

_BUILTIN_ALIASES = {
    "hexagasket": ("polygasket", 6),
    "nonagasket": ("polygasket", 9),
}


@dataclass
class RunConfig:
    """Fully resolved run configuration (no environment-dependent defaults)."""

    spec_source: str
    out_dir: str = "out"
    tuple_spec: str = "default"
    feasibility_rtol: float = 1e-9
    convergence_rtol: float = 1e-9
    spec: FractalSpec | None = None
    D: np.ndarray | None = None
    r: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def parse_builtin(name: str):
    """Resolve a builtin spec name like ``gasket:3`` or ``hexagasket``."""
    if name in _BUILTIN_ALIASES:
        return _BUILTIN_ALIASES[name]
    if ":" in name:
        kind, _, param = name.partition(":")
        try:
            return kind, int(param)
        except ValueError:
            raise SpecValidationError(f"bad builtin parameter in {name!r}") from None
    raise SpecValidationError(f"unknown builtin spec {name!r}")


def load_spec(path: str):
    """Load and validate a spec file; returns ``(spec, D, r)``.

    ``D`` defaults to the unit-conductance matrix and ``r`` to None (meaning
    the equal-weight solve runs at structure build time).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise SpecValidationError(f"cannot read spec file {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SpecValidationError(f"spec file {path!r} is not valid JSON "
                                  f"(line {exc.lineno}, column {exc.colno})") from None
    spec = FractalSpec.from_json_dict(data)
    D = None
    if "D" in data:
        D = np.asarray(data["D"], dtype=float)
        if D.shape != (spec.boundary, spec.boundary):
            raise SpecValidationError(
                f"field 'D' must be a {spec.boundary}x{spec.boundary} array, got {D.shape}")
    r = None
    if "r" in data:
        r = np.asarray(data["r"], dtype=float)
        if r.shape != (spec.letters,):
            raise SpecValidationError(
                f"field 'r' must list {spec.letters} weights, got shape {r.shape}")
    return spec, D, r


def save_spec(path: str, spec: FractalSpec, D: np.ndarray | None = None,
              r: np.ndarray | None = None) -> None:
    data = spec.to_json_dict()
    if D is not None:
        data["D"] = [list(map(float, row)) for row in np.asarray(D, dtype=float)]
    if r is not None:
        data["r"] = [float(x) for x in np.asarray(r, dtype=float)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def resolve_config(args) -> RunConfig:
    cfg = RunConfig(spec_source=args.spec, out_dir=args.out,
                    tuple_spec=getattr(args, "tuple", "default") or "default",
                    feasibility_rtol=getattr(args, "feasibility_tol", 1e-9),
                    convergence_rtol=getattr(args, "convergence_rtol", 1e-9))
    source = args.spec
    if os.path.exists(source) or source.endswith(".json"):
        spec, D, r = load_spec(source)
    else:
        kind, param = parse_builtin(source)
        spec = generate_spec(kind, param)
        D, r = None, None
    cfg.spec = spec
    cfg.D = D if D is not None else default_boundary_matrix(spec.boundary)
    cfg.r = r
    return cfg


def build_structure(cfg: RunConfig) -> HarmonicStructure:
    return HarmonicStructure.build(cfg.spec, cfg.D, cfg.r)


def parse_tuple(hs: HarmonicStructure, text: str) -> HarmonicTuple:
    """Parse ``--tuple``: 'default' or semicolon-separated comma vectors."""
    if text == "default":
        return default_tuple(hs)
    rows = []
    for part in text.split(";"):
        try:
            row = [float(x) for x in part.split(",")]
        except ValueError:
            raise SpecValidationError(f"bad tuple component {part!r}") from None
        if len(row) != hs.spec.boundary:
            raise SpecValidationError(
                f"tuple component {part!r} must have {hs.spec.boundary} entries")
        rows.append(row)
    return HarmonicTuple(np.asarray(rows, dtype=float))


def _safe(ref: VertexRef) -> str:
    return str(ref).replace(":", "_")


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _context(cfg: RunConfig) -> metrics.MetricContext:
    hs = build_structure(cfg)
    return metrics.MetricContext(hs, parse_tuple(hs, cfg.tuple_spec))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    cfg = resolve_config(args)
    hs = build_structure(cfg)
    report = check_structure_conditions(hs)
    lines = [f"spec: {cfg.spec.name} (cells={cfg.spec.letters}, boundary={cfg.spec.boundary})",
             f"weights r: {np.array2string(hs.r, precision=12)}"]
    lines += report.lines()
    lines.append("overall: " + ("pass" if report.ok else "FAIL"))
    text = "\n".join(lines) + "\n"
    print(text, end="")
    _write(os.path.join(cfg.out_dir, "check_report.txt"), text)
    return EXIT_OK if report.ok else EXIT_FAILED_CHECK


def cmd_graph(args) -> int:
    cfg = resolve_config(args)
    ctx = _context(cfg)
    u, v, w = metrics.edge_arrays(ctx, args.level)
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    order = np.lexsort((hi, lo))
    rows = ["u,v,weight"]
    rows += [f"{lo[i]},{hi[i]},{w[i]:.17g}" for i in order]
    _write(os.path.join(cfg.out_dir, f"graph_level{args.level}.csv"),
           "\n".join(rows) + "\n")
    nv = ctx.level(args.level).lg.num_vertices
    print(f"level {args.level}: {nv} vertices, {len(u)} edges")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    cfg = resolve_config(args)
    ctx = _context(cfg)
    x = VertexRef.parse(getattr(args, "from"))
    y = VertexRef.parse(args.to)
    hist = metrics.geodesic_converge(ctx, x, y, args.nmax, rtol=cfg.convergence_rtol)
    name = f"convergence_{_safe(x)}_{_safe(y)}.csv"
    _write(os.path.join(cfg.out_dir, name), hist.to_csv())
    print(f"estimate {hist.estimate:.17g} (last gap {hist.last_gap:.3e}, "
          f"levels {hist.entries[0][0]}..{hist.entries[-1][0]}, "
          f"converged={str(hist.converged).lower()})")
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = resolve_config(args)
    ctx = _context(cfg)
    x = VertexRef.parse(getattr(args, "from"))
    phi = metrics.geodesic_profile(ctx, x, args.level)
    lg = ctx.level(args.level).lg
    rows = ["id,word,label,value"]
    if lg.has_addresses:
        for vid in range(lg.num_vertices):
            ref = lg.address(vid)
            rows.append(f"{vid},{_word_to_str(ref.word)},{ref.label},{phi[vid]:.17g}")
    else:
        rows = ["id,value"] + [f"{vid},{phi[vid]:.17g}" for vid in range(len(phi))]
    _write(os.path.join(cfg.out_dir, f"profile_{_safe(x)}_level{args.level}.csv"),
           "\n".join(rows) + "\n")
    print(f"profile from {x} at level {args.level}: max {phi.max():.17g}")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = resolve_config(args)
    ctx = _context(cfg)
    x = VertexRef.parse(getattr(args, "from"))
    y = VertexRef.parse(args.to)
    cert = metrics.intrinsic_certificate(ctx, x, y, args.level, cap=args.cap,
                                         tolerance=cfg.feasibility_rtol)
    stem = f"certificate_{_safe(x)}_{_safe(y)}_level{args.level}"
    _write(os.path.join(cfg.out_dir, stem + ".json"), cert.to_json_text())
    _write(os.path.join(cfg.out_dir, stem + "_slack.csv"), cert.slack.to_csv())
    print(f"certified lower bound {cert.certified_value:.17g} "
          f"(cap {cert.cap:.17g}, min slack {cert.slack.min_slack:.3e}, "
          f"feasible={str(cert.feasible).lower()})")
    return EXIT_OK if cert.feasible else EXIT_FAILED_CHECK


def cmd_intrinsic(args) -> int:
    cfg = resolve_config(args)
    ctx = _context(cfg)
    x = VertexRef.parse(getattr(args, "from"))
    y = VertexRef.parse(args.to)
    est = metrics.intrinsic_estimate(ctx, x, y, args.level, budget=args.budget)
    stem = f"intrinsic_{_safe(x)}_{_safe(y)}_level{args.level}"
    body = (
        "{\n"
        f"  \"level\": {args.level},\n"
        f"  \"value\": {est.value:.17g},\n"
        f"  \"certificate_value\": {est.certificate_value:.17g},\n"
        f"  \"iterations\": {est.iterations},\n"
        f"  \"converged\": {str(est.converged).lower()},\n"
        f"  \"constraint_depth\": {est.constraint_depth}\n"
        "}\n"
    )
    _write(os.path.join(cfg.out_dir, stem + ".json"), body)
    print(f"intrinsic estimate {est.value:.17g} "
          f"(certificate {est.certificate_value:.17g}, {est.iterations} iterations)")
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = resolve_config(args)
    ctx = _context(cfg)
    table = metrics.embedding_table(ctx, args.level)
    _write(os.path.join(cfg.out_dir, f"embedding_level{args.level}.csv"), table.to_csv())
    print(f"embedded {len(table.refs)} vertices at level {args.level} "
          f"into R^{ctx.n_components}")
    return EXIT_OK


def cmd_measures(args) -> int:
    cfg = resolve_config(args)
    hs = build_structure(cfg)
    h = parse_tuple(hs, cfg.tuple_spec)
    table = cell_measure_table(hs, h, args.depth)
    _write(os.path.join(cfg.out_dir, f"measures_depth{args.depth}.csv"), table.to_csv())
    print(f"total measure {table.value(()):.17g} tabulated to depth {args.depth}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fractaldist",
        description="Discrete geodesic and intrinsic distances on finitely "
                    "ramified self-similar fractals.")
    parser.add_argument("--spec", default="gasket:2",
                        help="builtin name (gasket:L, polygasket:N, hexagasket, "
                             "nonagasket) or a spec JSON file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--tuple", default="default",
                        help="harmonic tuple: 'default' or 'a,b,c;d,e,f'")
    parser.add_argument("--feasibility-tol", type=float, default=1e-9,
                        help="relative slack tolerance for certificates")
    parser.add_argument("--convergence-rtol", type=float, default=1e-9,
                        help="relative-gap stop for the geodesic subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check", help="validate the boundary matrix, regularity, "
                                 "and structural conditions")
    p = sub.add_parser("graph", help="export the weighted level graph")
    p.add_argument("--level", type=int, required=True)
    p = sub.add_parser("geodesic", help="converging shortest-walk distance")
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--nmax", type=int, required=True)
    p = sub.add_parser("profile", help="single-source distance profile")
    p.add_argument("--from", required=True)
    p.add_argument("--level", type=int, required=True)
    p = sub.add_parser("certify", help="capped-profile lower-bound certificate")
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--cap", type=float, default=None)
    p = sub.add_parser("intrinsic", help="ascent estimate of the intrinsic distance")
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--budget", type=int, default=200)
    p = sub.add_parser("embed", help="export embedding coordinates")
    p.add_argument("--level", type=int, required=True)
    p = sub.add_parser("measures", help="tabulate cell measures of the tuple")
    p.add_argument("--depth", type=int, required=True)
    return parser


_COMMANDS = {
    "check": cmd_check,
    "graph": cmd_graph,
    "geodesic": cmd_geodesic,
    "profile": cmd_profile,
    "certify": cmd_certify,
    "intrinsic": cmd_intrinsic,
    "embed": cmd_embed,
    "measures": cmd_measures,
}


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (SpecValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FractalDistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED_CHECK


if __name__ == "__main__":
    sys.exit(main())
