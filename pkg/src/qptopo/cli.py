"""Command-line interface wiring all modules together.

Single-result commands print JSON to stdout; bulk results go to CSV; images
to PPM or SVG; meshes to OBJ.  Every written output file gets a manifest
(JSON sidecar) recording the command, parameters, version and input
digests.  Exit codes: 0 success, 1 computation error (machine-readable
line on stderr), 2 argument error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__


def _fail(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")
    return 1


def _load_model(spec):
    """Builtin model name or path to a model file."""
    from .fields import available_models, builtin_model, parse_model
    if spec in available_models():
        return builtin_model(spec)
    try:
        with open(spec, "r", encoding="utf-8") as fh:
            return parse_model(fh.read(), name=spec)
    except FileNotFoundError:
        sys.stderr.write(f"unknown model {spec!r}; builtins: "
                         f"{', '.join(available_models())}\n")
        raise SystemExit(2)


def _parse_vec(text, n=3, numeric=int):
    parts = [p for p in text.replace("(", " ").replace(")", " ").split(",")]
    vals = [numeric(p.strip()) for p in parts]
    if len(vals) != n:
        raise ValueError(f"expected {n} comma-separated values, got {text!r}")
    return tuple(vals)


def _vec_type(n, numeric):
    def convert(text):
        try:
            return _parse_vec(text, n, numeric)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc))
    return convert


def _write_manifest(path, args_ns, inputs=()):
    digests = {}
    for p in inputs:
        try:
            with open(p, "rb") as fh:
                digests[p] = hashlib.sha256(fh.read()).hexdigest()
        except OSError:
            digests[p] = None
    manifest = {
        "command": " ".join(sys.argv[1:]) if sys.argv[1:] else args_ns.command,
        "parameters": {k: v for k, v in vars(args_ns).items() if k != "func"},
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "input_digests": digests,
    }
    with open(str(path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _emit(obj):
    print(json.dumps(obj, indent=2, default=str))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_model(args):
    from .fields import available_models, serialize_model
    if args.action == "list":
        _emit({"models": available_models()})
        return 0
    fld = _load_model(args.name)
    if args.action == "show":
        print(serialize_model(fld))
        return 0
    return _fail("argument", f"unknown model action {args.action!r}")


def cmd_mesh(args):
    from .mesh import (embedding_rank, export_mesh, extract_isosurface,
                       split_components, validate_mesh)
    fld = _load_model(args.model)
    mesh = extract_isosurface(fld, args.level, args.res)
    validate_mesh(mesh)
    comps = split_components(mesh)
    _emit({
        "level": mesh.level,
        "resolution": mesh.resolution,
        "vertices": mesh.vertex_count,
        "triangles": mesh.triangle_count,
        "euler_characteristic": mesh.euler_characteristic,
        "components": [
            {"genus": c.genus, "rank": embedding_rank(c),
             "triangles": int(len(c.triangle_ids))}
            for c in comps
        ],
    })
    if args.out:
        export_mesh(mesh, args.out)
        _write_manifest(args.out, args)
    return 0


def cmd_label(args):
    from .foliation import compute_label
    fld = _load_model(args.model)
    lab = compute_label(fld, args.level, args.dir, resolution=args.res)
    out = {"kind": lab.kind}
    if lab.vector is not None:
        out["label"] = list(lab.vector)
    if lab.reason:
        out["reason"] = lab.reason
    _emit(out)
    return 0


def cmd_interval(args):
    from .foliation import energy_interval
    fld = _load_model(args.model)
    iv = energy_interval(fld, args.dir, resolution=args.res,
                         tolerance=args.tol)
    _emit({"low": iv.low, "upp": iv.upp, "tolerance": iv.tolerance,
           "status": iv.status, "note": iv.note})
    return 0


def cmd_trace(args):
    from .planar import PlaneEmbedding, restrict, trace_orbit
    fld = _load_model(args.model)
    normal = args.normal
    offset = args.offset
    emb = PlaneEmbedding.from_normal(normal, offset=offset)
    handle = restrict(fld, emb)
    orbit = trace_orbit(handle, args.level, args.start, max_arc=args.max_arc)
    v = orbit.verdict
    out = {"verdict": v.kind, "points": len(orbit.points),
           "arc_length": orbit.arc_length}
    if v.kind == "open":
        out["direction"] = list(v.direction)
        out["strip_width"] = v.strip_width
    if v.reason:
        out["reason"] = v.reason
    _emit(out)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("x,y\n")
            for p in orbit.points:
                fh.write(f"{p[0]:.9f},{p[1]:.9f}\n")
        _write_manifest(args.out, args)
    if args.plot:
        _plot_orbit(orbit, args.plot)
        _write_manifest(args.plot, args)
    return 0


def _plot_orbit(orbit, path):
    pts = orbit.points
    lo = pts.min(axis=0) - 0.5
    hi = pts.max(axis=0) + 0.5
    span = float(max(hi - lo))
    scale = 800.0 / span

    def sx(p):
        return (p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale

    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (sx(p) for p in pts[::max(1, len(pts) // 4000)]))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="800" '
             f'height="{(hi[1] - lo[1]) * scale:.0f}">',
             f'<polyline points="{coords}" fill="none" stroke="black" '
             f'stroke-width="1"/>']
    if orbit.verdict.kind == "open":
        d = np.asarray(orbit.verdict.direction)
        a = sx(pts[0] - d * span)
        b = sx(pts[0] + d * span)
        parts.append(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" '
                     f'y2="{b[1]:.2f}" stroke="red" stroke-width="0.7"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


def cmd_scan(args):
    from .scan import DirectionGrid, render_map, scan_full, scan_reduced
    fld = _load_model(args.model)
    grid = DirectionGrid(args.grid)
    scanner = scan_reduced if args.reduced else scan_full

    def progress(k, total):
        if k % max(1, total // 20) == 0:
            sys.stderr.write(f"scan {k}/{total}\n")

    smap = scanner(fld, args.level, grid, resolution=args.res,
                   progress=progress if args.verbose else None)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(smap.to_csv())
    _write_manifest(args.out, args)
    if args.png:
        with open(args.png, "wb") as fh:
            fh.write(render_map(smap))
        _write_manifest(args.png, args)
    kinds = {}
    for e in smap.entries:
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    _emit({"cells": len(smap.entries), "kinds": kinds, "out": args.out})
    return 0


def _read_map_csv(path):
    from .foliation import Label
    from .scan import DirectionGrid, StabilityMap
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    rows = lines[1:]
    n = int(round(len(rows) ** 0.5))
    if n * n != len(rows):
        raise ValueError(f"map CSV has {len(rows)} cells; expected a square grid")
    entries = []
    xs, ys = [], []
    for row in rows:
        bxn, bxd, byn, byd, status = row.split(",")
        xs.append(Fraction(int(bxn), int(bxd)))
        ys.append(Fraction(int(byn), int(byd)))
        if status == "all_closed":
            entries.append(Label.all_closed())
        elif status == "undetermined":
            entries.append(Label.undetermined(""))
        else:
            entries.append(Label.open_stable(tuple(int(x) for x in status.split(":"))))
    window = (float(min(xs)), float(max(xs)), float(min(ys)), float(max(ys)))
    return StabilityMap(DirectionGrid(n, window=window), entries)


def cmd_dim(args):
    from .scan import boundary_points, box_dimension
    smap = _read_map_csv(args.map)
    pts = boundary_points(smap)
    n = smap.grid.n
    x0, x1, y0, y1 = smap.grid.window
    cell = max(x1 - x0, y1 - y0) / (n - 1)
    scales = [cell * (2 ** k) for k in range(max(2, args.scales))]
    scales = [s for s in scales if s <= max(x1 - x0, y1 - y0)] or [cell, 2 * cell]
    counts = []
    for s in scales:
        boxes = {(int(np.floor(x / s)), int(np.floor(y / s))) for x, y in pts}
        counts.append(len(boxes))
    slope = box_dimension(pts, scales)
    _emit({"dimension": slope, "boundary_cells": len(pts),
           "scales": scales, "counts": counts})
    return 0


def cmd_render(args):
    from .scan import render_map
    smap = _read_map_csv(args.map)
    style = "svg" if args.out.endswith(".svg") else "ppm"
    data = render_map(smap, style=style)
    with open(args.out, "wb") as fh:
        fh.write(data)
    _write_manifest(args.out, args, inputs=[args.map])
    _emit({"out": args.out, "bytes": len(data), "style": style})
    return 0


def cmd_homology(args):
    from .foliation import level_analysis
    from .homology import class_from_coordinates
    if args.action != "basis":
        return _fail("argument", f"unknown homology action {args.action!r}")
    fld = _load_model(args.model)
    analysis = level_analysis(fld, args.level, args.res)
    print("component,loop,pairing_row,class_x,class_y,class_z")
    for ci in range(len(analysis.components)):
        basis = analysis.basis(ci)
        for k, lp in enumerate(basis.loops):
            row = ";".join(str(x) for x in basis.pairing[k])
            print(f"{ci},{k},{row},{lp.class3[0]},{lp.class3[1]},{lp.class3[2]}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qptopo",
        description="Topology of plane sections of triply periodic surfaces")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap for scans/traces (results are identical "
                        "for any value)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("model", help="list or show field models")
    sp.add_argument("action", choices=["list", "show"])
    sp.add_argument("name", nargs="?", default="")
    sp.set_defaults(func=cmd_model)

    sp = sub.add_parser("mesh", help="extract and report a periodic isosurface")
    sp.add_argument("--model", required=True)
    sp.add_argument("--level", type=float, required=True)
    sp.add_argument("--res", type=int, default=64)
    sp.add_argument("--out", help="write the mesh as OBJ")
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("label", help="topological label of a direction")
    sp.add_argument("--model", required=True)
    sp.add_argument("--level", type=float, required=True)
    sp.add_argument("--dir", required=True, type=_vec_type(3, int),
                    help="integer triple, e.g. 0,1,3")
    sp.add_argument("--res", type=int, default=96)
    sp.set_defaults(func=cmd_label)

    sp = sub.add_parser("interval", help="open-orbit energy interval")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dir", required=True, type=_vec_type(3, int))
    sp.add_argument("--res", type=int, default=64)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.set_defaults(func=cmd_interval)

    sp = sub.add_parser("trace", help="trace a planar orbit")
    sp.add_argument("--model", required=True)
    sp.add_argument("--normal", required=True, type=_vec_type(3, float))
    sp.add_argument("--level", type=float, required=True)
    sp.add_argument("--start", required=True, type=_vec_type(2, float),
                    help="plane coordinates, e.g. 0.1,0.1")
    sp.add_argument("--max-arc", type=float, default=200.0)
    sp.add_argument("--offset", type=_vec_type(3, float),
                    help="plane offset in ambient coordinates")
    sp.add_argument("--out", help="write the polyline as CSV")
    sp.add_argument("--plot", help="write an SVG with the fitted drift line")
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("scan", help="stability map over a direction grid")
    sp.add_argument("--model", required=True)
    sp.add_argument("--level", type=float, required=True)
    sp.add_argument("--grid", type=int, default=40)
    sp.add_argument("--res", type=int, default=64)
    sp.add_argument("--out", required=True)
    sp.add_argument("--png", help="also write a PPM image")
    sp.add_argument("--reduced", action="store_true",
                    help="reduced map at a single level")
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("dim", help="box dimension of a map's boundary set")
    sp.add_argument("--map", required=True)
    sp.add_argument("--scales", type=int, default=8)
    sp.set_defaults(func=cmd_dim)

    sp = sub.add_parser("render", help="render a map CSV to PPM or SVG")
    sp.add_argument("--map", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("homology", help="debug: print the cycle basis")
    sp.add_argument("action", choices=["basis"])
    sp.add_argument("--model", required=True)
    sp.add_argument("--level", type=float, required=True)
    sp.add_argument("--res", type=int, default=64)
    sp.set_defaults(func=cmd_homology)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, exc)


if __name__ == "__main__":
    sys.exit(main())
