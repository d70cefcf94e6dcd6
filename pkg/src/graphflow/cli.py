"""Command-line front end.

Exit status: 0 on success, 1 on a domain error (message on stderr), 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .config import DEFAULT_TOL, SOLVER_KEYS, read_kv
from .errors import GraphFlowError
from .fatgraph import boundary_cycles, build_mapping_cylinder, is_chord_diagram, parse_fat_graph, surface_invariants
from .graphs import betti_and_euler, compute_automorphisms, glue, parse_graph, parse_morphism
from .metric import SimplexPoint, parse_structure, simplex_metric

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p.read_text()


def _emit(text, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _tol(args, extra=None):
    kw = {}
    for item in getattr(args, "tol", None) or []:
        if "=" not in item:
            raise UsageError(f"--tol expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        kw[k.strip()] = v.strip()
    kw.update(extra or {})
    return DEFAULT_TOL.with_overrides(**kw)


def _solver_config(args):
    """``(manifold, tolerances, constraints)`` from ``--config`` and flags."""
    kv = read_kv(_read(args.config)) if args.config else {}
    manifold = args.manifold or kv.get("manifold")
    if not manifold:
        raise UsageError("give --manifold or manifold= in the config")
    tol_kw, cons = {}, {}
    for k, v in kv.items():
        if k == "manifold":
            continue
        if k in SOLVER_KEYS:
            tol_kw[SOLVER_KEYS[k]] = v
        elif k.startswith("constraint."):
            cons[k[len("constraint."):]] = v
        elif k.startswith("tol."):
            tol_kw[k[4:]] = v
        else:
            raise UsageError(f"unknown config key {k!r}")
    for item in getattr(args, "constraint", None) or []:
        leaf, _, cid = item.partition("=")
        cons[leaf] = cid
    return manifold, _tol(args, tol_kw), cons


def _structure(path, manifold, tol):
    from .flows import Structure

    return Structure.from_catalog(parse_structure(_read(path)), manifold, tol)


def _matching(items):
    out = {}
    for item in items:
        o, sep, i = item.partition("=")
        if not sep:
            raise UsageError(f"--match expects out=in, got {item!r}")
        out[o] = i
    return out


# -- subcommands -------------------------------------------------------------------------


def cmd_graph_info(args):
    g = parse_graph(_read(args.file))
    b1, chi = betti_and_euler(g)
    aut = compute_automorphisms(g)
    print(f"b1={b1} chi={chi} aut={aut.order} vertices={len(g.vertices)} edges={len(g.edges)} "
          f"in={len(g.in_leaves)} out={len(g.out_leaves)}")


def cmd_fat_cycles(args):
    fg, _, _ = parse_fat_graph(_read(args.file), require_trivalent=args.trivalent)
    print(boundary_cycles(fg).format())


def cmd_fat_genus(args):
    fg, _, _ = parse_fat_graph(_read(args.file), require_trivalent=args.trivalent)
    g, n, chi = surface_invariants(fg)
    print(f"genus={g} boundary={n} chi={chi}")


def cmd_fat_chord(args):
    fg, marks, _ = parse_fat_graph(_read(args.file), require_trivalent=args.trivalent)
    if args.marks:
        marks = args.marks.split(",")
    if marks is None:
        raise UsageError("no marks: add 'mark' lines or pass --marks in,out,...")
    chk = is_chord_diagram(fg, marks)
    print("chord=true" if chk.ok else f"chord=false witness={','.join(chk.witness)}")
    return EXIT_OK if chk.ok else EXIT_DOMAIN


def cmd_glue(args):
    g1, g2 = parse_graph(_read(args.first)), parse_graph(_read(args.second))
    g = glue(g1, g2, _matching(args.match), prefix=args.prefix)
    _emit(g.to_text(), args.output)
    b1, chi = betti_and_euler(g)
    print(f"b1={b1} chi={chi}", file=sys.stderr)


def _backend(args):
    from .morse import backend_from_config

    return backend_from_config(_read(args.config), _tol(args))


def cmd_morse_complex(args):
    from .morse import morse_boundary

    b = _backend(args)
    cx = morse_boundary(b)
    lines = []
    for c in b.critical_points:
        loc = ",".join(f"{v:.12g}" for v in c.location)
        lines.append(f"{c.id} index={c.index} value={c.value:.12g} at={loc}")
    for k, M in sorted(cx.counts.items()):
        rows = [c.id for c in cx.generators[k - 1]]
        cols = [c.id for c in cx.generators[k]]
        lines.append(f"boundary {k}: rows={','.join(rows)} cols={','.join(cols)}")
        for r, row in zip(rows, np.asarray(M)):
            lines.append(f"  {r}: " + " ".join(str(int(v)) for v in row))
    _emit("\n".join(lines) + "\n", args.output)


def cmd_morse_homology(args):
    from .morse import euler_from_critical_points, homology_ranks, morse_boundary

    b = _backend(args)
    ranks = homology_ranks(morse_boundary(b))
    print("ranks: " + " ".join(map(str, ranks)))
    print(f"chi: {euler_from_critical_points(b.critical_points)}")


def cmd_flow_solve(args):
    from .flows import aut_action_failures, solve_graph_flows

    manifold, tol, cons = _solver_config(args)
    s = _structure(args.structure, manifold, tol)
    res = solve_graph_flows(s, cons, tol)
    if res.positive_dimensional:
        print(res.summary())
        print(f"positive-dimensional solution set detected (dimension {res.dimension})", file=sys.stderr)
        return EXIT_DOMAIN
    if args.output:
        _emit(res.to_csv(), args.output)
    else:
        sys.stdout.write(res.to_csv())
    if args.check_aut:
        bad = aut_action_failures(res)
        print(f"aut_failures={len(bad)}")
    print(res.summary())


def cmd_op_table(args):
    from .operations import build_operation_table

    manifold, tol, cons = _solver_config(args)
    if cons:
        raise UsageError("op table takes no constraint.* keys")
    s = _structure(args.structure, manifold, tol)
    t = build_operation_table(s, tol, threads=args.threads)
    _emit(t.to_csv(), args.output)
    if t.partial:
        print("table is partial", file=sys.stderr)


def cmd_op_dim(args):
    from .operations import DimensionQuery, expected_dimension_finite, expected_dimension_loopspace

    q = DimensionQuery(args.inputs, args.outputs, args.chi, args.d)
    if args.finite:
        print(expected_dimension_finite(q, args.p))
    else:
        print(expected_dimension_loopspace(q))


def cmd_op_invariance(args):
    from .operations import check_homotopy_invariance

    manifold, tol, _ = _solver_config(args)
    src = _structure(args.source, manifold, tol)
    tgt_text = _read(args.target)
    tgt_graph = parse_graph(tgt_text, extra=("length", "label"))[0]
    phi = parse_morphism(_read(args.morph), src.graph, tgt_graph)
    target = _structure(args.target, manifold, tol) if args.target_structure else None
    rep = check_homotopy_invariance(phi, src, target, tol)
    print(rep.summary())
    for k, a, b in rep.mismatches:
        print(f"mismatch {' '.join(f'{v}={c}' for v, c in k)}: {a} vs {b}")
    return EXIT_OK if rep.equal else EXIT_DOMAIN


def cmd_op_gluing(args):
    from .operations import check_gluing

    manifold, tol, _ = _solver_config(args)
    s1 = _structure(args.first, manifold, tol)
    s2 = _structure(args.second, manifold, tol)
    rep = check_gluing(s1, s2, _matching(args.match), tol, glue_length=args.glue_length)
    print(rep.summary())
    for k, a, b in rep.mismatches:
        print(f"mismatch {' '.join(f'{v}={c}' for v, c in k)}: {a} vs {b}")
    return EXIT_OK if rep.equal else EXIT_DOMAIN


def cmd_cylinder_build(args):
    fg, marks, lengths = parse_fat_graph(_read(args.file), require_trivalent=args.trivalent)
    if marks is None:
        raise UsageError("fat graph file has no 'mark' lines")
    _emit(build_mapping_cylinder(fg, lengths, marks).to_text(), args.output)


def _svg(traj, manifold):
    P = manifold.chart2d(traj.points)
    if manifold.name == "torus":
        lo, hi = np.zeros(2), np.ones(2)
    else:
        lo, hi = np.array([-math.pi, -math.pi / 2]), np.array([math.pi, math.pi / 2])
    W, H, pad = 400, 400 if manifold.name == "torus" else 200, 10
    X = pad + (P[:, 0] - lo[0]) / (hi[0] - lo[0]) * W
    Y = pad + (hi[1] - P[:, 1]) / (hi[1] - lo[1]) * H
    # break the polyline where the chart wraps
    jumps = np.nonzero((np.abs(np.diff(X)) > W / 2) | (np.abs(np.diff(Y)) > H / 2))[0] + 1
    parts = np.split(np.arange(len(X)), jumps)
    lines = []
    for idx in parts:
        if len(idx) < 2:
            continue
        pts = " ".join(f"{X[i]:.4f},{Y[i]:.4f}" for i in idx)
        lines.append(f'  <polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>')
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 2 * pad}" height="{H + 2 * pad}" '
            f'viewBox="0 0 {W + 2 * pad} {H + 2 * pad}">')
    frame = f'  <rect x="{pad}" y="{pad}" width="{W}" height="{H}" fill="none" stroke="gray"/>'
    start = f'  <circle cx="{X[0]:.4f}" cy="{Y[0]:.4f}" r="3" fill="red"/>'
    return "\n".join([head, frame, *lines, start, "</svg>"]) + "\n"


def cmd_plot_trajectory(args):
    b = _backend(args)
    x0 = np.array([float(v) for v in args.x0.split(",")])
    if len(x0) != b.manifold.ambient:
        raise UsageError(f"--x0 needs {b.manifold.ambient} coordinates")
    traj = b.trajectory(b.manifold.canonical(x0[None, :])[0], args.time, args.direction)
    text = traj.to_csv() if args.format == "csv" else _svg(traj, b.manifold)
    _emit(text, args.output)


def cmd_simplex(args):
    kv = {}
    for item in args.items:
        k, sep, v = item.partition("=")
        if not sep or k not in ("t", "chain", "graphs", "labels"):
            raise UsageError(f"expected t=, chain=, graphs= or labels=, got {item!r}")
        kv[k] = v
    if "t" not in kv or "graphs" not in kv:
        raise UsageError("simplex needs t=<list> and graphs=<G_k,...,G_0>")
    t = [float(v) for v in kv["t"].split(",")]
    graphs = [parse_graph(_read(p), extra=("length", "label"))[0] for p in kv["graphs"].split(",")]
    files = [p for p in kv.get("chain", "").split(",") if p]
    if len(files) != len(graphs) - 1:
        raise UsageError("chain= needs one morphism file per consecutive pair in graphs=")
    chain = [parse_morphism(_read(f), graphs[i], graphs[i + 1]) for i, f in enumerate(files)]
    p = SimplexPoint(t, chain, graphs[0])
    labels = dict(x.split(":", 1) for x in kv["labels"].split(",")) if kv.get("labels") else None
    ms, zero = simplex_metric(p, labels)
    for e, v in sorted(ms.lengths.items()):
        print(f"length {e} {v:.12g}")
    print("collapsed " + (" ".join(zero) if zero else "-"))


# -- parser -------------------------------------------------------------------------------------


def _add_solver_opts(p):
    p.add_argument("--config", help="key=value file: manifold=, seed.grid=, newton.tol=, newton.maxiter=, "
                                    "dedup.radius=, constraint.<leaf>=<critical id>")
    p.add_argument("--manifold", choices=["torus", "sphere", "rp2"], help="overrides manifold= in --config")
    p.add_argument("--tol", action="append", metavar="KEY=VALUE", help="tolerance override (repeatable)")


def build_parser():
    ap = argparse.ArgumentParser(prog="graphflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="group", required=True)

    def leaf(parent, name, fn, help_):
        p = parent.add_parser(name, help=help_, description=help_)
        p.set_defaults(fn=fn)
        return p

    g = sub.add_parser("graph", help="oriented graphs").add_subparsers(dest="cmd", required=True)
    p = leaf(g, "info", cmd_graph_info, "print b1, chi and |Aut| of a graph file")
    p.add_argument("file")

    f = sub.add_parser("fat", help="fat graphs").add_subparsers(dest="cmd", required=True)
    for name, fn, h in (("cycles", cmd_fat_cycles, "print the boundary cycles"),
                        ("genus", cmd_fat_genus, "print genus, boundary count and Euler characteristic"),
                        ("chord", cmd_fat_chord, "test the chord-diagram condition (exit 1 if it fails)")):
        p = leaf(f, name, fn, h)
        p.add_argument("file")
        p.add_argument("--trivalent", action="store_true", help="require internal vertices of valence 3")
        if name == "chord":
            p.add_argument("--marks", help="comma list of in/out per boundary cycle (overrides the file)")

    p = leaf(sub, "glue", cmd_glue, "glue outgoing leaves of FIRST to incoming leaves of SECOND")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--match", action="append", required=True, metavar="OUT=IN", help="leaf pairing (repeatable)")
    p.add_argument("--prefix", default="g2.", help="rename prefix for cells of SECOND (default g2.)")
    p.add_argument("-o", "--output", help="write the glued graph here instead of stdout")

    m = sub.add_parser("morse", help="Morse backends").add_subparsers(dest="cmd", required=True)
    for name, fn, h in (("complex", cmd_morse_complex, "critical points and boundary counts"),
                        ("homology", cmd_morse_homology, "F2 homology ranks")):
        p = leaf(m, name, fn, h)
        p.add_argument("--config", required=True, help="backend file: manifold=, function=, param.*=, tol.*=")
        p.add_argument("--tol", action="append", metavar="KEY=VALUE", help="tolerance override (repeatable)")
        p.add_argument("-o", "--output", help="output path (complex only)")

    fl = sub.add_parser("flow", help="graph flows").add_subparsers(dest="cmd", required=True)
    p = leaf(fl, "solve", cmd_flow_solve, "solve for constrained graph flows; CSV of solutions, then a summary line")
    p.add_argument("structure", help="graph file with length/label lines")
    _add_solver_opts(p)
    p.add_argument("--constraint", action="append", metavar="LEAF=CRIT", help="leaf constraint (repeatable)")
    p.add_argument("--check-aut", action="store_true", help="also check the automorphism action")
    p.add_argument("-o", "--output", help="write the solution CSV here")

    op = sub.add_parser("op", help="operations").add_subparsers(dest="cmd", required=True)
    p = leaf(op, "table", cmd_op_table, "operation table as CSV")
    p.add_argument("structure")
    _add_solver_opts(p)
    p.add_argument("--threads", type=int, help="worker threads (default GRAPHFLOW_THREADS or 1)")
    p.add_argument("-o", "--output")
    p = leaf(op, "dim", cmd_op_dim, "expected dimension (loop-space formula unless --finite)")
    p.add_argument("--in", dest="inputs", type=int, nargs="*", default=[], help="indices at incoming leaves")
    p.add_argument("--out", dest="outputs", type=int, nargs="*", default=[], help="indices at outgoing leaves")
    p.add_argument("--chi", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--finite", action="store_true", help="finite-dimensional formula d(chi-p)+sum(in)-sum(out)")
    p.add_argument("--p", type=int, help="number of incoming leaves (default: len --in)")
    p = leaf(op, "check-invariance", cmd_op_invariance, "compare tables across a graph morphism (exit 1 on mismatch)")
    p.add_argument("--morph", required=True, help="morphism file")
    p.add_argument("--source", required=True, help="source structure file")
    p.add_argument("--target", required=True, help="target graph file")
    p.add_argument("--target-structure", action="store_true",
                   help="use lengths and labels from the target file instead of pushing them forward")
    _add_solver_opts(p)
    p = leaf(op, "check-gluing", cmd_op_gluing, "compare the composite table with the glued table (exit 1 on mismatch)")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--match", action="append", required=True, metavar="OUT=IN")
    p.add_argument("--glue-length", type=float, default=0.5, help="length of each glued leaf edge (default 0.5)")
    _add_solver_opts(p)

    c = sub.add_parser("cylinder", help="mapping cylinders").add_subparsers(dest="cmd", required=True)
    p = leaf(c, "build", cmd_cylinder_build, "cylinder complex of a marked fat graph with lengths")
    p.add_argument("file")
    p.add_argument("--trivalent", action="store_true")
    p.add_argument("-o", "--output")

    pl = sub.add_parser("plot", help="plots").add_subparsers(dest="cmd", required=True)
    p = leaf(pl, "trajectory", cmd_plot_trajectory, "gradient trajectory as CSV or SVG")
    p.add_argument("--config", required=True, help="backend file")
    p.add_argument("--x0", required=True, help="start point, comma separated")
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--direction", choices=["forward", "backward"], default="forward")
    p.add_argument("--format", choices=["csv", "svg"], default="csv")
    p.add_argument("--tol", action="append", metavar="KEY=VALUE")
    p.add_argument("-o", "--output")

    p = leaf(sub, "simplex", cmd_simplex,
             "edge lengths at a simplex point: t=<t0,...,tk> graphs=<G_k,...,G_0> chain=<morph,...>")
    p.add_argument("items", nargs="+", metavar="KEY=VALUE")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        rc = args.fn(args)
    except UsageError as exc:
        print(f"graphflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFlowError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"graphflow: error: {msg}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
