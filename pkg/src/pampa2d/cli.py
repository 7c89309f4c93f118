"""Command-line entry points: run a configured simulation, drive the
convergence study, generate meshes, and render figures from output files."""

import argparse
import csv
import json
import os
import sys

import numpy as np


def _die(msg, code=2):
    print(f"error: {msg}", file=sys.stderr)
    return code


def build_problem(cfg_doc):
    """Resolve a config document into (disc, model, config, case, state)."""
    from . import bc, cases, layout, mesh as meshmod, physics, timeloop

    case = None
    if cfg_doc.get("case"):
        case = cases.get_case(cfg_doc["case"])
    model_spec = cfg_doc.get("model") or (case.model_spec if case else None)
    if model_spec is None:
        raise ValueError("config needs a 'model' or a 'case'")
    model = physics.make_model(model_spec)

    mesh_spec = cfg_doc.get("mesh") or {}
    if "file" in mesh_spec:
        mesh = meshmod.load_mesh(mesh_spec["file"])
    else:
        kind = mesh_spec.get("type", "tri")
        n = int(mesh_spec.get("nx", mesh_spec.get("n", 32)))
        bbox = mesh_spec.get("bbox") or (case.bbox if case else None)
        if bbox is None:
            raise ValueError("mesh needs a bbox or a case")
        if case is not None and tuple(bbox) == tuple(case.bbox):
            mesh = case.default_mesh(kind=kind, n=n)
        else:
            ny = int(mesh_spec.get("ny", n))
            if kind == "tri":
                mesh = meshmod.build_structured_tri(n, ny, bbox)
            elif kind == "quad":
                mesh = meshmod.build_structured_quad(n, ny, bbox)
            elif kind == "poly":
                mesh = meshmod.build_polygonal_dual(
                    meshmod.build_structured_tri(n, ny, bbox))
            else:
                raise ValueError(f"unknown mesh type {kind}")

    boundary = cfg_doc.get("boundary") or (case.boundary if case else None)
    resolved = bc.resolve_rules(boundary, model)
    tags = sorted({t for t in mesh.boundary_tags.values()})
    rules = bc.rules_for_layout(resolved, tags)
    default = resolved.get("__default__", {"type": "neumann"})
    for t in tags:
        rules.setdefault(t, default)
    rules[""] = default
    disc = layout.build_discretization(mesh, bc_rules=rules, n_comp=model.m)

    doc = dict(cfg_doc)
    doc.setdefault("t_final", case.t_final if case else 1.0)
    doc.setdefault("cfl", case.cfl if case else 0.3)
    doc.setdefault("limiter", case.limiter if case else "convex")
    config = timeloop.RunConfig.from_dict(doc)

    bounds = None
    if case is not None:
        if model.m == 1 and getattr(case, "bounds", None) is not None:
            bounds = case.bounds
        pts, avg = timeloop.init_state(disc, case.ic)
        if model.m == 1:
            model.set_bounds(*(bounds or (pts.min(), pts.max())))
    else:
        pts = np.zeros((disc.n_pdofs, model.m))
        avg = np.zeros((disc.n_cells, model.m))
    return disc, model, config, case, (pts, avg), bounds


def cmd_run(args):
    from . import io as iomod
    from . import timeloop
    if not os.path.exists(args.config):
        return _die(f"config file not found: {args.config}")
    with open(args.config) as f:
        doc = json.load(f)
    if args.threads:
        doc["threads"] = args.threads
    disc, model, config, case, (pts, avg), bounds = build_problem(doc)
    out_cfg = doc.get("output") or {}
    outdir = args.out or out_cfg.get("dir", ".")
    os.makedirs(outdir, exist_ok=True)
    fmt = out_cfg.get("format", "csv")
    every = int(out_cfg.get("every", 0))
    base = out_cfg.get("basename", case.name if case else "solution")

    def writer(tag, pts_, avg_):
        path = os.path.join(outdir, f"{base}_{tag}.{ 'csv' if fmt == 'csv' else 'vtk'}")
        if fmt == "csv":
            iomod.write_solution_csv(disc, pts_, avg_, path)
        else:
            iomod.write_solution_vtk(disc, pts_, avg_, path)
        return path

    on_step = None
    if every > 0:
        def on_step(step, t, pts_, avg_):
            if step % every == 0:
                writer(f"{step:07d}", pts_, avg_)

    res = timeloop.run(disc, model, config, pts, avg, bounds=bounds,
                       on_step=on_step)
    final = writer("final", res.pts, res.avg)
    d = res.diagnostics
    cons = d.conservation_error(disc, res.avg)
    summary = {
        "steps": d.steps, "t": d.t, "restarts": d.restarts,
        "mood_flagged_cells": d.mood_flagged_cells,
        "mood_flagged_points": d.mood_flagged_points,
        "mood_pad_failures_after_rollback": d.mood_pad_failures_after_rollback,
        "min_point": d.min_point.tolist(), "max_point": d.max_point.tolist(),
        "min_avg": d.min_avg.tolist(), "max_avg": d.max_avg.tolist(),
        "conservation_error": cons.tolist(),
        "wall_time_s": d.wall_time, "final_file": final,
    }
    with open(os.path.join(outdir, f"{base}_diagnostics.json"), "w") as f:
        json.dump(summary, f, indent=1)
    print(json.dumps(summary))
    return 0


def cmd_convergence(args):
    from . import cases, io as iomod, layout, physics, timeloop
    if args.case != "rotation":
        return _die(f"convergence study supports the rotation case, got {args.case}")
    case = cases.get_case("rotation")
    model = physics.make_model(case.model_spec)
    meshes = cases.rotation_mesh_ladder(args.levels, kind=args.mesh, nx0=args.nx0)
    reports = []
    for mesh in meshes:
        disc = layout.build_discretization(mesh, n_comp=1)
        pts, avg = timeloop.init_state(disc, case.ic)
        cfg = timeloop.RunConfig(model=case.model_spec, t_final=args.t_final,
                                 cfl=args.cfl, limiter="none")
        res = timeloop.run(disc, model, cfg, pts, avg)
        rep = iomod.compute_errors(disc, res.pts, res.avg, case.exact, args.t_final)
        reports.append(rep)
        print(f"h={rep.h:.4e}  L1_avg={rep.avg['L1']:.4e}  L1_pts={rep.pts['L1']:.4e}"
              f"  steps={res.diagnostics.steps}", flush=True)
    print(iomod.convergence_table(reports))
    if args.out:
        iomod.write_convergence_csv(reports, args.out)
    if args.plot:
        from . import plotting
        with open(args.out or "convergence.csv") as f:
            rows = list(csv.DictReader(f))
        plotting.plot_convergence(rows, args.plot,
                                  title=f"rotation, {args.mesh} meshes")
    return 0


def cmd_mesh(args):
    from . import mesh as meshmod
    bbox = tuple(float(v) for v in args.bbox.split(","))
    if len(bbox) != 4:
        return _die("bbox must be x0,y0,x1,y1")
    ny = args.ny or args.n
    if args.type == "tri":
        m = meshmod.build_structured_tri(args.n, ny, bbox)
    elif args.type == "quad":
        m = meshmod.build_structured_quad(args.n, ny, bbox)
    elif args.type == "poly":
        m = meshmod.build_polygonal_dual(meshmod.build_structured_tri(args.n, ny, bbox))
    else:
        return _die(f"unknown mesh type {args.type}")
    meshmod.save_mesh(m, args.out)
    print(f"wrote {args.out}: {m.n_cells} cells, {m.n_vertices} vertices")
    return 0


def cmd_plot(args):
    from . import io as iomod, plotting
    if not os.path.exists(args.input):
        return _die(f"input file not found: {args.input}")
    if args.input.endswith(".csv") and args.convergence:
        with open(args.input) as f:
            rows = list(csv.DictReader(f))
        plotting.plot_convergence(rows, args.out)
    else:
        sol = iomod.read_solution_csv(args.input)
        plotting.plot_solution(sol, args.out, component=args.component,
                               kind=args.kind)
    print(f"wrote {args.out}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="pampa2d",
                                 description="third-order point-average solver "
                                             "for 2D hyperbolic problems")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run a configured simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convergence", help="mesh-refinement study")
    p.add_argument("--case", default="rotation")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--mesh", choices=("tri", "poly"), default="tri")
    p.add_argument("--nx0", type=int, default=25)
    p.add_argument("--cfl", type=float, default=0.2)
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.add_argument("--plot", default=None)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("mesh", help="generate a mesh file")
    p.add_argument("--type", choices=("tri", "quad", "poly"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--bbox", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("plot", help="render figures from output files")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--component", type=int, default=0)
    p.add_argument("--kind", choices=("point", "average"), default="point")
    p.add_argument("--convergence", action="store_true")
    p.set_defaults(func=cmd_plot)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a machine-readable error line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
