"""Error norms, convergence tables and solution serialization (CSV and legacy
VTK). Figures are rendered separately from these files (see plotting)."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .timeloop import cell_averages

NORMS = ("Linf", "L1", "L2")


@dataclass
class ErrorReport:
    h: float
    avg: dict = field(default_factory=dict)     # norm -> error
    pts: dict = field(default_factory=dict)


def compute_errors(disc, pts, avg, exact, t):
    """Errors of averages (against exact cell averages, quadrature of degree 4)
    and of point values at their positions. L1/L2 area-weighted, Linf plain."""
    ex_avg = cell_averages(disc, lambda x: exact(x, t))
    ex_pts = np.atleast_2d(exact(disc.points[:disc.n_pdofs], t))
    area = disc.cell_area[:disc.n_cells]
    wc = area / area.sum()
    wp = disc.dual_area / disc.dual_area.sum()
    da = np.abs(avg - ex_avg)
    dp = np.abs(pts - ex_pts)
    rep = ErrorReport(h=float(disc.cell_h[:disc.n_cells].max()))
    rep.avg = {"Linf": float(da.max()),
               "L1": float((wc @ da).max()),
               "L2": float(np.sqrt(wc @ da ** 2).max())}
    rep.pts = {"Linf": float(dp.max()),
               "L1": float((wp @ dp).max()),
               "L2": float(np.sqrt(wp @ dp ** 2).max())}
    return rep


def slopes(reports, which="avg", norm="L1"):
    es = [getattr(r, which)[norm] for r in reports]
    hs = [r.h for r in reports]
    out = [float("nan")]
    for j in range(1, len(es)):
        out.append(np.log(es[j - 1] / es[j]) / np.log(hs[j - 1] / hs[j]))
    return out


def convergence_table(reports):
    """Plain-text table in the usual (h, error, slope) x norms layout."""
    lines = []
    for which, label in (("avg", "Average values"), ("pts", "Point values")):
        lines.append(label)
        hdr = f"{'h':>10}"
        for n in NORMS:
            hdr += f" {n:>10} {'slope':>6}"
        lines.append(hdr)
        sl = {n: slopes(reports, which, n) for n in NORMS}
        for j, r in enumerate(reports):
            row = f"{r.h:10.3e}"
            for n in NORMS:
                s = "   -  " if j == 0 else f"{sl[n][j]:6.2f}"
                row += f" {getattr(r, which)[n]:10.3e} {s}"
            lines.append(row)
    return "\n".join(lines)


def write_convergence_csv(reports, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        hdr = ["h"]
        for which in ("avg", "pts"):
            for n in NORMS:
                hdr += [f"{which}_{n}", f"{which}_{n}_slope"]
        w.writerow(hdr)
        sl = {(which, n): slopes(reports, which, n)
              for which in ("avg", "pts") for n in NORMS}
        for j, r in enumerate(reports):
            row = [f"{r.h:.16e}"]
            for which in ("avg", "pts"):
                for n in NORMS:
                    row += [f"{getattr(r, which)[n]:.16e}",
                            "" if j == 0 else f"{sl[(which, n)][j]:.6f}"]
            w.writerow(row)


# ------------------------------------------------------------- solution IO ---


def write_solution_csv(disc, pts, avg, path):
    """One row per DoF: kind, x, y, u_0..u_{m-1}; averages carry the centroid."""
    m = pts.shape[1] if pts.size else avg.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "x", "y"] + [f"u{j}" for j in range(m)])
        P = disc.points[:disc.n_pdofs]
        for i in range(disc.n_pdofs):
            w.writerow(["point", f"{P[i, 0]:.16e}", f"{P[i, 1]:.16e}"]
                       + [f"{v:.16e}" for v in pts[i]])
        C = disc.cell_centroid[:disc.n_cells]
        for c in range(disc.n_cells):
            w.writerow(["average", f"{C[c, 0]:.16e}", f"{C[c, 1]:.16e}"]
                       + [f"{v:.16e}" for v in avg[c]])


def read_solution_csv(path):
    kinds, xy, vals = [], [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        for row in r:
            kinds.append(row[0])
            xy.append([float(row[1]), float(row[2])])
            vals.append([float(v) for v in row[3:]])
    kinds = np.array(kinds)
    xy = np.array(xy).reshape(-1, 2)
    vals = np.array(vals).reshape(len(kinds), -1)
    ispt = kinds == "point"
    return {"point_xy": xy[ispt], "point_values": vals[ispt],
            "avg_xy": xy[~ispt], "avg_values": vals[~ispt],
            "columns": header[3:]}


def write_solution_vtk(disc, pts, avg, path, names=None):
    """Legacy ASCII VTK unstructured grid: each polygon lists its boundary
    DoF chain (vertices and edge midpoints), point values as POINT_DATA and
    averages as CELL_DATA."""
    m = pts.shape[1]
    names = names or [f"u{j}" for j in range(m)]
    npd = disc.n_pdofs
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("pampa2d solution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {npd} double\n")
        for i in range(npd):
            f.write(f"{disc.points[i, 0]:.16e} {disc.points[i, 1]:.16e} 0.0\n")
        ncell = disc.n_cells
        sizes = [disc.slot_ptr[c + 1] - disc.slot_ptr[c] for c in range(ncell)]
        total = sum(sizes) + ncell
        f.write(f"CELLS {ncell} {total}\n")
        for c in range(ncell):
            dofs = disc.slot_pdof[disc.slot_ptr[c]:disc.slot_ptr[c + 1]]
            f.write(str(len(dofs)) + " " + " ".join(str(int(d)) for d in dofs) + "\n")
        f.write(f"CELL_TYPES {ncell}\n")
        f.write("\n".join(["7"] * ncell) + "\n")
        f.write(f"POINT_DATA {npd}\n")
        for j, nm in enumerate(names):
            f.write(f"SCALARS {nm} double\nLOOKUP_TABLE default\n")
            for i in range(npd):
                f.write(f"{pts[i, j]:.16e}\n")
        f.write(f"CELL_DATA {ncell}\n")
        for j, nm in enumerate(names):
            f.write(f"SCALARS {nm}_avg double\nLOOKUP_TABLE default\n")
            for c in range(ncell):
                f.write(f"{avg[c, j]:.16e}\n")
