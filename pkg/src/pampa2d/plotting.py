"""Figure rendering from the delimited output files (CSV), kept separate from
the solver: matplotlib is imported lazily so the run path never touches it."""

import numpy as np


def _mpl():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_solution(sol, out_path, component=0, kind="point", levels=30,
                  title=None):
    """Filled contours of one component from a parsed solution dict
    (see io.read_solution_csv)."""
    plt = _mpl()
    if kind == "point":
        xy = sol["point_xy"]
        v = sol["point_values"][:, component]
    else:
        xy = sol["avg_xy"]
        v = sol["avg_values"][:, component]
    fig, ax = plt.subplots(figsize=(6, 5))
    tc = ax.tricontourf(xy[:, 0], xy[:, 1], v, levels=levels, cmap="viridis")
    fig.colorbar(tc, ax=ax)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_convergence(rows, out_path, title=None):
    """Log-log error plot from the convergence CSV rows (list of dicts)."""
    plt = _mpl()
    h = np.array([float(r["h"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 5))
    for key, style in (("avg_L1", "o-"), ("pts_L1", "s--"),
                       ("avg_Linf", "^-"), ("pts_Linf", "v--")):
        e = np.array([float(r[key]) for r in rows])
        ax.loglog(h, e, style, label=key)
    ref = h ** 3 * float(rows[0]["avg_L1"]) / h[0] ** 3
    ax.loglog(h, ref, "k:", label="h^3")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
