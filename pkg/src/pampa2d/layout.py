"""Degrees of freedom and kernel-ready connectivity for the point-average scheme.

Point DoFs live at polygon vertices and edge midpoints (the interior
Gauss-Lobatto node for quadratic edges); each polygon additionally carries one
average DoF. A "slot" is one (polygon, boundary DoF) pair; slot arrays are the
flat CSR layout all assembly kernels operate on.

Every boundary edge spawns a ghost polygon obtained by reflecting its interior
cell across the edge line. Ghost polygons participate in point-value residual
sums and extended dual-cell areas exactly like interior neighbors; only their
DoF values are derived from the interior state by the boundary rule.
"""

from dataclasses import dataclass, field

import numpy as np

from . import vem
from .mesh import MeshError

RULE_WALL = 0
RULE_FARFIELD = 1
RULE_NEUMANN = 2
RULE_NAMES = {"wall": RULE_WALL, "inflow": RULE_FARFIELD, "outflow": RULE_FARFIELD,
              "neumann": RULE_NEUMANN}


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass
class Group:
    nv: int
    cells: np.ndarray          # global cell ids (real and ghost mixed)
    bdof: np.ndarray           # (nc, 2nv) combined point-DoF ids, CCW
    Gx: np.ndarray = None      # (nc, 2nv, ndof)
    Gy: np.ndarray = None
    S: np.ndarray = None       # (nc, ndof, ndof)
    Dpi: np.ndarray = None
    Pi: np.ndarray = None      # (nc, 6, ndof)
    L2: np.ndarray = None
    centre: np.ndarray = None
    h: np.ndarray = None


@dataclass
class Discretization:
    mesh: object
    points: np.ndarray = None           # (n_pdofs_total, 2) incl. ghost DoFs
    n_pdofs: int = 0                    # real point DoFs
    n_cells: int = 0                    # real cells
    n_cells_total: int = 0
    cell_area: np.ndarray = None        # (n_cells_total,)
    cell_centroid: np.ndarray = None
    cell_h: np.ndarray = None
    cell_nv: np.ndarray = None
    # edges
    edge_verts: np.ndarray = None       # (ne, 2) vertex ids, left cell CCW owner
    edge_cells: np.ndarray = None       # (ne, 2), right = -1 on boundary
    edge_normal: np.ndarray = None      # (ne, 2) unit, outward from left
    edge_len: np.ndarray = None
    edge_dofs: np.ndarray = None        # (ne, 3): v0, midpoint, v1 point DoFs
    edge_tag: list = None
    boundary_edges: np.ndarray = None
    bedge_ghost: np.ndarray = None      # (ne,) ghost cell id or -1
    cedge_ptr: np.ndarray = None        # cell -> edges CSR (real cells)
    cedge_idx: np.ndarray = None
    cedge_sign: np.ndarray = None
    # slots
    slot_ptr: np.ndarray = None         # (n_cells_total + 1,)
    slot_pdof: np.ndarray = None        # combined point-DoF id per slot
    slot_target: np.ndarray = None      # real point DoF receiving this slot (-1 none)
    slot_cell: np.ndarray = None
    slot_normal: np.ndarray = None      # (n_slots, 2) scaled
    slot_unit_normal: np.ndarray = None
    subtri_area: np.ndarray = None      # (n_slots,)
    subtri_n: np.ndarray = None         # (n_slots, 3, 2) inward scaled normals
    slot_dual_area: np.ndarray = None   # |C_sigma| of the slot target (extended)
    # dual cells
    dual_area: np.ndarray = None        # (n_pdofs,) interior-only
    dual_area_bc: np.ndarray = None     # including ghost sub-triangles
    dual_perim_bc: np.ndarray = None
    # incidence
    pt_ptr: np.ndarray = None
    pt_slot: np.ndarray = None
    # ghosts
    n_ghost_cells: int = 0
    ghost_src_cell: np.ndarray = None
    ghost_edge: np.ndarray = None       # boundary edge id per ghost
    ghost_rule: np.ndarray = None       # RULE_* per ghost
    ghost_state: np.ndarray = None      # (n_ghosts, m) farfield state or zeros
    gpt_src: np.ndarray = None          # ghost point DoF -> source real point DoF
    gpt_ghost: np.ndarray = None        # ghost point DoF -> owning ghost index
    bedge_rule: np.ndarray = None       # (ne,) RULE_* (-1 interior)
    bedge_outflow: np.ndarray = None    # (ne,) farfield direction flag
    bedge_state: np.ndarray = None      # (ne, m)
    stab_scale: np.ndarray = None       # damping on/off per cell (ghosts off)
    groups: list = field(default_factory=list)


def build_discretization(mesh, bc_rules=None, n_comp=1, validate=True):
    """Build the full discretization (geometry, ghosts, VEM data, incidence).

    bc_rules maps boundary tag -> {"type": wall|inflow|outflow|neumann,
    "state": [...]} with "neumann" the default for untagged edges.
    """
    if validate:
        mesh.validate()
    d = Discretization(mesh)
    nv_mesh = mesh.n_vertices
    edges, edge_cells, edge_of_cell = mesh.edge_table()
    ne = len(edges)
    d.n_pdofs = nv_mesh + ne
    d.n_cells = mesh.n_cells

    pts = np.empty((d.n_pdofs, 2))
    pts[:nv_mesh] = mesh.vertices
    pts[nv_mesh:] = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])

    d.edge_verts = edges
    d.edge_cells = edge_cells
    ev = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    d.edge_len = np.sqrt((ev ** 2).sum(-1))
    d.edge_normal = np.column_stack([ev[:, 1], -ev[:, 0]]) / d.edge_len[:, None]
    d.edge_dofs = np.column_stack([edges[:, 0], nv_mesh + np.arange(ne), edges[:, 1]])
    d.boundary_edges = np.nonzero(edge_cells[:, 1] < 0)[0]
    d.edge_tag = [""] * ne
    for ei in d.boundary_edges:
        a, b = edges[ei]
        d.edge_tag[ei] = mesh.boundary_edge_tag(a, b)

    # cell -> edge CSR (real cells)
    counts = np.array([len(c) for c in mesh.cells])
    d.cedge_ptr = np.concatenate([[0], np.cumsum(counts)])
    d.cedge_idx = np.empty(d.cedge_ptr[-1], dtype=np.int64)
    d.cedge_sign = np.empty(d.cedge_ptr[-1], dtype=np.int64)
    for ci, row in enumerate(edge_of_cell):
        o = d.cedge_ptr[ci]
        for j, (ei, s) in enumerate(row):
            d.cedge_idx[o + j] = ei
            d.cedge_sign[o + j] = s

    # real cell boundary DoF loops (vertex, midpoint, vertex, ...)
    edge_lookup = {}
    for ei, (a, b) in enumerate(edges):
        edge_lookup[(int(a), int(b))] = ei
        edge_lookup[(int(b), int(a))] = ei
    cell_bdofs = []
    for cell in mesh.cells:
        n = len(cell)
        loop = np.empty(2 * n, dtype=np.int64)
        for k in range(n):
            a, b = int(cell[k]), int(cell[(k + 1) % n])
            loop[2 * k] = a
            loop[2 * k + 1] = nv_mesh + edge_lookup[(a, b)]
        cell_bdofs.append(loop)

    # boundary rules and ghost geometry
    bc_rules = bc_rules or {}
    d.bedge_rule = np.full(ne, -1, dtype=np.int64)
    d.bedge_outflow = np.zeros(ne, dtype=np.bool_)
    d.bedge_state = np.zeros((ne, n_comp))
    d.bedge_ghost = np.full(ne, -1, dtype=np.int64)

    ghost_polys = []        # vertex coordinate loops
    ghost_bdof_pos = []     # (2nv, 2) per ghost
    ghost_src_slotloc = []  # source local bdof index mirrored by each ghost bdof
    d.ghost_src_cell = []
    d.ghost_edge = []
    d.ghost_rule = []
    ghost_states = []

    for ei in d.boundary_edges:
        tag = d.edge_tag[ei]
        rule = bc_rules.get(tag, {"type": "neumann"})
        rname = rule.get("type", "neumann")
        if rname not in RULE_NAMES:
            raise MeshError(f"unknown boundary rule '{rname}' for tag '{tag}'")
        d.bedge_rule[ei] = RULE_NAMES[rname]
        d.bedge_outflow[ei] = rname == "outflow"
        if rname in ("inflow", "outflow"):
            st = np.asarray(rule["state"], dtype=float)
            if st.shape != (n_comp,):
                raise MeshError(f"boundary state for tag '{tag}' must have {n_comp} components")
            d.bedge_state[ei] = st
        src = int(edge_cells[ei, 0])
        p0 = mesh.vertices[edges[ei, 0]]
        nrm = d.edge_normal[ei]

        def reflect(xy):
            rel = xy - p0
            return xy - 2.0 * (rel @ nrm)[..., None] * nrm

        verts_src = mesh.cell_vertices(src)
        gverts = reflect(verts_src)[::-1]  # reflection flips orientation
        loop_src = cell_bdofs[src]
        pos_src = pts[loop_src]
        gpos = reflect(pos_src)
        nb = len(loop_src)
        # source loop reversed and rotated so the ghost loop stays CCW with the
        # same vertex/midpoint alternation
        perm = (-np.arange(nb)) % nb
        ghost_polys.append(gverts)
        ghost_bdof_pos.append(gpos[perm])
        ghost_src_slotloc.append(perm)
        d.ghost_src_cell.append(src)
        d.ghost_edge.append(ei)
        d.ghost_rule.append(RULE_NAMES[rname])
        ghost_states.append(d.bedge_state[ei].copy())

    d.n_ghost_cells = len(ghost_polys)
    d.ghost_src_cell = np.array(d.ghost_src_cell, dtype=np.int64)
    d.ghost_edge = np.array(d.ghost_edge, dtype=np.int64)
    d.ghost_rule = np.array(d.ghost_rule, dtype=np.int64)
    d.ghost_state = (np.array(ghost_states) if ghost_states
                     else np.zeros((0, n_comp)))
    d.bedge_ghost[d.ghost_edge] = d.n_cells + np.arange(d.n_ghost_cells)
    d.n_cells_total = d.n_cells + d.n_ghost_cells

    # ghost point DoFs: every ghost boundary DoF gets a fresh combined id;
    # slots whose mirrored position is its own source (the shared edge) target
    # the real DoF
    gpt_src = []
    gpt_ghost = []
    ghost_bdof_ids = []
    ghost_target = []
    next_id = d.n_pdofs
    for gi in range(d.n_ghost_cells):
        ei = d.ghost_edge[gi]
        shared = set(int(x) for x in d.edge_dofs[ei])
        loop_src = cell_bdofs[d.ghost_src_cell[gi]]
        perm = ghost_src_slotloc[gi]
        ids = np.empty(len(perm), dtype=np.int64)
        tgt = np.empty(len(perm), dtype=np.int64)
        for k, j in enumerate(perm):
            src_dof = int(loop_src[j])
            ids[k] = next_id
            gpt_src.append(src_dof)
            gpt_ghost.append(gi)
            next_id += 1
            tgt[k] = src_dof if src_dof in shared else -1
        ghost_bdof_ids.append(ids)
        ghost_target.append(tgt)
    d.gpt_src = np.array(gpt_src, dtype=np.int64)
    d.gpt_ghost = np.array(gpt_ghost, dtype=np.int64)
    n_pdofs_total = next_id
    all_pts = np.empty((n_pdofs_total, 2))
    all_pts[:d.n_pdofs] = pts
    for gi in range(d.n_ghost_cells):
        all_pts[ghost_bdof_ids[gi]] = ghost_bdof_pos[gi]
    d.points = all_pts

    # assemble per-cell geometry in one global ordering: real cells then ghosts
    all_vert_loops = [mesh.cell_vertices(i) for i in range(d.n_cells)] + ghost_polys
    all_bdofs = cell_bdofs + ghost_bdof_ids
    all_targets = [loop.copy() for loop in cell_bdofs] + ghost_target

    nv_arr = np.array([len(v) for v in all_vert_loops], dtype=np.int64)
    d.cell_nv = nv_arr
    d.slot_ptr = np.concatenate([[0], np.cumsum(2 * nv_arr)])
    n_slots = int(d.slot_ptr[-1])
    d.slot_pdof = np.concatenate(all_bdofs)
    d.slot_target = np.concatenate(all_targets)
    d.slot_cell = np.repeat(np.arange(d.n_cells_total), 2 * nv_arr)

    d.cell_area = np.empty(d.n_cells_total)
    d.cell_centroid = np.empty((d.n_cells_total, 2))
    d.cell_h = np.empty(d.n_cells_total)
    d.slot_normal = np.empty((n_slots, 2))
    d.subtri_area = np.empty(n_slots)
    d.subtri_n = np.empty((n_slots, 3, 2))

    # group cells by polygon size and assemble the projector data in batch
    d.groups = []
    for nv in sorted(set(nv_arr.tolist())):
        ids = np.nonzero(nv_arr == nv)[0]
        vb = np.stack([all_vert_loops[i] for i in ids])
        dp = d.points[np.stack([all_bdofs[i] for i in ids])]
        out = vem.assemble_group(vb, dp)
        g = Group(nv=nv, cells=ids, bdof=np.stack([all_bdofs[i] for i in ids]),
                  Gx=out["Gx"], Gy=out["Gy"], S=out["S"], Dpi=out["Dpi"],
                  Pi=out["Pi"], L2=out["L2"], centre=out["centre"], h=out["h"])
        d.groups.append(g)
        d.cell_area[ids] = out["area"]
        d.cell_centroid[ids] = out["centre"]
        d.cell_h[ids] = out["h"]

        nbd = 2 * nv
        pos = dp                      # (nc, nbd, 2)
        star = out["centre"]
        nxt = np.roll(pos, -1, axis=1)
        # scaled DoF normals: vertices get both adjacent edge normals, edge
        # midpoints the normal of their own edge
        nrm = np.empty_like(pos)
        for i in range(nv):
            a = 2 * i
            e_next = pos[:, (a + 2) % nbd] - pos[:, a]
            e_prev = pos[:, a] - pos[:, (a - 2) % nbd]
            nrm[:, a] = _rot90(-e_next) + _rot90(-e_prev)
            nrm[:, a + 1] = _rot90(-e_next)
        slot_idx = d.slot_ptr[ids][:, None] + np.arange(nbd)[None, :]
        d.slot_normal[slot_idx] = nrm

        # sub-triangles (sigma_i, sigma_{i+1}, star)
        t_area = 0.5 * ((nxt[..., 0] - pos[..., 0]) * (star[:, None, 1] - pos[..., 1])
                        - (star[:, None, 0] - pos[..., 0]) * (nxt[..., 1] - pos[..., 1]))
        if (t_area <= 0).any():
            bad = ids[np.nonzero((t_area <= 0).any(axis=1))[0]]
            raise MeshError(f"cells {bad.tolist()} not star-shaped w.r.t. centroid")
        d.subtri_area[slot_idx] = t_area
        d.subtri_n[slot_idx, 0] = _rot90(star[:, None, :] - nxt)
        d.subtri_n[slot_idx, 1] = _rot90(pos - star[:, None, :])
        d.subtri_n[slot_idx, 2] = _rot90(nxt - pos)

    nn = np.sqrt((d.slot_normal ** 2).sum(-1))
    d.slot_unit_normal = d.slot_normal / np.maximum(nn, 1e-300)[:, None]

    # spurious-mode damping acts on interior elements; ghost copies would
    # re-inject the mirrored deviation at the boundary and destabilize
    d.stab_scale = np.ones(d.n_cells_total)
    d.stab_scale[d.n_cells:] = 0.0

    # dual areas and perimeters (each sub-triangle gives a third of its area to
    # both of its boundary DoFs; the dual boundary inside a sub-triangle runs
    # midpoint-to-centroid-to-midpoint)
    local = np.arange(n_slots) - d.slot_ptr[d.slot_cell]
    nb_slot = 2 * nv_arr[d.slot_cell]
    snext = d.slot_ptr[d.slot_cell] + (local + 1) % nb_slot
    pi = d.points[d.slot_pdof]
    pn = d.points[d.slot_pdof[snext]]
    star = d.cell_centroid[d.slot_cell]
    g = (pi + pn + star) / 3.0
    m_edge = 0.5 * (pi + pn)
    seg_i = (np.linalg.norm(m_edge - g, axis=1)
             + np.linalg.norm(g - 0.5 * (pi + star), axis=1))
    seg_n = (np.linalg.norm(m_edge - g, axis=1)
             + np.linalg.norm(g - 0.5 * (pn + star), axis=1))
    third = d.subtri_area / 3.0
    tgt_i, tgt_n = d.slot_target, d.slot_target[snext]
    is_real = d.slot_cell < d.n_cells

    d.dual_area = np.zeros(d.n_pdofs)
    d.dual_area_bc = np.zeros(d.n_pdofs)
    d.dual_perim_bc = np.zeros(d.n_pdofs)
    for tgt, seg in ((tgt_i, seg_i), (tgt_n, seg_n)):
        ok = tgt >= 0
        np.add.at(d.dual_area_bc, tgt[ok], third[ok])
        np.add.at(d.dual_perim_bc, tgt[ok], seg[ok])
        okr = ok & is_real
        np.add.at(d.dual_area, tgt[okr], third[okr])

    d.slot_dual_area = np.where(d.slot_target >= 0,
                                d.dual_area_bc[np.maximum(d.slot_target, 0)], 1.0)

    # incidence CSR over slot targets, in fixed slot order
    valid = np.nonzero(d.slot_target >= 0)[0]
    order = np.argsort(d.slot_target[valid], kind="stable")
    d.pt_slot = valid[order].astype(np.int64)
    counts = np.bincount(d.slot_target[valid], minlength=d.n_pdofs)
    d.pt_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    return d


def check_geometric_invariants(d, tol=1e-12):
    """Zero-sum of scaled normals (per cell, and per interior DoF) and area
    partitions; raises AssertionError on failure."""
    scale = d.cell_h.max()
    for ci in range(d.n_cells_total):
        o, e = d.slot_ptr[ci], d.slot_ptr[ci + 1]
        s = d.slot_normal[o:e].sum(axis=0)
        assert np.abs(s).max() < tol * scale * (e - o), f"cell {ci} normal sum {s}"
        t = d.subtri_n[o:e].sum(axis=1)
        assert np.abs(t).max() < tol * scale * 10, f"cell {ci} sub-triangle normals"
        assert abs(d.subtri_area[o:e].sum() - d.cell_area[ci]) < tol * 10 * d.cell_area[ci]
    # interior DoFs: sum over incident real polygons vanishes
    interior = np.ones(d.n_pdofs, dtype=bool)
    for ei in d.boundary_edges:
        interior[d.edge_dofs[ei]] = False
    sums = np.zeros((d.n_pdofs, 2))
    real = d.slot_cell[d.pt_slot] < d.n_cells
    for k in np.nonzero(real)[0]:
        s = d.pt_slot[k]
        sums[d.slot_target[s]] += d.slot_normal[s]
    assert np.abs(sums[interior]).max() < tol * scale * 20
    # each sub-triangle attributes a third of its area to each of its two
    # point DoFs; the remaining third stays with the cell average
    area_sum = d.dual_area.sum()
    total = d.cell_area[:d.n_cells].sum()
    assert abs(area_sum - 2.0 * total / 3.0) < tol * 100 * total
    return True
