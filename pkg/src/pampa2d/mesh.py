"""Polygonal meshes: structured generators, uniform refinement, barycentric duals.

A mesh is a list of CCW polygons over shared vertices plus boundary-edge tags.
The polygonal dual connects barycenters of the triangles around each vertex;
on the boundary the loop is closed through the boundary-edge midpoints and the
vertex itself, so the physical boundary polyline is preserved exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .quadrature import polygon_area, polygon_centroid


class MeshError(Exception):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray                      # (nv, 2)
    cells: list                               # list of int arrays, CCW vertex loops
    boundary_tags: dict = field(default_factory=dict)  # frozenset({v0,v1}) -> tag

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_vertices(self, i):
        return self.vertices[self.cells[i]]

    def cell_areas(self):
        return np.array([polygon_area(self.cell_vertices(i)) for i in range(self.n_cells)])

    def cell_centroids(self):
        return np.array([polygon_centroid(self.cell_vertices(i)) for i in range(self.n_cells)])

    def cell_diameters(self):
        out = np.empty(self.n_cells)
        for i in range(self.n_cells):
            v = self.cell_vertices(i)
            d = v[:, None, :] - v[None, :, :]
            out[i] = np.sqrt((d ** 2).sum(-1)).max()
        return out

    def is_triangular(self):
        return all(len(c) == 3 for c in self.cells)

    def edge_table(self):
        """Canonical edges and adjacency.

        Returns (edges (ne,2) with v0<v1, edge_cells (ne,2) with -1 for missing
        right cell, edge_of_cell: list of (edge index, +1 if cell is the left
        cell / CCW owner) per cell).
        """
        emap = {}
        edges = []
        edge_cells = []
        edge_of_cell = []
        for ci, cell in enumerate(self.cells):
            row = []
            n = len(cell)
            for k in range(n):
                a, b = int(cell[k]), int(cell[(k + 1) % n])
                key = (a, b) if a < b else (b, a)
                if key not in emap:
                    emap[key] = len(edges)
                    edges.append(key)
                    edge_cells.append([-1, -1])
                ei = emap[key]
                if a < b:
                    edge_cells[ei][0] = ci
                    row.append((ei, 1))
                else:
                    edge_cells[ei][1] = ci
                    row.append((ei, -1))
            edge_of_cell.append(row)
        edges = np.array(edges, dtype=np.int64)
        edge_cells = np.array(edge_cells, dtype=np.int64)
        # orient every edge so that its left cell exists
        flip = edge_cells[:, 0] < 0
        edges[flip] = edges[flip][:, ::-1]
        edge_cells[flip] = edge_cells[flip][:, ::-1]
        if flip.any():
            for row in edge_of_cell:
                for j, (ei, s) in enumerate(row):
                    if flip[ei]:
                        row[j] = (ei, -s)
        return edges, edge_cells, edge_of_cell

    def boundary_edge_tag(self, a, b, default="neumann"):
        return self.boundary_tags.get(frozenset((int(a), int(b))), default)

    def validate(self, star_points=None):
        """Check CCW orientation, positive areas and star-shapedness of all cells."""
        for i, cell in enumerate(self.cells):
            v = self.vertices[cell]
            if polygon_area(v) <= 0.0:
                raise MeshError(f"cell {i} is not CCW or degenerate")
            star = polygon_centroid(v) if star_points is None else star_points[i]
            n = len(cell)
            for k in range(n):
                a, b = v[k], v[(k + 1) % n]
                tri_area = 0.5 * ((b[0] - a[0]) * (star[1] - a[1]) - (star[0] - a[0]) * (b[1] - a[1]))
                if tri_area <= 0.0:
                    raise MeshError(f"cell {i} is not star-shaped w.r.t. its star point")
        return True


def _check_bbox(bbox):
    x0, y0, x1, y1 = bbox
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate bbox {bbox}")
    return float(x0), float(y0), float(x1), float(y1)


def build_structured_quad(nx, ny, bbox):
    """Structured quadrilateral mesh of nx*ny cells on a rectangle."""
    if nx < 1 or ny < 1:
        raise MeshError("nx, ny must be >= 1")
    x0, y0, x1, y1 = _check_bbox(bbox)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    mesh = Mesh(verts, cells)
    _tag_rectangle_boundary(mesh, bbox)
    return mesh


def build_structured_tri(nx, ny, bbox):
    """Structured triangulation: each quad cell split along the same diagonal.

    All interior vertices have degree six, which keeps the barycentric dual
    close to regular hexagons.
    """
    quad = build_structured_quad(nx, ny, bbox)
    cells = []
    for c in quad.cells:
        a, b, cc, d = (int(v) for v in c)
        cells.append([a, b, cc])
        cells.append([a, cc, d])
    mesh = Mesh(quad.vertices, cells)
    _tag_rectangle_boundary(mesh, bbox)
    return mesh


def _tag_rectangle_boundary(mesh, bbox, tags=("bottom", "right", "top", "left")):
    x0, y0, x1, y1 = _check_bbox(bbox)
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    edges, edge_cells, _ = mesh.edge_table()
    mesh.boundary_tags = {}
    for (a, b), (_, right) in zip(edges, edge_cells):
        if right >= 0:
            continue
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        if abs(pa[1] - y0) < tol and abs(pb[1] - y0) < tol:
            tag = tags[0]
        elif abs(pa[0] - x1) < tol and abs(pb[0] - x1) < tol:
            tag = tags[1]
        elif abs(pa[1] - y1) < tol and abs(pb[1] - y1) < tol:
            tag = tags[2]
        elif abs(pa[0] - x0) < tol and abs(pb[0] - x0) < tol:
            tag = tags[3]
        else:
            tag = "boundary"
        mesh.boundary_tags[frozenset((int(a), int(b)))] = tag


def refine_uniform(mesh):
    """Split every triangle into 4 by connecting the edge midpoints; h halves."""
    if not mesh.is_triangular():
        raise MeshError("uniform refinement requires a triangular mesh")
    verts = [tuple(p) for p in mesh.vertices]
    mid_of = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in mid_of:
            mid_of[key] = len(verts)
            verts.append(tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b])))
        return mid_of[key]

    cells = []
    for c in mesh.cells:
        a, b, cc = (int(v) for v in c)
        mab, mbc, mca = midpoint(a, b), midpoint(b, cc), midpoint(cc, a)
        cells.extend([[a, mab, mca], [mab, b, mbc], [mca, mbc, cc], [mab, mbc, mca]])
    out = Mesh(np.array(verts), cells)
    tags = {}
    for key, tag in mesh.boundary_tags.items():
        a, b = tuple(key)
        m = mid_of.get((a, b) if a < b else (b, a))
        if m is not None:
            tags[frozenset((a, m))] = tag
            tags[frozenset((m, b))] = tag
    out.boundary_tags = tags
    return out


def build_polygonal_dual(tri_mesh):
    """Barycentric dual: one polygon per vertex from the CCW loop of incident
    triangle barycenters; boundary vertices keep the vertex itself and the two
    adjacent boundary-edge midpoints so the domain boundary is preserved."""
    if not tri_mesh.is_triangular():
        raise MeshError("polygonal dual requires a triangular mesh")
    nv = tri_mesh.n_vertices
    bary = tri_mesh.cell_centroids()
    edges, edge_cells, _ = tri_mesh.edge_table()

    incident = [[] for _ in range(nv)]
    for ci, cell in enumerate(tri_mesh.cells):
        for v in cell:
            incident[int(v)].append(ci)

    boundary_edges_at = [[] for _ in range(nv)]
    for (a, b), (_, right) in zip(edges, edge_cells):
        if right < 0:
            boundary_edges_at[int(a)].append((int(a), int(b)))
            boundary_edges_at[int(b)].append((int(a), int(b)))

    new_verts = []
    vert_key = []
    vert_id = {}

    def add_point(key, xy):
        if key not in vert_id:
            vert_id[key] = len(new_verts)
            new_verts.append(xy)
            vert_key.append(key)
        return vert_id[key]

    cells = []
    tags = {}
    for v in range(nv):
        tris = incident[v]
        if not tris:
            continue
        p = tri_mesh.vertices[v]
        pts = [(("bary", t), bary[t]) for t in tris]
        is_boundary = len(boundary_edges_at[v]) > 0
        if is_boundary:
            for (a, b) in boundary_edges_at[v]:
                m = 0.5 * (tri_mesh.vertices[a] + tri_mesh.vertices[b])
                pts.append((("mid", a, b), m))
            pts.append((("vert", v), p))
            # angles measured around the centroid of the candidate loop
            ref = np.mean([xy for _, xy in pts], axis=0)
        else:
            ref = p
        ang = [np.arctan2(xy[1] - ref[1], xy[0] - ref[0]) for _, xy in pts]
        order = np.argsort(ang)
        loop = [pts[k] for k in order]
        ids = [add_point(key, xy) for key, xy in loop]
        poly = np.array([new_verts[i] for i in ids])
        if polygon_area(poly) < 0:
            ids = ids[::-1]
            poly = poly[::-1]
        cells.append(ids)
        star = polygon_centroid(poly)
        n = len(poly)
        for k in range(n):
            a, b = poly[k], poly[(k + 1) % n]
            tri_area = 0.5 * ((b[0] - a[0]) * (star[1] - a[1]) - (star[0] - a[0]) * (b[1] - a[1]))
            if tri_area <= 0.0:
                raise MeshError(f"dual polygon of vertex {v} is not star-shaped w.r.t. its centroid")
        if is_boundary:
            # the two dual edges touching the original vertex lie on the domain boundary
            varid = vert_id[("vert", v)]
            pos = ids.index(varid)
            for nb_pos in (pos - 1, pos + 1):
                nb = ids[nb_pos % len(ids)]
                key = vert_key[nb]
                if key[0] == "mid":
                    tag = tri_mesh.boundary_edge_tag(key[1], key[2])
                    tags[frozenset((varid, nb))] = tag

    dual = Mesh(np.array(new_verts), cells)
    dual.boundary_tags = tags
    return dual


def save_mesh(mesh, path):
    """Write the JSON mesh document {vertices, cells, boundary}."""
    doc = {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": [[int(v) for v in c] for c in mesh.cells],
        "boundary": sorted(
            [sorted(int(v) for v in key) + [tag] for key, tag in mesh.boundary_tags.items()]
        ),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_mesh(path):
    with open(path) as f:
        doc = json.load(f)
    mesh = Mesh(np.array(doc["vertices"], dtype=float), doc["cells"])
    mesh.boundary_tags = {
        frozenset((int(a), int(b))): tag for a, b, tag in doc.get("boundary", [])
    }
    return mesh
