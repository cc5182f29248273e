"""Polyhedron -> beam-network scaffolds.

Every edge of the base solid becomes a beam. Horizontal layers are inserted
by cutting each lateral edge at the layer heights and joining the cut points
in a ring; ring edges end in flexure joints. Optionally every lateral beam
segment gets a mid-point node. For the default two-apex pyramid with two
layers this yields 14 intersection nodes and 12 mid-points, i.e. 26 feature
points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import SpecError

SUPPORTED_SOLIDS = ("pyramid2", "prism", "tetrahedron")


@dataclass(frozen=True)
class ScaffoldSpec:
    solid: str = "pyramid2"
    layer_count: int = 2
    base_depth_mm: float = 40.0  # along x, the pushing direction of the primary face
    base_width_mm: float = 36.0  # along y
    height_mm: float = 80.0
    ridge_mm: float = 8.0  # pyramid2 only: distance between the two apex vertices
    top_scale: float = 0.6  # prism only: top polygon size relative to the base
    layer_fractions: Optional[tuple] = None  # heights as fractions of height_mm
    midpoints: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ScaffoldSpec":
        d = dict(d)
        if d.get("layer_fractions") is not None:
            d["layer_fractions"] = tuple(float(f) for f in d["layer_fractions"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown scaffold keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Beam:
    """A lateral beam from a base vertex to a top vertex as a chain of nodes."""

    nodes: list
    s: np.ndarray  # normalised arc length of each node along the beam


@dataclass
class PolyhedralScaffold:
    nodes: np.ndarray  # (N, 3) mm
    edges: np.ndarray  # (E, 2) node indices
    layer_count: int
    flexure_edges: frozenset  # indices into ``edges``
    faces: dict  # label -> list of beam indices bounding that exterior face
    node_layer: np.ndarray  # layer index per node (0 = base, layer_count+1 = top)
    beams: list
    ring_edges: dict  # layer -> list of edge indices
    plate_nodes: list  # nodes of the first layer (marker plate)
    plate_edges: list = field(default_factory=list)
    spec: Optional[ScaffoldSpec] = None
    solid_vertices: int = 0
    solid_edges: int = 0
    solid_faces: int = 0
    n_base: int = 0

    @property
    def base_nodes(self):
        # layer-0 intersections; base-segment mid-points also carry layer 0 but are free
        return list(range(self.n_base))

    @property
    def n_nodes(self):
        return len(self.nodes)

    def is_connected(self) -> bool:
        adj = [[] for _ in range(self.n_nodes)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        stack = [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n_nodes


def _base_solid(spec: ScaffoldSpec):
    """Return (base polygon, top vertices, lateral edges, top edges, face beams)."""
    dx, dy, h = spec.base_depth_mm / 2, spec.base_width_mm / 2, spec.height_mm
    if spec.solid == "pyramid2":
        # base: front-left, front-right, back-right, back-left; front face at -x
        base = np.array([[-dx, -dy, 0], [-dx, dy, 0], [dx, dy, 0], [dx, -dy, 0]], float)
        r = spec.ridge_mm / 2
        top = np.array([[0, -r, h], [0, r, h]], float)
        lateral = [(0, 0), (1, 1), (2, 1), (3, 0)]
        top_edges = [(0, 1)]
        # lateral beam indices: 0 FL, 1 FR, 2 BR, 3 BL
        faces = {"primary": [0, 1], "secondary": [1, 2]}
        n_faces = 5
    elif spec.solid == "prism":
        base = np.array([[-dx, -dy, 0], [-dx, dy, 0], [dx, dy, 0], [dx, -dy, 0]], float)
        top = base * np.array([spec.top_scale, spec.top_scale, 0]) + np.array([0, 0, h])
        lateral = [(i, i) for i in range(4)]
        top_edges = [(i, (i + 1) % 4) for i in range(4)]
        faces = {"primary": [0, 1], "secondary": [1, 2]}
        n_faces = 6
    elif spec.solid == "tetrahedron":
        ang = np.deg2rad([180.0, 60.0, -60.0])
        rad = spec.base_depth_mm / 2
        base = np.column_stack([rad * np.cos(ang), rad * np.sin(ang), np.zeros(3)])
        top = np.array([[0.0, 0.0, h]])
        lateral = [(0, 0), (1, 0), (2, 0)]
        top_edges = []
        faces = {"primary": [0, 1], "secondary": [1, 2]}
        n_faces = 4
    else:
        raise SpecError(f"unsupported solid {spec.solid!r}; choose from {SUPPORTED_SOLIDS}")
    return base, top, lateral, top_edges, faces, n_faces


def build_scaffold(spec: ScaffoldSpec = ScaffoldSpec()) -> PolyhedralScaffold:
    if spec.solid not in SUPPORTED_SOLIDS:
        raise SpecError(f"unsupported solid {spec.solid!r}; choose from {SUPPORTED_SOLIDS}")
    if spec.layer_count < 1:
        raise SpecError("layer_count must be >= 1: no interior network without layers")
    base, top, lateral, top_edges, faces, n_faces = _base_solid(spec)
    L = spec.layer_count
    fr = spec.layer_fractions or tuple((i + 1) / (L + 1) for i in range(L))
    if len(fr) != L or any(not 0 < f < 1 for f in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
        raise SpecError("layer_fractions must be L increasing values in (0, 1)")

    nb, nt = len(base), len(top)
    nodes = [*base, *top]
    layer = [0] * nb + [L + 1] * nt
    edges, flex = [], set()

    def add_edge(a, b):
        edges.append((min(a, b), max(a, b)))
        return len(edges) - 1

    # base ring and top edges of the solid
    for i in range(nb):
        add_edge(i, (i + 1) % nb)
    for a, b in top_edges:
        add_edge(nb + a, nb + b)

    # layer nodes on each lateral edge
    layer_nodes = [[None] * len(lateral) for _ in range(L)]
    for li, f in enumerate(fr):
        for k, (bi, ti) in enumerate(lateral):
            p = base[bi] + f * (top[ti] - base[bi])
            layer_nodes[li][k] = len(nodes)
            nodes.append(p)
            layer.append(li + 1)

    beams = []
    for k, (bi, ti) in enumerate(lateral):
        chain = [bi] + [layer_nodes[li][k] for li in range(L)] + [nb + ti]
        full = [chain[0]]
        for a, b in zip(chain, chain[1:]):
            if spec.midpoints:
                m = len(nodes)
                nodes.append(0.5 * (np.asarray(nodes[a]) + np.asarray(nodes[b])))
                layer.append(layer[a])
                add_edge(a, m)
                add_edge(m, b)
                full += [m, b]
            else:
                add_edge(a, b)
                full.append(b)
        pts = np.asarray([nodes[i] for i in full])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
        beams.append(Beam(full, s))

    ring_edges = {}
    m = len(lateral)
    for li in range(L):
        ids = []
        for k in range(m):
            a, b = layer_nodes[li][k], layer_nodes[li][(k + 1) % m]
            e = add_edge(a, b)
            flex.add(e)
            ids.append(e)
        ring_edges[li + 1] = ids

    plate_nodes = list(layer_nodes[0])
    plate_edges = []
    # triangulate the marker plate (fan from its first node) so it is rigid in-plane
    for k in range(2, m - 1):
        plate_edges.append(add_edge(plate_nodes[0], plate_nodes[k]))
    if m == 4:
        plate_edges.append(add_edge(plate_nodes[1], plate_nodes[3]))

    edges_arr = np.asarray(edges, dtype=int)
    if len(set(map(tuple, edges_arr))) != len(edges_arr):
        raise SpecError("duplicate edges generated")
    n_solid_edges = nb + len(top_edges) + len(lateral)
    return PolyhedralScaffold(
        nodes=np.asarray(nodes, dtype=float),
        edges=edges_arr,
        layer_count=L,
        flexure_edges=frozenset(flex),
        faces=faces,
        node_layer=np.asarray(layer, dtype=int),
        beams=beams,
        ring_edges=ring_edges,
        plate_nodes=plate_nodes,
        plate_edges=plate_edges,
        spec=spec,
        solid_vertices=nb + nt,
        solid_edges=n_solid_edges,
        solid_faces=n_faces,
        n_base=nb,
    )
