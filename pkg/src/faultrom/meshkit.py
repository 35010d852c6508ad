"""Mesh data model for mixed-dimensional porous-media domains.

A domain consists of a D-dimensional rock matrix, codimension-1 faults and
codimension-2 fault intersections.  Faults are geometrically resolved as
chains of matrix faces with duplicated nodes (one copy per side) encoding
the interior boundary.  Duplicate nodes must carry bit-identical
coordinates; side membership is topological, never inferred from
coordinates.

On-disk format (UTF-8 JSON):
  dim              int
  nodes            [[x, y(, z)], ...]
  cells            [[node indices], ...]        uniform arity per document
  fault_polylines  [{"id": int, "nodes": [indices],
                     "side_pairs": [[left, right], ...]}, ...]
  intersections    [{"node": int, "branches": [fault ids]}, ...]
  boundary_tags    {tag: [[n1, n2], ...]}
Indices are 0-based, coordinates 64-bit floats serialized with full
round-trip precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, MeshFormatError

GEOM_TOL = 1e-12


# ---------------------------------------------------------------------------
# subdomains

@dataclass
class Subdomain:
    """One fixed-dimension piece of the mixed-dimensional domain."""

    dim: int
    node_coords: np.ndarray          # (n_nodes, D)
    cells: np.ndarray                # (n_cells, arity) node indices
    cell_centers: np.ndarray = None
    cell_measures: np.ndarray = None
    faces: np.ndarray = None         # (n_faces, max_arity), -1 padded
    face_sizes: np.ndarray = None
    face_cells: np.ndarray = None    # (n_faces, 2), -1 marks missing neighbor
    face_normals: np.ndarray = None  # (n_faces, D), unit
    face_measures: np.ndarray = None
    face_centers: np.ndarray = None
    boundary_tags: dict = field(default_factory=dict)   # tag -> face id array
    cell_regions: np.ndarray = None

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)


_FACE_PATTERNS = {
    # cell arity (per dim) -> list of local node index tuples, one per face
    (1, 2): [(0,), (1,)],
    (2, 3): [(0, 1), (1, 2), (2, 0)],
    (2, 4): [(0, 1), (1, 2), (2, 3), (3, 0)],
    # prism: bottom/top triangles plus three side quads
    (3, 6): [(0, 2, 1), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5)],
}


def build_subdomain(dim: int, coords: np.ndarray, cells: np.ndarray) -> Subdomain:
    """Construct a subdomain with connectivity and geometry derived."""
    coords = np.asarray(coords, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2:
        raise MeshFormatError("cells must be a uniform-arity array")
    arity = cells.shape[1]
    key = (dim, arity)
    if key not in _FACE_PATTERNS:
        raise MeshFormatError(f"unsupported cell arity {arity} for dim {dim}")
    patterns = _FACE_PATTERNS[key]

    face_map: dict[tuple, int] = {}
    faces: list[tuple] = []
    face_cells: list[list[int]] = []
    for c, cell in enumerate(cells):
        for pat in patterns:
            fnodes = tuple(int(cell[p]) for p in pat)
            fkey = tuple(sorted(fnodes))
            fid = face_map.get(fkey)
            if fid is None:
                face_map[fkey] = len(faces)
                faces.append(fnodes)
                face_cells.append([c, -1])
            else:
                if face_cells[fid][1] >= 0:
                    raise MeshFormatError(
                        f"face {fnodes} shared by more than two cells")
                face_cells[fid][1] = c

    max_ar = max(len(f) for f in faces)
    face_arr = np.full((len(faces), max_ar), -1, dtype=np.int64)
    sizes = np.zeros(len(faces), dtype=np.int64)
    for i, f in enumerate(faces):
        face_arr[i, : len(f)] = f
        sizes[i] = len(f)

    sd = Subdomain(dim=dim, node_coords=coords, cells=cells,
                   faces=face_arr, face_sizes=sizes,
                   face_cells=np.asarray(face_cells, dtype=np.int64))
    recompute_geometry(sd)
    return sd


def recompute_geometry(sd: Subdomain) -> None:
    """Fill centers, measures and normals from current node coordinates.

    Cells must be positively oriented; a non-positive measure raises
    GeometryError naming the offending cell.
    """
    coords = sd.node_coords
    cells = sd.cells
    pts = coords[cells]
    sd.cell_centers = pts.mean(axis=1)

    if sd.dim == 1:
        sd.cell_measures = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    elif sd.dim == 2:
        x, y = pts[..., 0], pts[..., 1]
        xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        if coords.shape[1] == 2:
            sd.cell_measures = 0.5 * (x * yn - xn * y).sum(axis=1)
        else:
            # planar polygon embedded in 3D: sum of triangle-fan cross products
            v0 = pts[:, :1, :]
            cr = np.cross(pts[:, 1:-1, :] - v0, pts[:, 2:, :] - v0)
            sd.cell_measures = 0.5 * np.linalg.norm(cr.sum(axis=1), axis=1)
    elif sd.dim == 3:
        b0, b1, b2, t0, t1, t2 = (pts[:, i, :] for i in range(6))

        def tet(a, b, c, d):
            return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0

        sd.cell_measures = tet(b0, b1, b2, t0) + tet(b1, b2, t0, t1) \
            + tet(b2, t0, t1, t2)
    else:
        sd.cell_measures = np.ones(len(cells))

    bad = np.flatnonzero(sd.cell_measures <= GEOM_TOL)
    if bad.size:
        raise GeometryError(
            f"dim-{sd.dim} cell {int(bad[0])} has non-positive measure "
            f"{sd.cell_measures[bad[0]]:.3e}")

    _face_geometry(sd)


def _face_geometry(sd: Subdomain) -> None:
    coords = sd.node_coords
    D = coords.shape[1]
    nf = sd.n_faces
    centers = np.zeros((nf, D))
    measures = np.zeros(nf)
    normals = np.zeros((nf, D))

    for size in np.unique(sd.face_sizes):
        idx = np.flatnonzero(sd.face_sizes == size)
        nodes = sd.faces[idx, :size]
        p = coords[nodes]
        centers[idx] = p.mean(axis=1)
        if size == 1:
            measures[idx] = 1.0
            d = centers[idx] - sd.cell_centers[sd.face_cells[idx, 0]]
            normals[idx] = _unit(d)
        elif size == 2:
            e = p[:, 1] - p[:, 0]
            measures[idx] = np.linalg.norm(e, axis=1)
            t = _unit(e)
            if D == 2:
                normals[idx] = np.stack([t[:, 1], -t[:, 0]], axis=1)
            else:
                # edge of a surface subdomain in 3D: in-plane normal
                d = centers[idx] - sd.cell_centers[sd.face_cells[idx, 0]]
                d -= t * np.einsum("ij,ij->i", d, t)[:, None]
                normals[idx] = _unit(d)
        elif size == 3:
            n = 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            measures[idx] = np.linalg.norm(n, axis=1)
            normals[idx] = _unit(n)
        elif size == 4:
            n1 = 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            n2 = 0.5 * np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0])
            measures[idx] = np.linalg.norm(n1, axis=1) + np.linalg.norm(n2, axis=1)
            normals[idx] = _unit(n1 + n2)
        else:  # pragma: no cover
            raise MeshFormatError(f"unsupported face arity {size}")

    # orient outward from the first adjacent cell
    d = centers - sd.cell_centers[sd.face_cells[:, 0]]
    flip = np.einsum("ij,ij->i", d, normals) < 0
    normals[flip] *= -1.0

    sd.face_centers = centers
    sd.face_measures = measures
    sd.face_normals = normals


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    n = np.where(n < GEOM_TOL, 1.0, n)
    return v / n


# ---------------------------------------------------------------------------
# mixed-dimensional mesh

@dataclass
class InterfaceCoupling:
    """Mortar coupling between one side of a fault and matrix faces."""

    fault_id: int
    side: int                       # +1 on the fault-normal side, -1 opposite
    matrix_face_ids: np.ndarray
    fault_cell_ids: np.ndarray
    projection_weights: np.ndarray  # (n fault cells, n faces), rows sum to 1
    overlap: np.ndarray             # raw overlap measures, same shape


@dataclass
class FaultTrace:
    """Static description of one fault's geometry and face chains."""

    fault_id: int
    normal: np.ndarray
    tangent: np.ndarray
    second_tangent: np.ndarray | None
    ref_point: np.ndarray
    chain_nodes: np.ndarray          # canonical node ids along the trace (2D)
    side_pairs: np.ndarray           # (k, 2) duplicated node pairs from file
    plus_faces: np.ndarray           # matrix face ids on the +normal side
    minus_faces: np.ndarray


@dataclass
class Intersection:
    """Codimension-2 coupling point between fault branches."""

    point: np.ndarray
    node: int
    branches: list                  # [(fault_id, fault_cell_id), ...]
    tangents: np.ndarray            # (n_branches, D) outward unit vectors

    @property
    def n_branches(self) -> int:
        return len(self.branches)


@dataclass
class DofLayout:
    """Global ordering: matrix pressure, fault pressure, interface flux."""

    n_pressure: int
    n_fault_pressure: int
    n_flux: int
    fault_pressure_offset: dict      # fault_id -> global start index
    intersection_pressure: np.ndarray  # global index per intersection
    coupling_flux_offset: dict       # (fault_id, side) -> global start index
    intersection_flux: list          # per intersection: global index array

    @property
    def total(self) -> int:
        return self.n_pressure + self.n_fault_pressure + self.n_flux

    @property
    def block_offsets(self) -> tuple:
        return (0, self.n_pressure, self.n_pressure + self.n_fault_pressure)

    @property
    def block_slices(self) -> tuple:
        o = self.block_offsets
        return (slice(o[0], o[1]), slice(o[1], o[2]), slice(o[2], self.total))

    block_names = ("pressure", "fault_pressure", "interface_flux")


@dataclass
class MixedDimMesh:
    dim: int
    matrix: Subdomain
    faults: dict                     # fault_id -> Subdomain (dim D-1)
    fault_traces: dict               # fault_id -> FaultTrace
    couplings: list = field(default_factory=list)
    intersections: list = field(default_factory=list)
    fault_node_side: dict = field(default_factory=dict)  # fid -> {node: 0|1}
    fault_excluded_faces: dict = field(default_factory=dict)  # fid -> set
    dof_layout: DofLayout = None
    extrusion: tuple = None          # (layers, height) when built by extrude()
    document: dict = None            # source document for round-trip saves

    @property
    def subdomains(self) -> dict:
        out = {self.dim: [self.matrix]}
        if self.faults:
            out[self.dim - 1] = [self.faults[k] for k in sorted(self.faults)]
        if self.intersections:
            out[self.dim - 2] = list(self.intersections)
        return out

    def coupling(self, fault_id: int, side: int) -> InterfaceCoupling:
        for c in self.couplings:
            if c.fault_id == fault_id and c.side == side:
                return c
        raise KeyError((fault_id, side))


def _build_dof_layout(mesh: MixedDimMesh) -> DofLayout:
    n_p = mesh.matrix.n_cells
    fp_off = {}
    pos = n_p
    for fid in sorted(mesh.faults):
        fp_off[fid] = pos
        pos += mesh.faults[fid].n_cells
    ipress = np.zeros(len(mesh.intersections), dtype=np.int64)
    for i in range(len(mesh.intersections)):
        ipress[i] = pos
        pos += 1
    n_fp = pos - n_p

    cf_off = {}
    for fid in sorted(mesh.faults):
        for side in (+1, -1):
            cf_off[(fid, side)] = pos
            pos += mesh.faults[fid].n_cells
    iflux = []
    for isec in mesh.intersections:
        idx = np.arange(pos, pos + isec.n_branches, dtype=np.int64)
        iflux.append(idx)
        pos += isec.n_branches
    n_lam = pos - n_p - n_fp
    return DofLayout(n_p, n_fp, n_lam, fp_off, ipress, cf_off, iflux)


# ---------------------------------------------------------------------------
# loading

def load_mesh(document) -> MixedDimMesh:
    """Build a MixedDimMesh from a JSON document (text or parsed dict)."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MeshFormatError(f"invalid JSON: {exc}") from exc
    else:
        doc = document

    for key in ("dim", "nodes", "cells"):
        if key not in doc:
            raise MeshFormatError(f"missing required key {key!r}")
    dim = int(doc["dim"])
    if dim not in (2, 3):
        raise MeshFormatError(f"unsupported dim {dim}")
    coords = np.asarray(doc["nodes"], dtype=float)
    if coords.ndim != 2 or coords.shape[1] != dim:
        raise MeshFormatError("nodes must be an (n, dim) array")
    cells = np.asarray(doc["cells"], dtype=np.int64)
    if cells.size and (cells.min() < 0 or cells.max() >= len(coords)):
        raise MeshFormatError("cell node index out of range")

    matrix = build_subdomain(dim, coords, cells)

    # canonical coordinate ids let us find coincident duplicate faces
    coord_gid = _coordinate_groups(coords)
    bfaces = matrix.boundary_faces()
    bface_by_key: dict[tuple, list] = {}
    for f in bfaces:
        sz = matrix.face_sizes[f]
        key = tuple(sorted(coord_gid[n] for n in matrix.faces[f, :sz]))
        bface_by_key.setdefault(key, []).append(int(f))

    faults = {}
    traces = {}
    node_side = {}
    for spec in doc.get("fault_polylines", []):
        fid = int(spec["id"])
        chain = np.asarray(spec["nodes"], dtype=np.int64)
        if len(chain) < 2:
            raise MeshFormatError(f"fault {fid}: polyline needs >= 2 nodes")
        pairs = np.asarray(spec.get("side_pairs", []), dtype=np.int64)
        pairs = pairs.reshape(-1, 2)
        for a, b in pairs:
            if not np.array_equal(coords[a], coords[b]):
                raise MeshFormatError(
                    f"fault {fid}: side pair ({a}, {b}) coordinates differ")
        sub, trace, sides = _resolve_fault(
            fid, chain, pairs, matrix, coords, coord_gid, bface_by_key)
        faults[fid] = sub
        traces[fid] = trace
        node_side[fid] = sides

    mesh = MixedDimMesh(dim=dim, matrix=matrix, faults=faults,
                        fault_traces=traces, fault_node_side=node_side,
                        document=doc)

    _resolve_intersections(mesh, doc.get("intersections", []))
    _resolve_boundary_tags(mesh, doc.get("boundary_tags", {}))
    build_interfaces(mesh)
    mesh.dof_layout = _build_dof_layout(mesh)
    return mesh


def load_mesh_file(path) -> MixedDimMesh:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "extruded" in doc:
        ext = doc["extruded"]
        base = load_mesh(doc["base"])
        return extrude(base, int(ext["layers"]), float(ext["height"]))
    return load_mesh(doc)


def save_mesh(mesh: MixedDimMesh, path) -> None:
    """Write the source document back out; coordinates round-trip exactly."""
    if mesh.extrusion is not None:
        doc = {"extruded": {"layers": mesh.extrusion[0],
                            "height": mesh.extrusion[1]},
               "base": mesh.document}
    else:
        doc = mesh.document
    if doc is None:
        raise MeshFormatError("mesh carries no source document")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _coordinate_groups(coords: np.ndarray) -> np.ndarray:
    """Map node id -> canonical id shared by bit-identical coordinates."""
    seen: dict[bytes, int] = {}
    gid = np.zeros(len(coords), dtype=np.int64)
    for i, row in enumerate(coords):
        key = row.tobytes()
        gid[i] = seen.setdefault(key, i)
    return gid


def _resolve_fault(fid, chain, pairs, matrix, coords, coord_gid, bface_by_key):
    pts = coords[chain]
    seg = pts[-1] - pts[0]
    length = np.linalg.norm(seg)
    if length < GEOM_TOL:
        raise MeshFormatError(f"fault {fid}: degenerate polyline")
    tangent = seg / length
    # straight traces only; verify collinearity
    dev = pts - pts[0]
    dev = dev - np.outer(dev @ tangent, tangent)
    if np.abs(dev).max() > 1e-9:
        raise MeshFormatError(f"fault {fid}: polyline is not straight")
    if len(coords[0]) == 2:
        normal = np.array([tangent[1], -tangent[0]])
        second = None
    else:
        raise MeshFormatError("3D fault polylines must come from extrude()")

    plus_faces = []
    minus_faces = []
    ref = pts[0]
    for a, b in zip(chain[:-1], chain[1:]):
        key = tuple(sorted((coord_gid[a], coord_gid[b])))
        cand = bface_by_key.get(key, [])
        sides = {}
        for f in cand:
            cell = matrix.face_cells[f, 0]
            s = np.sign((matrix.cell_centers[cell] - ref) @ normal)
            if s == 0:
                raise MeshFormatError(
                    f"fault {fid}: cannot classify side of face {f}")
            sides.setdefault(int(s), []).append(f)
        if sorted(sides) != [-1, 1] or any(len(v) != 1 for v in sides.values()):
            raise MeshFormatError(
                f"fault {fid}: polyline segment ({a}, {b}) not aligned with "
                f"a matched pair of matrix faces")
        plus_faces.append(sides[1][0])
        minus_faces.append(sides[-1][0])

    sub = build_subdomain(1 if len(coords[0]) == 2 else 2, pts.copy(),
                          np.stack([np.arange(len(chain) - 1),
                                    np.arange(1, len(chain))], axis=1))
    trace = FaultTrace(fault_id=fid, normal=normal, tangent=tangent,
                       second_tangent=second, ref_point=ref.copy(),
                       chain_nodes=chain, side_pairs=pairs,
                       plus_faces=np.asarray(plus_faces, dtype=np.int64),
                       minus_faces=np.asarray(minus_faces, dtype=np.int64))

    # topological side of duplicated matrix nodes (1 on the +normal side)
    sides = {}
    plus_nodes = set(int(n) for f in plus_faces
                     for n in matrix.faces[f, : matrix.face_sizes[f]])
    minus_nodes = set(int(n) for f in minus_faces
                      for n in matrix.faces[f, : matrix.face_sizes[f]])
    for n in plus_nodes - minus_nodes:
        sides[n] = 1
    for n in minus_nodes - plus_nodes:
        sides[n] = 0
    return sub, trace, sides


def _resolve_intersections(mesh: MixedDimMesh, specs) -> None:
    coords = mesh.matrix.node_coords
    for spec in specs:
        node = int(spec["node"])
        if node < 0 or node >= len(coords):
            raise MeshFormatError(f"intersection node {node} out of range")
        point = coords[node]
        branches = []
        tangents = []
        for fid in spec["branches"]:
            fid = int(fid)
            if fid not in mesh.faults:
                raise MeshFormatError(
                    f"intersection references unknown fault {fid}")
            sub = mesh.faults[fid]
            found = False
            for c in range(sub.n_cells):
                for local in (0, 1):
                    endpoint = sub.node_coords[sub.cells[c, local]]
                    if np.linalg.norm(endpoint - point) < 1e-12:
                        other = sub.cell_centers[c]
                        branches.append((fid, c))
                        tangents.append(_unit(point - other))
                        found = True
            if not found:
                raise MeshFormatError(
                    f"dangling intersection reference: fault {fid} has no "
                    f"cell endpoint at node {node}")
        if len(branches) < 2:
            raise MeshFormatError(
                f"intersection at node {node} has fewer than 2 branches")
        isec = Intersection(point=point.copy(), node=node, branches=branches,
                            tangents=np.asarray(tangents))
        mesh.intersections.append(isec)

    # fault-internal faces sitting on an intersection point exchange flux
    # through the 0D coupling, not through in-plane conduction
    for isec in mesh.intersections:
        for fid, _cell in isec.branches:
            sub = mesh.faults[fid]
            excl = mesh.fault_excluded_faces.setdefault(fid, set())
            for f in sub.interior_faces():
                fnode = sub.faces[f, 0]
                if np.linalg.norm(sub.node_coords[fnode] - isec.point) < 1e-12:
                    excl.add(int(f))


def _resolve_boundary_tags(mesh: MixedDimMesh, tags) -> None:
    matrix = mesh.matrix
    by_nodes = {}
    for f in matrix.boundary_faces():
        sz = matrix.face_sizes[f]
        by_nodes[tuple(sorted(matrix.faces[f, :sz].tolist()))] = int(f)
    fault_faces = set()
    for tr in mesh.fault_traces.values():
        fault_faces.update(tr.plus_faces.tolist())
        fault_faces.update(tr.minus_faces.tolist())
    out = {}
    for tag, pairs in tags.items():
        ids = []
        for pair in pairs:
            key = tuple(sorted(int(n) for n in pair))
            f = by_nodes.get(key)
            if f is None:
                raise MeshFormatError(
                    f"boundary tag {tag!r}: no boundary face with nodes {key}")
            if f in fault_faces:
                raise MeshFormatError(
                    f"boundary tag {tag!r}: face {f} lies on a fault")
            ids.append(f)
        out[tag] = np.asarray(sorted(ids), dtype=np.int64)
    matrix.boundary_tags = out


# ---------------------------------------------------------------------------
# mortar interfaces

def build_interfaces(mesh: MixedDimMesh) -> MixedDimMesh:
    """(Re)compute mortar projections from current geometry.

    Projection weights are piecewise-constant L2 projections weighted by
    overlap measure between fault cells and matrix face chains; rows sum
    to one.  Non-conforming (slid) traces are allowed.
    """
    couplings = []
    for fid in sorted(mesh.faults):
        sub = mesh.faults[fid]
        tr = mesh.fault_traces[fid]
        for side, face_ids in ((+1, tr.plus_faces), (-1, tr.minus_faces)):
            overlap = _chain_overlap(mesh, sub, tr, face_ids)
            lengths = sub.cell_measures
            total = overlap.sum(axis=1)
            bad = np.flatnonzero(np.abs(total - lengths) > 1e-9 * lengths)
            if bad.size:
                raise GeometryError(
                    f"fault {fid} side {side:+d}: cell {int(bad[0])} overlap "
                    f"{total[bad[0]]:.3e} != measure {lengths[bad[0]]:.3e}")
            zero = np.flatnonzero(total <= GEOM_TOL)
            if zero.size:
                raise GeometryError(
                    f"fault {fid} side {side:+d}: zero-overlap cell "
                    f"{int(zero[0])}")
            weights = overlap / total[:, None]
            couplings.append(InterfaceCoupling(
                fault_id=fid, side=side, matrix_face_ids=face_ids,
                fault_cell_ids=np.arange(sub.n_cells, dtype=np.int64),
                projection_weights=weights, overlap=overlap))
    mesh.couplings = couplings
    return mesh


def _chain_overlap(mesh, sub, tr, face_ids):
    """Overlap measures between fault cells and one side's matrix faces."""
    t = tr.tangent
    ref = tr.ref_point
    matrix = mesh.matrix

    cell_lo, cell_hi = _axis_intervals(sub.node_coords, sub.cells, t, ref)
    fnodes = matrix.faces[face_ids]
    fsizes = matrix.face_sizes[face_ids]

    if mesh.dim == 2:
        fc = matrix.node_coords[fnodes[:, :2]]
        s = (fc - ref) @ t
        face_lo, face_hi = s.min(axis=1), s.max(axis=1)
        return _interval_overlap(cell_lo, cell_hi, face_lo, face_hi)

    # extruded 3D: rectangles in the (tangent, second tangent) plane
    b = tr.second_tangent
    cell_lo2, cell_hi2 = _axis_intervals(sub.node_coords, sub.cells, b, ref)
    sz = int(fsizes[0])
    fc = matrix.node_coords[fnodes[:, :sz]]
    s = (fc - ref) @ t
    z = (fc - ref) @ b
    ov_t = _interval_overlap(cell_lo, cell_hi, s.min(axis=1), s.max(axis=1))
    ov_z = _interval_overlap(cell_lo2, cell_hi2, z.min(axis=1), z.max(axis=1))
    return ov_t * ov_z


def _axis_intervals(coords, cells, axis, ref):
    s = (coords[cells] - ref) @ axis
    return s.min(axis=1), s.max(axis=1)


def _interval_overlap(alo, ahi, blo, bhi):
    lo = np.maximum(alo[:, None], blo[None, :])
    hi = np.minimum(ahi[:, None], bhi[None, :])
    return np.clip(hi - lo, 0.0, None)


# ---------------------------------------------------------------------------
# extrusion

def extrude(mesh2d: MixedDimMesh, layers: int, height: float) -> MixedDimMesh:
    """Extrude a 2D triangular mixed-dim mesh into prisms along z."""
    if layers < 1:
        raise ValueError("layers must be a positive integer")
    if not height > 0:
        raise ValueError("height must be positive")
    if mesh2d.dim != 2:
        raise MeshFormatError("extrude requires a 2D mesh")
    if mesh2d.intersections:
        raise MeshFormatError("extrude does not support intersections")
    if mesh2d.matrix.cells.shape[1] != 3:
        raise MeshFormatError("extrude requires a triangular matrix mesh")

    m2 = mesh2d.matrix
    n2 = len(m2.node_coords)
    dz = height / layers
    zs = np.arange(layers + 1) * dz
    coords = np.concatenate([
        np.column_stack([m2.node_coords, np.full(n2, z)]) for z in zs])

    def nid(node, k):
        return node + k * n2

    prisms = []
    for k in range(layers):
        base = m2.cells + k * n2
        top = m2.cells + (k + 1) * n2
        prisms.append(np.concatenate([base, top], axis=1))
    cells = np.concatenate(prisms, axis=0)
    matrix = build_subdomain(3, coords, cells)
    if m2.cell_regions is not None:
        matrix.cell_regions = np.tile(m2.cell_regions, layers)

    faults = {}
    traces = {}
    node_side = {}
    for fid, tr in mesh2d.fault_traces.items():
        sub2 = mesh2d.faults[fid]
        chain = tr.chain_nodes
        fcoords = np.concatenate([
            np.column_stack([sub2.node_coords, np.full(len(chain), z)])
            for z in zs])
        nseg = len(chain) - 1
        quads = []
        for k in range(layers):
            a = np.arange(nseg) + k * len(chain)
            b = a + 1
            quads.append(np.stack([a, b, b + len(chain), a + len(chain)],
                                  axis=1))
        fsub = build_subdomain(2, fcoords, np.concatenate(quads, axis=0))

        normal3 = np.array([tr.normal[0], tr.normal[1], 0.0])
        tangent3 = np.array([tr.tangent[0], tr.tangent[1], 0.0])
        ref3 = np.array([tr.ref_point[0], tr.ref_point[1], 0.0])
        plus, minus = _extruded_chain_faces(matrix, m2, tr, n2, layers, nid)
        traces[fid] = FaultTrace(
            fault_id=fid, normal=normal3, tangent=tangent3,
            second_tangent=np.array([0.0, 0.0, 1.0]), ref_point=ref3,
            chain_nodes=chain, side_pairs=tr.side_pairs,
            plus_faces=plus, minus_faces=minus)
        faults[fid] = fsub

        sides = {}
        for node, s in mesh2d.fault_node_side.get(fid, {}).items():
            for k in range(layers + 1):
                sides[nid(node, k)] = s
        node_side[fid] = sides

    mesh = MixedDimMesh(dim=3, matrix=matrix, faults=faults,
                        fault_traces=traces, fault_node_side=node_side,
                        extrusion=(layers, float(height)),
                        document=mesh2d.document)

    # boundary tags: extrude side faces, add bottom/top caps
    by_nodes = {}
    for f in matrix.boundary_faces():
        sz = matrix.face_sizes[f]
        by_nodes[tuple(sorted(matrix.faces[f, :sz].tolist()))] = int(f)
    tags = {}
    for tag, fids2 in m2.boundary_tags.items():
        ids = []
        for f2 in fids2:
            a, b = m2.faces[f2, :2]
            for k in range(layers):
                key = tuple(sorted((nid(a, k), nid(b, k),
                                    nid(a, k + 1), nid(b, k + 1))))
                ids.append(by_nodes[key])
        tags[tag] = np.asarray(sorted(ids), dtype=np.int64)
    caps = {"zmin": [], "zmax": []}
    for c2 in range(m2.n_cells):
        tri = m2.cells[c2]
        caps["zmin"].append(by_nodes[tuple(sorted(nid(n, 0) for n in tri))])
        caps["zmax"].append(by_nodes[tuple(sorted(nid(n, layers) for n in tri))])
    for tag, ids in caps.items():
        tags[tag] = np.asarray(sorted(ids), dtype=np.int64)
    matrix.boundary_tags = tags

    build_interfaces(mesh)
    mesh.dof_layout = _build_dof_layout(mesh)
    return mesh


def _extruded_chain_faces(matrix, m2, tr, n2, layers, nid):
    by_nodes = {}
    for f in matrix.boundary_faces():
        sz = matrix.face_sizes[f]
        by_nodes[tuple(sorted(matrix.faces[f, :sz].tolist()))] = int(f)

    out = []
    for faces2 in (tr.plus_faces, tr.minus_faces):
        ids = []
        for k in range(layers):
            for f2 in faces2:
                a, b = m2.faces[f2, :2]
                key = tuple(sorted((nid(a, k), nid(b, k),
                                    nid(a, k + 1), nid(b, k + 1))))
                ids.append(by_nodes[key])
        out.append(np.asarray(ids, dtype=np.int64))
    return out


# ---------------------------------------------------------------------------
# generators (rectangular domains, optionally with one straight fault)

def rectangle_document(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0,
                       kind: str = "quad") -> dict:
    """Plain rectangular mesh document with edge tags left/right/bottom/top."""
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    nid = lambda i, j: j * (nx + 1) + i
    nodes = [[float(xs[i]), float(ys[j])]
             for j in range(ny + 1) for i in range(nx + 1)]
    cells = []
    for j in range(ny):
        for i in range(nx):
            q = [nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]
            if kind == "quad":
                cells.append(q)
            else:
                cells.append([q[0], q[1], q[2]])
                cells.append([q[0], q[2], q[3]])
    tags = {
        "bottom": [[nid(i, 0), nid(i + 1, 0)] for i in range(nx)],
        "top": [[nid(i, ny), nid(i + 1, ny)] for i in range(nx)],
        "left": [[nid(0, j), nid(0, j + 1)] for j in range(ny)],
        "right": [[nid(nx, j), nid(nx, j + 1)] for j in range(ny)],
    }
    return {"dim": 2, "nodes": nodes, "cells": cells, "fault_polylines": [],
            "intersections": [], "boundary_tags": tags}


def faulted_rectangle_document(nx_left: int, nx_right: int, y_rows,
                               fault_x_bottom: float, fault_x_top: float,
                               fault_id: int = 1, pin_corner: bool = True):
    """Unit-square mesh split by one straight fault from bottom to top.

    Returns (document, groups); groups carries the node/cell bookkeeping the
    case definitions need (fault sides, row ids, corner cells).
    """
    ys = np.asarray(y_rows, dtype=float)
    if ys[0] != 0.0 or ys[-1] != 1.0 or np.any(np.diff(ys) <= 0):
        raise ValueError("y_rows must increase from 0 to 1")
    nrow = len(ys)
    xf = fault_x_bottom + (fault_x_top - fault_x_bottom) * ys

    nL, nR = nx_left + 1, nx_right + 1
    nodes = []
    # duplicate fault nodes must be bit-identical: emit xf[j] verbatim
    for j in range(nrow):
        for i in range(nL):
            x = float(xf[j]) if i == nx_left else float(xf[j] * i / nx_left)
            nodes.append([x, float(ys[j])])
    n_left = len(nodes)
    for j in range(nrow):
        for i in range(nR):
            if i == 0:
                x = float(xf[j])
            elif i == nx_right:
                x = 1.0
            else:
                x = float(xf[j] + (1.0 - xf[j]) * i / nx_right)
            nodes.append([x, float(ys[j])])

    idL = lambda i, j: j * nL + i
    idR = lambda i, j: n_left + j * nR + i

    cells = []

    def emit_block(idx, ncol):
        for j in range(nrow - 1):
            for i in range(ncol):
                a, b = idx(i, j), idx(i + 1, j)
                c, d = idx(i + 1, j + 1), idx(i, j + 1)
                cells.append([a, b, c])
                cells.append([a, c, d])

    emit_block(idL, nx_left)
    emit_block(idR, nx_right)

    chain = [idL(nx_left, j) for j in range(nrow)]
    pairs = [[idL(nx_left, j), idR(0, j)] for j in range(nrow)]

    tags = {
        "bottom": [[idL(i, 0), idL(i + 1, 0)] for i in range(nx_left)]
        + [[idR(i, 0), idR(i + 1, 0)] for i in range(nx_right)],
        "top": [[idL(i, nrow - 1), idL(i + 1, nrow - 1)] for i in range(nx_left)]
        + [[idR(i, nrow - 1), idR(i + 1, nrow - 1)] for i in range(nx_right)],
        "left": [[idL(0, j), idL(0, j + 1)] for j in range(nrow - 1)],
        "right": [[idR(nx_right, j), idR(nx_right, j + 1)]
                  for j in range(nrow - 1)],
    }
    if pin_corner:
        tags["pin"] = [tags["bottom"].pop(0), tags["left"].pop(0)]

    doc = {"dim": 2, "nodes": nodes, "cells": cells,
           "fault_polylines": [{"id": fault_id, "nodes": chain,
                                "side_pairs": pairs}],
           "intersections": [], "boundary_tags": tags}

    left_cell0 = 0                      # triangle (idL(0,0), idL(1,0), ...)
    n_left_cells = 2 * nx_left * (nrow - 1)
    top_right_cell = n_left_cells + 2 * nx_right * (nrow - 1) - 1
    groups = {
        "fault_id": fault_id,
        "y_rows": ys.tolist(),
        "fault_nodes_left": chain,
        "fault_nodes_right": [p[1] for p in pairs],
        "left_row_nodes": {j: [idL(i, j) for i in range(nL)]
                           for j in range(nrow)},
        "right_row_nodes": {j: [idR(i, j) for i in range(nR)]
                            for j in range(nrow)},
        "corners": [idL(0, 0), idR(nx_right, 0), idL(0, nrow - 1),
                    idR(nx_right, nrow - 1)],
        "injection_cell": left_cell0,
        "production_cell": top_right_cell,
        "n_left_cells": n_left_cells,
    }
    return doc, groups


def fracture_lattice_document(n: int, polylines: list, intersections: list,
                              diag: str = "ne") -> dict:
    """Triangulated n-by-n lattice on the unit square with fracture slits.

    Each polyline is {"id": int, "points": [(i, j) lattice coords]} with
    consecutive points one lattice edge apart (horizontal, vertical or
    along the lattice diagonal).  Nodes interior to a slit are duplicated
    per connectivity component of the surrounding cell fan, which handles
    tips, crossings and T-junctions uniformly.  `intersections` lists
    {"point": (i, j), "branches": [fault ids]}.
    """
    if diag != "ne":
        raise ValueError("only the north-east lattice diagonal is supported")
    base_id = lambda i, j: j * (n + 1) + i
    coords = [[i / n, j / n] for j in range(n + 1) for i in range(n + 1)]

    tris = []
    for j in range(n):
        for i in range(n):
            a, b = base_id(i, j), base_id(i + 1, j)
            c, d = base_id(i + 1, j + 1), base_id(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    tris = np.asarray(tris, dtype=np.int64)

    def check_step(p, q):
        di, dj = q[0] - p[0], q[1] - p[1]
        if (di, dj) not in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)):
            raise ValueError(f"polyline step {p}->{q} is not a lattice edge")

    slit_edges = set()
    chains = {}
    for line in polylines:
        pts = line["points"]
        ids = [base_id(i, j) for i, j in pts]
        for p, q in zip(pts[:-1], pts[1:]):
            check_step(p, q)
        for a, b in zip(ids[:-1], ids[1:]):
            slit_edges.add(tuple(sorted((a, b))))
        chains[int(line["id"])] = ids

    # cells incident to each slit node
    incident = {}
    slit_nodes = set(v for e in slit_edges for v in e)
    for c, tri in enumerate(tris):
        for v in tri:
            if int(v) in slit_nodes:
                incident.setdefault(int(v), []).append(c)

    cells = tris.copy()
    new_coords = list(coords)
    replacements = {}   # node -> list of (component cell set, new id)
    for v, cs in incident.items():
        # components of the cell fan around v, cut along slit edges
        adj = {c: set() for c in cs}
        edge_cells = {}
        for c in cs:
            tri = tris[c]
            for w in tri:
                w = int(w)
                if w == v:
                    continue
                e = tuple(sorted((v, w)))
                if e in slit_edges:
                    continue
                edge_cells.setdefault(e, []).append(c)
        for e, cc in edge_cells.items():
            if len(cc) == 2:
                adj[cc[0]].add(cc[1])
                adj[cc[1]].add(cc[0])
        comps = []
        todo = set(cs)
        while todo:
            stack = [todo.pop()]
            comp = {stack[0]}
            while stack:
                c = stack.pop()
                for d in adj[c]:
                    if d not in comp:
                        comp.add(d)
                        todo.discard(d)
                        stack.append(d)
            comps.append(comp)
        if len(comps) == 1:
            continue
        reps = []
        for k, comp in enumerate(sorted(comps, key=min)):
            if k == 0:
                reps.append((comp, v))
                continue
            nid_new = len(new_coords)
            new_coords.append(list(coords[v]))
            reps.append((comp, nid_new))
            for c in comp:
                for t in range(3):
                    if cells[c, t] == v:
                        cells[c, t] = nid_new
        replacements[v] = reps

    def copies_of(v):
        return [nid for _c, nid in replacements.get(v, [({}, v)])]

    polylines_doc = []
    for line in polylines:
        fid = int(line["id"])
        ids = chains[fid]
        side_pairs = []
        seen = set()
        # pair the two copies facing each other across each slit segment
        for a, b in zip(ids[:-1], ids[1:]):
            for v, w in ((a, b), (b, a)):
                cps = copies_of(v)
                if len(cps) < 2:
                    continue
                wset = set(copies_of(w))
                touching = set()
                for c in incident.get(v, []):
                    tri = set(int(x) for x in cells[c])
                    hit = tri & set(cps)
                    if hit and tri & wset:
                        touching.update(hit)
                pair = tuple(sorted(touching))
                if len(pair) == 2 and pair not in seen:
                    seen.add(pair)
                    side_pairs.append(list(pair))
        polylines_doc.append({"id": fid, "nodes": ids,
                              "side_pairs": side_pairs})

    isec_doc = [{"node": base_id(*spec["point"]),
                 "branches": [int(f) for f in spec["branches"]]}
                for spec in intersections]

    nb = lambda i, j: base_id(i, j)
    tags = {
        "bottom": [[nb(i, 0), nb(i + 1, 0)] for i in range(n)],
        "top": [[nb(i, n), nb(i + 1, n)] for i in range(n)],
        "left": [[nb(0, j), nb(0, j + 1)] for j in range(n)],
        "right": [[nb(n, j), nb(n, j + 1)] for j in range(n)],
    }
    # slit duplication may have replaced boundary nodes inside boundary faces;
    # remap each tagged pair onto the copy actually used by boundary cells
    doc_cells = cells.tolist()
    face_nodes = set()
    tmp = build_subdomain(2, np.asarray(new_coords), cells)
    for f in tmp.boundary_faces():
        face_nodes.add(tuple(sorted(tmp.faces[f, :2].tolist())))
    for tag, pairs in tags.items():
        fixed = []
        for a, b in pairs:
            if tuple(sorted((a, b))) in face_nodes:
                fixed.append([a, b])
                continue
            match = [(x, y) for x in copies_of(a) for y in copies_of(b)
                     if tuple(sorted((x, y))) in face_nodes]
            fixed.extend([list(m) for m in match])
        tags[tag] = fixed

    return {"dim": 2, "nodes": new_coords, "cells": doc_cells,
            "fault_polylines": polylines_doc, "intersections": isec_doc,
            "boundary_tags": tags}


def assign_regions(mesh: MixedDimMesh, region_of_center) -> None:
    """Assign matrix cell regions from a vectorized centroid predicate."""
    mesh.matrix.cell_regions = np.asarray(
        region_of_center(mesh.matrix.cell_centers), dtype=np.int64)
