"""Radial-basis-function mesh morphing with sliding constraints.

Control points either prescribe a displacement (affine in the geometric
parameters) or slide on a surface.  Points on the fault exist in
coincident pairs, one per side; an influence function hides each pair
member from the opposite side so the two faces can slide independently
without making the interpolation matrix singular.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, GeometryError, NumericalError
from . import meshkit

KERNEL_SCALE = 0.2
REGULARIZATION = 1e-12
COND_LIMIT = 1e14

SET_TAGS = ("C_d", "C_df", "C_s", "C_sf")


@dataclass
class SlidingSurface:
    id: int
    normal: np.ndarray
    tangents: np.ndarray        # (D-1, D) unit tangents
    ref_point: np.ndarray
    is_fault: bool = False

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        self.tangents = np.atleast_2d(np.asarray(self.tangents, dtype=float))
        self.ref_point = np.asarray(self.ref_point, dtype=float)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ConfigError(f"surface {self.id}: normal is not unit")
        for t in self.tangents:
            if abs(np.linalg.norm(t) - 1.0) > 1e-12:
                raise ConfigError(f"surface {self.id}: tangent is not unit")
            if abs(t @ self.normal) > 1e-12:
                raise ConfigError(
                    f"surface {self.id}: tangent not orthogonal to normal")
        if len(self.tangents) == 2:
            if abs(self.tangents[0] @ self.tangents[1]) > 1e-12:
                raise ConfigError(f"surface {self.id}: tangents not orthogonal")


@dataclass
class ControlPoint:
    position: np.ndarray
    set_tag: str
    displacement: np.ndarray = None   # (D, 1+n_geom): s = disp @ [1, mu...]
    surface_id: int = None
    side_flag: int = None             # 0/1 topological side for fault points

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.set_tag not in SET_TAGS:
            raise ConfigError(f"unclassified control point tag {self.set_tag!r}")
        if self.set_tag in ("C_d", "C_df"):
            if self.displacement is None or self.surface_id is not None:
                raise ConfigError(
                    f"{self.set_tag} point needs a prescribed displacement")
            self.displacement = np.atleast_2d(
                np.asarray(self.displacement, dtype=float))
        else:
            if self.surface_id is None or self.displacement is not None:
                raise ConfigError(f"{self.set_tag} point needs a surface id")
        if self.on_fault and self.side_flag not in (0, 1):
            raise ConfigError("fault control points need side_flag 0 or 1")

    @property
    def on_fault(self) -> bool:
        return self.set_tag in ("C_df", "C_sf")

    @property
    def prescribed(self) -> bool:
        return self.set_tag in ("C_d", "C_df")

    def displacement_at(self, mu_geom) -> np.ndarray:
        mu_geom = np.atleast_1d(np.asarray(mu_geom, dtype=float))
        vec = np.concatenate([[1.0], mu_geom])
        k = self.displacement.shape[1]
        if k > len(vec):
            raise ConfigError(
                f"displacement expects {k - 1} geometric parameters, "
                f"got {len(mu_geom)}")
        return self.displacement @ vec[:k]


@dataclass
class RbfSystem:
    system_matrix: np.ndarray
    rhs: np.ndarray
    controls: list
    surfaces: list
    row_blocks: dict            # row-index bookkeeping for diagnostics


def rbf_kernel(d):
    """Linear kernel d / 0.2."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("kernel distance must be nonnegative")
    return d / KERNEL_SCALE


def side(x, surface: SlidingSurface):
    """Side function: 1 on the normal side, 0 opposite, 0.5 on the plane."""
    x = np.asarray(x, dtype=float)
    s = np.sign((x - surface.ref_point) @ surface.normal)
    return (s + 1.0) / 2.0


def nxor(a, b):
    return 1.0 - np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def influence(x, cp: ControlPoint, fault: SlidingSurface | None,
              x_on_internal_boundary: bool, x_side: float | None = None):
    """Weight in [0, 1] hiding fault control points from the opposite side.

    Displacement/sliding points off the fault influence everything.  Fault
    points see only their own side: plainly on the interior boundary, with
    a distance-to-plane scaling elsewhere so the weight vanishes
    continuously at the fault.  Side values of points on the fault come
    from the stored topological flag, never from coordinates.
    """
    if cp.set_tag not in SET_TAGS:
        raise ConfigError(f"unclassified control point tag {cp.set_tag!r}")
    if not cp.on_fault:
        return 1.0
    if fault is None:
        raise ConfigError("fault control point without a fault surface")
    x = np.asarray(x, dtype=float)
    bx = side(x, fault) if x_side is None else float(x_side)
    bc = float(cp.side_flag)
    if x_on_internal_boundary:
        return nxor(bx, bc)
    r = x - fault.ref_point
    nr = np.linalg.norm(r)
    scale = 0.0 if nr < 1e-300 else abs(r @ fault.normal) / nr
    return scale * nxor(bx, bc)


def _fault_surface(surfaces) -> SlidingSurface | None:
    faults = [s for s in surfaces if s.is_fault]
    if len(faults) > 1:
        raise ConfigError("at most one sliding fault surface is supported")
    return faults[0] if faults else None


def _influence_matrix(points, on_fault, sides, controls, fault):
    """Vectorized influence weights, shape (n_points, n_controls)."""
    n, l = len(points), len(controls)
    w = np.ones((n, l))
    fmask = np.array([c.on_fault for c in controls])
    if not fmask.any():
        return w
    if fault is None:
        raise ConfigError("fault control points without a fault surface")
    cp_sides = np.array([c.side_flag if c.on_fault else 0 for c in controls],
                        dtype=float)
    bx = np.where(np.isnan(sides),
                  (np.sign((points - fault.ref_point) @ fault.normal) + 1) / 2,
                  sides)
    nx = 1.0 - np.abs(bx[:, None] - cp_sides[None, :])
    r = points - fault.ref_point
    nr = np.linalg.norm(r, axis=1)
    safe = np.where(nr < 1e-300, 1.0, nr)
    scale = np.where(nr < 1e-300, 0.0, np.abs(r @ fault.normal) / safe)
    factor = np.where(on_fault[:, None], nx, scale[:, None] * nx)
    w[:, fmask] = factor[:, fmask]
    return w


def _kernel_block(points, on_fault, sides, controls, fault):
    cpos = np.stack([c.position for c in controls])
    d = np.linalg.norm(points[:, None, :] - cpos[None, :, :], axis=2)
    return _influence_matrix(points, on_fault, sides, controls, fault) \
        * rbf_kernel(d)


def assemble_system(controls, surfaces, mu_geom) -> RbfSystem:
    """Build the square constrained interpolation system.

    Unknowns are the coefficient components, column (m*l + j) holding
    component m of point j.  Prescribed points contribute one
    displacement-interpolation row per component at the matching row
    index; sliding points contribute a non-penetration row in the first
    component slot and no-tangential-coefficient rows in the remaining
    slots.  This pairing lets the Tikhonov term sit on the diagonal.
    """
    if not controls:
        raise ConfigError("no control points")
    D = len(controls[0].position)
    l = len(controls)
    fault = _fault_surface(surfaces)
    surf_by_id = {s.id: s for s in surfaces}

    pts = np.stack([c.position for c in controls])
    onf = np.array([c.on_fault for c in controls])
    sides = np.array([float(c.side_flag) if c.on_fault else np.nan
                      for c in controls])
    G = _kernel_block(pts, onf, sides, controls, fault)

    A = np.zeros((D * l, D * l))
    rhs = np.zeros(D * l)
    row_blocks = {"displacement": [], "non_penetration": [], "tangential": []}

    for i, c in enumerate(controls):
        if c.prescribed:
            sbar = c.displacement_at(mu_geom)
            for m in range(D):
                A[m * l + i, m * l:(m + 1) * l] = G[i]
                rhs[m * l + i] = sbar[m]
                row_blocks["displacement"].append(m * l + i)
        else:
            surf = surf_by_id.get(c.surface_id)
            if surf is None:
                raise ConfigError(
                    f"control point references unknown surface {c.surface_id}")
            for m in range(D):
                A[i, m * l:(m + 1) * l] = G[i] * surf.normal[m]
            row_blocks["non_penetration"].append(i)
            for k, t in enumerate(surf.tangents):
                for m in range(D):
                    A[(k + 1) * l + i, m * l + i] = t[m]
                row_blocks["tangential"].append((k + 1) * l + i)

    if not (row_blocks["displacement"] or row_blocks["non_penetration"]):
        raise ConfigError("system has no constraint rows")
    A[np.diag_indices_from(A)] += REGULARIZATION

    return RbfSystem(system_matrix=A, rhs=rhs, controls=list(controls),
                     surfaces=list(surfaces), row_blocks=row_blocks)


def solve_system(system: RbfSystem) -> np.ndarray:
    """Solve for the coefficient matrix zeta of shape (l, D)."""
    A = system.system_matrix
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(
            f"deformation system singular beyond regularization "
            f"(condition estimate {cond:.3e})")
    z = scipy.linalg.solve(A, system.rhs)
    l = len(system.controls)
    D = len(system.controls[0].position)
    return z.reshape(l, D, order="F")  # z stacks [z_x, z_y(, z_z)]


def evaluate_displacement(points, zeta, controls, surfaces,
                          on_fault=None, sides=None, control_index=None):
    """Displacement field at arbitrary points.

    `control_index[i] = j` marks evaluation point i as control point j; its
    row then reuses the regularized system row so prescribed data is
    reproduced exactly.
    """
    points = np.asarray(points, dtype=float)
    fault = _fault_surface(surfaces)
    n = len(points)
    if on_fault is None:
        on_fault = np.zeros(n, dtype=bool)
    if sides is None:
        sides = np.full(n, np.nan)
    E = _kernel_block(points, on_fault, sides, controls, fault)
    s = E @ zeta
    if control_index is not None:
        hit = np.flatnonzero(control_index >= 0)
        s[hit] += REGULARIZATION * zeta[control_index[hit]]
    return s


def displace(mesh: meshkit.MixedDimMesh, zeta, controls, surfaces
             ) -> meshkit.MixedDimMesh:
    """Apply the solved displacement field; returns a fresh mesh.

    Matrix nodes on the sliding fault use their stored topological side.
    The sliding fault's own lower-dimensional grid stays fixed (the
    surface is invariant); other fault grids follow the field.
    """
    fault = _fault_surface(surfaces)
    matrix = mesh.matrix
    n = len(matrix.node_coords)

    on_fault = np.zeros(n, dtype=bool)
    sides = np.full(n, np.nan)
    if fault is not None and fault.id in mesh.fault_node_side:
        for node, s in mesh.fault_node_side[fault.id].items():
            on_fault[node] = True
            sides[node] = float(s)

    control_index = _match_controls(matrix.node_coords, on_fault, sides,
                                    controls)
    disp = evaluate_displacement(matrix.node_coords, zeta, controls, surfaces,
                                 on_fault, sides, control_index)

    new_matrix = meshkit.Subdomain(
        dim=matrix.dim, node_coords=matrix.node_coords + disp,
        cells=matrix.cells, faces=matrix.faces, face_sizes=matrix.face_sizes,
        face_cells=matrix.face_cells, boundary_tags=matrix.boundary_tags,
        cell_regions=matrix.cell_regions)
    try:
        meshkit.recompute_geometry(new_matrix)
    except GeometryError as exc:
        raise GeometryError(f"deformation inverted a cell: {exc}") from exc

    new_faults = {}
    for fid, sub in mesh.faults.items():
        if fault is not None and fid == fault.id:
            new_faults[fid] = sub
            continue
        fdisp = evaluate_displacement(
            sub.node_coords, zeta, controls, surfaces,
            control_index=_match_controls(
                sub.node_coords, np.zeros(len(sub.node_coords), dtype=bool),
                np.full(len(sub.node_coords), np.nan), controls))
        moved = meshkit.Subdomain(
            dim=sub.dim, node_coords=sub.node_coords + fdisp, cells=sub.cells,
            faces=sub.faces, face_sizes=sub.face_sizes,
            face_cells=sub.face_cells)
        meshkit.recompute_geometry(moved)
        new_faults[fid] = moved

    out = meshkit.MixedDimMesh(
        dim=mesh.dim, matrix=new_matrix, faults=new_faults,
        fault_traces=mesh.fault_traces, intersections=[],
        fault_node_side=mesh.fault_node_side,
        fault_excluded_faces=mesh.fault_excluded_faces,
        dof_layout=mesh.dof_layout, extrusion=mesh.extrusion,
        document=mesh.document)
    for isec in mesh.intersections:
        fid, cell = isec.branches[0]
        sub = new_faults[fid]
        candidates = sub.node_coords[sub.cells[cell]]
        dist = np.linalg.norm(candidates - isec.point, axis=1)
        point = candidates[np.argmin(dist)]
        tangents = []
        for bfid, bcell in isec.branches:
            bc = new_faults[bfid].cell_centers[bcell]
            tangents.append(point - bc)
        out.intersections.append(meshkit.Intersection(
            point=point.copy(), node=isec.node, branches=isec.branches,
            tangents=np.stack([t / np.linalg.norm(t) for t in tangents])))
    meshkit.build_interfaces(out)
    return out


def _match_controls(points, on_fault, sides, controls):
    """Index of the control point each evaluation point coincides with."""
    table = {}
    for j, c in enumerate(controls):
        key = (c.position.tobytes(), c.on_fault,
               float(c.side_flag) if c.on_fault else None)
        table[key] = j
    idx = np.full(len(points), -1, dtype=np.int64)
    if not table:
        return idx
    for i in range(len(points)):
        key = (points[i].tobytes(), bool(on_fault[i]),
               sides[i] if on_fault[i] else None)
        j = table.get(key)
        if j is not None:
            idx[i] = j
    return idx


class DeformOperator:
    """Prefactorized deformation pipeline for repeated geometry queries.

    The kernel matrix depends only on the reference configuration, so the
    constrained system is factorized once; each query solves for the
    coefficients from the affine right-hand side and moves the nodes.
    """

    def __init__(self, mesh: meshkit.MixedDimMesh, controls, surfaces):
        self.mesh = mesh
        self.controls = list(controls)
        self.surfaces = list(surfaces)
        n_geom = max((c.displacement.shape[1] - 1 for c in self.controls
                      if c.prescribed), default=0)
        self.n_geom = n_geom
        sys0 = assemble_system(self.controls, self.surfaces,
                               np.zeros(n_geom))
        cond = np.linalg.cond(sys0.system_matrix)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise NumericalError(
                f"deformation system singular beyond regularization "
                f"(condition estimate {cond:.3e})")
        self._lu = scipy.linalg.lu_factor(sys0.system_matrix)
        self._rhs0 = sys0.rhs.copy()
        cols = []
        for k in range(n_geom):
            e = np.zeros(n_geom)
            e[k] = 1.0
            sysk = assemble_system(self.controls, self.surfaces, e)
            cols.append(sysk.rhs - self._rhs0)
        self._rhs_jac = np.stack(cols, axis=1) if cols else \
            np.zeros((len(self._rhs0), 0))

    def solve_coefficients(self, mu_geom) -> np.ndarray:
        mu_geom = np.atleast_1d(np.asarray(mu_geom, dtype=float))
        if len(mu_geom) != self.n_geom:
            raise ConfigError(
                f"expected {self.n_geom} geometric parameters, got "
                f"{len(mu_geom)}")
        rhs = self._rhs0 + self._rhs_jac @ mu_geom
        z = scipy.linalg.lu_solve(self._lu, rhs)
        l = len(self.controls)
        D = len(self.controls[0].position)
        return z.reshape(l, D, order="F")

    def __call__(self, mu_geom) -> meshkit.MixedDimMesh:
        zeta = self.solve_coefficients(mu_geom)
        return displace(self.mesh, zeta, self.controls, self.surfaces)


# ---------------------------------------------------------------------------
# configuration files

def config_to_dict(controls, surfaces) -> dict:
    ctl = []
    for c in controls:
        entry = {"pos": c.position.tolist(), "set": c.set_tag}
        if c.prescribed:
            entry["displacement_expr"] = c.displacement.tolist()
        else:
            entry["surface"] = c.surface_id
        if c.side_flag is not None:
            entry["side"] = int(c.side_flag)
        ctl.append(entry)
    surf = [{"id": s.id, "normal": s.normal.tolist(),
             "tangents": s.tangents.tolist(),
             "ref_point": s.ref_point.tolist(), "is_fault": s.is_fault}
            for s in surfaces]
    return {"controls": ctl, "surfaces": surf}


def config_from_dict(doc: dict):
    controls = []
    for entry in doc["controls"]:
        controls.append(ControlPoint(
            position=np.asarray(entry["pos"], dtype=float),
            set_tag=entry["set"],
            displacement=entry.get("displacement_expr"),
            surface_id=entry.get("surface"),
            side_flag=entry.get("side")))
    surfaces = [SlidingSurface(
        id=int(s["id"]), normal=s["normal"], tangents=s["tangents"],
        ref_point=s["ref_point"], is_fault=bool(s.get("is_fault", False)))
        for s in doc["surfaces"]]
    return controls, surfaces


def save_config(controls, surfaces, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(controls, surfaces), fh)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))
