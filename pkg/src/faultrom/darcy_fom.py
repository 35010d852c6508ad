"""Cell-centered finite-volume solver for mixed-dimensional Darcy flow.

Fluxes use a two-point approximation with harmonic averaging of the
center-to-face resistances.  Faults couple to the matrix through mortar
exchange fluxes; intersections couple fault branches through a
codimension-2 balance.  The assembled system has the saddle-point block
structure [[A, B1], [B2, -C]] acting on [pressure, fault pressure,
interface flux].
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericalError
from .meshkit import MixedDimMesh

RESIDUAL_RTOL = 1e-9


@dataclass
class PhysicalParams:
    """Permeabilities (scaled by viscosity), aperture and source data.

    `matrix_perm` maps region id to permeability; fault properties accept
    either a scalar or a per-fault-id dict.  `point_rates` are integrated
    source rates attached to single cells (injection/production).
    """

    matrix_perm: dict
    k_tau: float | dict = 1.0
    k_n: float | dict = 1.0
    aperture: float | dict = 1e-3
    k_intersection: float | dict = 1.0
    source: float | np.ndarray = 0.0
    fault_source: float | dict = 0.0
    point_rates: tuple = ()
    intersection_eps_power: int = 2

    def __post_init__(self):
        for r, k in self.matrix_perm.items():
            if not k > 0:
                raise ConfigError(f"matrix permeability for region {r} "
                                  f"must be positive, got {k}")
        for name in ("k_tau", "k_n", "aperture", "k_intersection"):
            val = getattr(self, name)
            vals = val.values() if isinstance(val, dict) else [val]
            if any(not v > 0 for v in vals):
                raise ConfigError(f"{name} must be positive")
        if self.intersection_eps_power not in (1, 2):
            raise ConfigError("intersection_eps_power must be 1 or 2")

    def fault_value(self, name: str, fault_id: int) -> float:
        val = getattr(self, name)
        return float(val[fault_id]) if isinstance(val, dict) else float(val)

    def cell_permeability(self, mesh: MixedDimMesh) -> np.ndarray:
        regions = mesh.matrix.cell_regions
        if regions is None:
            if len(self.matrix_perm) != 1:
                raise ConfigError("mesh has no regions but several "
                                  "permeabilities were given")
            k = next(iter(self.matrix_perm.values()))
            return np.full(mesh.matrix.n_cells, float(k))
        out = np.empty(mesh.matrix.n_cells)
        out.fill(np.nan)
        for r, k in self.matrix_perm.items():
            out[regions == int(r)] = float(k)
        if np.isnan(out).any():
            missing = np.unique(regions[np.isnan(out)])
            raise ConfigError(f"no permeability for regions {missing.tolist()}")
        return out


@dataclass
class BoundaryConditions:
    """Per-tag Dirichlet pressures and Neumann outward fluxes.

    Values are scalars or callables of the face-center coordinates.
    `fault_tips` maps fault id to a list of (chain_end, value) pairs with
    chain_end 0 or -1; tips without an entry are no-flow.
    """

    dirichlet: dict = field(default_factory=dict)
    neumann: dict = field(default_factory=dict)
    fault_tips: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)   # informational parameters
    allow_pure_neumann: bool = False

    def validate(self, mesh: MixedDimMesh) -> None:
        tags = mesh.matrix.boundary_tags
        fault_faces = set()
        for tr in mesh.fault_traces.values():
            fault_faces.update(tr.plus_faces.tolist())
            fault_faces.update(tr.minus_faces.tolist())
        covered = np.zeros(mesh.matrix.n_faces, dtype=int)
        for tag in list(self.dirichlet) + list(self.neumann):
            if tag not in tags:
                raise ConfigError(f"boundary condition for unknown tag {tag!r}")
            covered[tags[tag]] += 1
        for f in mesh.matrix.boundary_faces():
            if f in fault_faces:
                continue
            if covered[f] != 1:
                raise ConfigError(
                    f"boundary face {int(f)} has {covered[f]} conditions "
                    f"(exactly one required)")
        if not self.dirichlet and not self.fault_tips \
                and not self.allow_pure_neumann:
            raise ConfigError("no Dirichlet data and pure-Neumann solves "
                              "not explicitly allowed")

    @staticmethod
    def value_on(value, centers: np.ndarray) -> np.ndarray:
        if callable(value):
            return np.asarray(value(centers), dtype=float)
        return np.full(len(centers), float(value))


@dataclass
class FomSystem:
    A_p: sps.csr_matrix
    A_pgamma: sps.csr_matrix
    B1: sps.csr_matrix
    B2: sps.csr_matrix
    C: sps.csr_matrix
    b: np.ndarray
    dof_layout: object

    @property
    def A_N(self) -> sps.csr_matrix:
        lay = self.dof_layout
        n_hat = lay.n_pressure + lay.n_fault_pressure
        A = sps.block_diag([self.A_p, self.A_pgamma], format="csr")
        A = sps.bmat([[A, self.B1], [self.B2, -self.C]], format="csr")
        return A

    @property
    def b_N(self) -> np.ndarray:
        return self.b


@dataclass
class FomSolution:
    u: np.ndarray
    residual: float
    mu: np.ndarray = None

    def block(self, mesh_or_layout, name: str) -> np.ndarray:
        lay = getattr(mesh_or_layout, "dof_layout", mesh_or_layout)
        sl = dict(zip(lay.block_names, lay.block_slices))[name]
        return self.u[sl]


def transmissibilities(mesh: MixedDimMesh, params: PhysicalParams):
    """Two-point transmissibilities for interior and Dirichlet matrix faces.

    Interior face: measure / (d1/K1 + d2/K2) with di the center-to-face
    distances; boundary face: measure * K / d (half-cell formula).
    Returns (interior_T, boundary_T) indexed by face id (zeros elsewhere).
    """
    m = mesh.matrix
    K = params.cell_permeability(mesh)
    T_int = np.zeros(m.n_faces)
    T_bnd = np.zeros(m.n_faces)

    ifaces = m.interior_faces()
    c0, c1 = m.face_cells[ifaces, 0], m.face_cells[ifaces, 1]
    d0 = np.linalg.norm(m.cell_centers[c0] - m.face_centers[ifaces], axis=1)
    d1 = np.linalg.norm(m.cell_centers[c1] - m.face_centers[ifaces], axis=1)
    if np.any(d0 <= 0) or np.any(d1 <= 0):
        raise ConfigError("zero center-to-face distance")
    T_int[ifaces] = m.face_measures[ifaces] / (d0 / K[c0] + d1 / K[c1])

    bfaces = m.boundary_faces()
    cb = m.face_cells[bfaces, 0]
    db = np.linalg.norm(m.cell_centers[cb] - m.face_centers[bfaces], axis=1)
    if np.any(db <= 0):
        raise ConfigError("zero center-to-face distance")
    T_bnd[bfaces] = m.face_measures[bfaces] * K[cb] / db
    return T_int, T_bnd


def _tip_cell(sub, end: int):
    """Cell adjacent to a fault tip (chain end 0 or -1) and the tip point."""
    if sub.dim != 1:
        raise ConfigError("fault tip conditions require a 1D fault grid")
    node = 0 if end == 0 else len(sub.node_coords) - 1
    fidx = np.flatnonzero(sub.faces[:, 0] == node)
    cell = int(sub.face_cells[fidx[0], 0])
    return cell, sub.node_coords[node]


def _fault_transmissibilities(sub, coeff: float, excluded: set):
    """In-plane two-point transmissibilities for one fault subdomain."""
    ifaces = np.array([f for f in sub.interior_faces() if f not in excluded],
                      dtype=np.int64)
    if ifaces.size == 0:
        return ifaces, np.zeros(0)
    c0, c1 = sub.face_cells[ifaces, 0], sub.face_cells[ifaces, 1]
    d0 = np.linalg.norm(sub.cell_centers[c0] - sub.face_centers[ifaces], axis=1)
    d1 = np.linalg.norm(sub.cell_centers[c1] - sub.face_centers[ifaces], axis=1)
    T = sub.face_measures[ifaces] * coeff / (d0 + d1)
    return ifaces, T


def assemble(mesh: MixedDimMesh, params: PhysicalParams,
             bc: BoundaryConditions) -> FomSystem:
    """Assemble the mixed-dimensional system at the current geometry."""
    bc.validate(mesh)
    lay = mesh.dof_layout
    m = mesh.matrix
    n_p, n_fp, n_lam = lay.n_pressure, lay.n_fault_pressure, lay.n_flux
    n_hat = n_p + n_fp
    b = np.zeros(lay.total)

    # --- A_p: matrix fluxes -------------------------------------------------
    T_int, T_bnd = transmissibilities(mesh, params)
    ifaces = m.interior_faces()
    c0, c1 = m.face_cells[ifaces, 0], m.face_cells[ifaces, 1]
    T = T_int[ifaces]
    rows = np.concatenate([c0, c1, c0, c1])
    cols = np.concatenate([c0, c1, c1, c0])
    vals = np.concatenate([T, T, -T, -T])

    for tag, value in bc.dirichlet.items():
        fids = m.boundary_tags[tag]
        pbar = bc.value_on(value, m.face_centers[fids])
        cb = m.face_cells[fids, 0]
        rows = np.concatenate([rows, cb])
        cols = np.concatenate([cols, cb])
        vals = np.concatenate([vals, T_bnd[fids]])
        np.add.at(b, cb, T_bnd[fids] * pbar)
    for tag, value in bc.neumann.items():
        fids = m.boundary_tags[tag]
        qbar = bc.value_on(value, m.face_centers[fids])
        np.add.at(b, m.face_cells[fids, 0], -qbar * m.face_measures[fids])

    src = np.broadcast_to(np.asarray(params.source, dtype=float), (n_p,))
    b[:n_p] += src * m.cell_measures
    for cell, rate in params.point_rates:
        b[int(cell)] += float(rate)

    A_p = sps.coo_matrix((vals, (rows, cols)), shape=(n_p, n_p)).tocsr()

    # --- A_pgamma: in-plane fault fluxes ------------------------------------
    grows, gcols, gvals = [], [], []
    for fid in sorted(mesh.faults):
        sub = mesh.faults[fid]
        off = lay.fault_pressure_offset[fid] - n_p
        eps = params.fault_value("aperture", fid)
        ktau = params.fault_value("k_tau", fid)
        excluded = mesh.fault_excluded_faces.get(fid, set())
        ffaces, Tf = _fault_transmissibilities(sub, eps * ktau, excluded)
        if ffaces.size:
            f0 = sub.face_cells[ffaces, 0] + off
            f1 = sub.face_cells[ffaces, 1] + off
            grows += [f0, f1, f0, f1]
            gcols += [f0, f1, f1, f0]
            gvals += [Tf, Tf, -Tf, -Tf]
        for end, value in bc.fault_tips.get(fid, []):
            cell, tip = _tip_cell(sub, end)
            d = np.linalg.norm(sub.cell_centers[cell] - tip)
            Tt = eps * ktau / d
            grows.append(np.array([cell + off]))
            gcols.append(np.array([cell + off]))
            gvals.append(np.array([Tt]))
            pv = bc.value_on(value, tip[None, :])[0]
            b[n_p + off + cell] += Tt * pv
        fsrc = params.fault_source
        fsrc = fsrc.get(fid, 0.0) if isinstance(fsrc, dict) else fsrc
        b[n_p + off:n_p + off + sub.n_cells] += \
            np.broadcast_to(np.asarray(fsrc, dtype=float), (sub.n_cells,)) \
            * eps * sub.cell_measures
    if grows:
        A_pg = sps.coo_matrix(
            (np.concatenate(gvals),
             (np.concatenate(grows), np.concatenate(gcols))),
            shape=(n_fp, n_fp)).tocsr()
    else:
        A_pg = sps.csr_matrix((n_fp, n_fp))

    # --- couplings: B1, B2, C ------------------------------------------------
    # Exchange fluxes are oriented along the fault normal: the +side flux
    # feeds the positive-side matrix, the -side flux drains the negative
    # side, and the fault balance carries their difference.
    b1r, b1c, b1v = [], [], []
    b2r, b2c, b2v = [], [], []
    cr, cv = [], []
    for cpl in mesh.couplings:
        fid = cpl.fault_id
        sub = mesh.faults[fid]
        eps = params.fault_value("aperture", fid)
        kn = params.fault_value("k_n", fid)
        lam0 = lay.coupling_flux_offset[(fid, cpl.side)] - n_hat
        pg0 = lay.fault_pressure_offset[fid] - n_p
        meas = sub.cell_measures
        W = cpl.overlap                       # (n_cells, n_faces)
        Pi = cpl.projection_weights
        cells_of_face = m.face_cells[cpl.matrix_face_ids, 0]

        mm, ff = np.nonzero(W)
        lam_idx = lam0 + mm
        cell_idx = cells_of_face[ff]
        # lambda+ drains the +side matrix into the fault, lambda- drains
        # the fault into the -side matrix; both orientations point from
        # the + toward the - side so the K_n -> inf limit is a through-flux
        sign = +1.0 if cpl.side == +1 else -1.0
        b1r.append(cell_idx)
        b1c.append(lam_idx)
        b1v.append(sign * W[mm, ff])
        rng = np.arange(sub.n_cells)
        b1r.append(n_p + pg0 + rng)
        b1c.append(lam0 + rng)
        b1v.append(-sign * meas)
        # constitutive rows as B2 phat - C lam = 0 with C positive:
        #   side +1: 2Kn|m|(Pi+ p - pg) - eps|m| lam+ = 0
        #   side -1: 2Kn|m|(pg - Pi- p) - eps|m| lam- = 0
        csign = +1.0 if cpl.side == +1 else -1.0
        b2r.append(lam_idx)
        b2c.append(cell_idx)
        b2v.append(csign * 2.0 * kn * meas[mm] * Pi[mm, ff])
        b2r.append(lam0 + rng)
        b2c.append(n_p + pg0 + rng)
        b2v.append(-csign * 2.0 * kn * meas)
        cr.append(lam0 + rng)
        cv.append(eps * meas)

    # --- intersections -------------------------------------------------------
    epow = params.intersection_eps_power
    for k, isec in enumerate(mesh.intersections):
        p_iota = lay.intersection_pressure[k] - n_p
        k_iota = params.k_intersection
        k_iota = float(k_iota[k]) if isinstance(k_iota, dict) else float(k_iota)
        for j, (fid, cell) in enumerate(isec.branches):
            lam = lay.intersection_flux[k][j] - n_hat
            pg = lay.fault_pressure_offset[fid] - n_p + cell
            eps = params.fault_value("aperture", fid)
            # branch balance loses the outflow into the intersection
            b1r.append(np.array([n_p + pg]))
            b1c.append(np.array([lam]))
            b1v.append(np.array([1.0]))
            # intersection balance gains every branch flux
            b1r.append(np.array([n_p + p_iota]))
            b1c.append(np.array([lam]))
            b1v.append(np.array([-1.0]))
            # constitutive: eps^pow lam + 2 K_iota (p_iota - pg) = 0
            b2r.append(np.array([lam, lam]))
            b2c.append(np.array([n_p + pg, n_p + p_iota]))
            b2v.append(np.array([2.0 * k_iota, -2.0 * k_iota]))
            cr.append(np.array([lam]))
            cv.append(np.array([eps ** epow]))

    def _csr(r, c, v, shape):
        if not r:
            return sps.csr_matrix(shape)
        return sps.coo_matrix(
            (np.concatenate(v),
             (np.concatenate(r), np.concatenate(c))), shape=shape).tocsr()

    B1 = _csr(b1r, b1c, b1v, (n_hat, n_lam))
    B2 = _csr(b2r, b2c, b2v, (n_lam, n_hat))
    cdiag = np.zeros(n_lam)
    if cr:
        cdiag[np.concatenate(cr)] = np.concatenate(
            [np.asarray(v, dtype=float) for v in cv])
    C = sps.diags(cdiag, shape=(n_lam, n_lam), format="csr") if n_lam \
        else sps.csr_matrix((0, 0))

    return FomSystem(A_p=A_p, A_pgamma=A_pg, B1=B1, B2=B2, C=C, b=b,
                     dof_layout=lay)


def solve(system: FomSystem, mu=None) -> FomSolution:
    """Direct sparse solve with iterative refinement to the residual tolerance."""
    A = system.A_N.tocsc()
    b = system.b_N
    try:
        lu = spla.splu(A)
        u = lu.solve(b)
    except RuntimeError as exc:
        raise NumericalError(_diagnose_singular(system, exc)) from exc
    if not np.all(np.isfinite(u)):
        raise NumericalError(_diagnose_singular(system, "non-finite solution"))
    bnorm = max(np.linalg.norm(b), 1e-300)
    res = np.linalg.norm(A @ u - b) / bnorm
    # wide permeability contrasts leave the plain LU residual near the
    # tolerance; a few refinement sweeps through the same factors fix that
    for _ in range(3):
        if res <= 0.1 * RESIDUAL_RTOL:
            break
        u = u + lu.solve(b - A @ u)
        res = np.linalg.norm(A @ u - b) / bnorm
    if np.linalg.norm(b) > 0 and res > RESIDUAL_RTOL:
        raise NumericalError(f"solver residual {res:.3e} above tolerance")
    return FomSolution(u=u, residual=res,
                       mu=None if mu is None else np.asarray(mu, dtype=float))


def _diagnose_singular(system: FomSystem, exc) -> str:
    hints = []
    if system.A_p.shape[0] and system.b[: system.A_p.shape[0]].size:
        diag = system.A_p.diagonal()
        if np.all(np.abs(system.A_p.sum(axis=1)) < 1e-14):
            hints.append("no Dirichlet face reachable (pure Neumann)")
        if np.any(diag == 0):
            hints.append("isolated matrix cell (zero diagonal)")
    detail = "; ".join(hints) if hints else "structural rank deficiency"
    return f"singular factorization: {detail} ({exc})"


# ---------------------------------------------------------------------------
# post-processing

@dataclass
class FluxField:
    matrix: np.ndarray          # signed flux density per face, m/s
    faults: dict                # fault_id -> per-face in-plane flux, m^2/s


def reconstruct_velocity(solution: FomSolution, mesh: MixedDimMesh,
                         params: PhysicalParams,
                         bc: BoundaryConditions | None = None) -> FluxField:
    """Darcy fluxes along face normals from the solved pressures.

    Matrix faces report flux density oriented with the stored normal;
    Dirichlet faces use the half-cell transmissibility; mortar faces carry
    the projected exchange flux.  Fault faces report the in-plane flux
    scaled by the aperture; tips are exactly zero.
    """
    lay = mesh.dof_layout
    m = mesh.matrix
    n_p = lay.n_pressure
    p = solution.u[:n_p]

    T_int, T_bnd = transmissibilities(mesh, params)
    q = np.zeros(m.n_faces)
    ifaces = m.interior_faces()
    c0, c1 = m.face_cells[ifaces, 0], m.face_cells[ifaces, 1]
    # face normals point outward from cell 0
    q[ifaces] = T_int[ifaces] * (p[c0] - p[c1]) / m.face_measures[ifaces]

    if bc is not None:
        for tag, value in bc.dirichlet.items():
            fids = m.boundary_tags[tag]
            pbar = bc.value_on(value, m.face_centers[fids])
            cb = m.face_cells[fids, 0]
            q[fids] = T_bnd[fids] * (p[cb] - pbar) / m.face_measures[fids]
        for tag, value in bc.neumann.items():
            fids = m.boundary_tags[tag]
            q[fids] = bc.value_on(value, m.face_centers[fids])

    for cpl in mesh.couplings:
        lam0 = lay.coupling_flux_offset[(cpl.fault_id, cpl.side)]
        lam = solution.u[lam0:lam0 + len(cpl.fault_cell_ids)]
        flux = cpl.overlap.T @ lam            # integrated per matrix face
        sign = +1.0 if cpl.side == +1 else -1.0
        q[cpl.matrix_face_ids] = sign * flux \
            / m.face_measures[cpl.matrix_face_ids]

    faults = {}
    for fid in sorted(mesh.faults):
        sub = mesh.faults[fid]
        off = lay.fault_pressure_offset[fid]
        pg = solution.u[off:off + sub.n_cells]
        eps = params.fault_value("aperture", fid)
        ktau = params.fault_value("k_tau", fid)
        excluded = mesh.fault_excluded_faces.get(fid, set())
        qf = np.zeros(sub.n_faces)
        ffaces, Tf = _fault_transmissibilities(sub, eps * ktau, excluded)
        if ffaces.size:
            f0, f1 = sub.face_cells[ffaces, 0], sub.face_cells[ffaces, 1]
            qf[ffaces] = Tf * (pg[f0] - pg[f1]) / sub.face_measures[ffaces]
        faults[fid] = qf
    return FluxField(matrix=q, faults=faults)


def qoi_delta_p(solution: FomSolution, injection_cell: int,
                production_cell: int) -> float:
    """Pressure difference between the injection and production cells."""
    n = len(solution.u)
    for c in (injection_cell, production_cell):
        if not 0 <= c < n:
            raise ConfigError(f"invalid cell id {c}")
    return float(solution.u[injection_cell] - solution.u[production_cell])


def mass_balance_report(mesh: MixedDimMesh, params: PhysicalParams,
                        bc: BoundaryConditions, solution: FomSolution):
    """Independent conservation check from reconstructed fluxes.

    Returns (matrix_residuals, fault_residuals, intersection_sums), each a
    flat array of per-cell (or per-point) residuals of the discrete
    balance, using integrated face fluxes recomputed from the solution.
    """
    lay = mesh.dof_layout
    m = mesh.matrix
    n_p = lay.n_pressure
    flux = reconstruct_velocity(solution, mesh, params, bc)

    out = np.zeros(m.n_cells)
    integrated = flux.matrix * m.face_measures
    c0 = m.face_cells[:, 0]
    c1 = m.face_cells[:, 1]
    np.add.at(out, c0, integrated)
    inner = c1 >= 0
    np.add.at(out, c1[inner], -integrated[inner])
    rhs = np.broadcast_to(np.asarray(params.source, dtype=float),
                          (m.n_cells,)) * m.cell_measures
    rhs = rhs.copy()
    for cell, rate in params.point_rates:
        rhs[int(cell)] += float(rate)
    matrix_res = out - rhs

    fault_res = []
    for fid in sorted(mesh.faults):
        sub = mesh.faults[fid]
        off = lay.fault_pressure_offset[fid]
        eps = params.fault_value("aperture", fid)
        qf = flux.faults[fid] * sub.face_measures
        acc = np.zeros(sub.n_cells)
        np.add.at(acc, sub.face_cells[:, 0], qf)
        inner = sub.face_cells[:, 1] >= 0
        np.add.at(acc, sub.face_cells[inner, 1], -qf[inner])
        # tip Dirichlet outflow
        for end, value in bc.fault_tips.get(fid, []):
            cell, tip = _tip_cell(sub, end)
            d = np.linalg.norm(sub.cell_centers[cell] - tip)
            ktau = params.fault_value("k_tau", fid)
            pv = bc.value_on(value, tip[None, :])[0]
            acc[cell] += eps * ktau / d \
                * (solution.u[off + cell] - pv)
        # fault balance gains lambda+ and loses lambda-
        for side in (+1, -1):
            lam0 = lay.coupling_flux_offset[(fid, side)]
            lam = solution.u[lam0:lam0 + sub.n_cells]
            acc += (-1.0 if side == +1 else +1.0) * lam * sub.cell_measures
        fsrc = params.fault_source
        fsrc = fsrc.get(fid, 0.0) if isinstance(fsrc, dict) else fsrc
        rhs_f = np.broadcast_to(np.asarray(fsrc, dtype=float),
                                (sub.n_cells,)) * eps * sub.cell_measures
        fault_res.append(acc - rhs_f)

    isec_sums = []
    for k, isec in enumerate(mesh.intersections):
        lam = solution.u[lay.intersection_flux[k]]
        isec_sums.append(lam.sum())
        for j, (fid, cell) in enumerate(isec.branches):
            fi = sorted(mesh.faults).index(fid)
            fault_res[fi][cell] += lam[j]
    return (matrix_res,
            np.concatenate(fault_res) if fault_res else np.zeros(0),
            np.asarray(isec_sums))


# ---------------------------------------------------------------------------
# export

_FOMS_MAGIC = b"FOMS"


def save_solution(solution: FomSolution, layout, path) -> None:
    """Binary export: header, parameter point, then the dof vector."""
    mu = solution.mu if solution.mu is not None else np.zeros(0)
    with open(path, "wb") as fh:
        fh.write(_FOMS_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<Q", len(solution.u)))
        for off in layout.block_offsets:
            fh.write(struct.pack("<Q", off))
        fh.write(struct.pack("<Q", len(mu)))
        fh.write(np.asarray(mu, dtype="<f8").tobytes())
        fh.write(np.asarray(solution.u, dtype="<f8").tobytes())


def load_solution(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _FOMS_MAGIC:
            raise ConfigError(f"{path}: not a FOM solution file")
        (version,) = struct.unpack("<I", fh.read(4))
        (n,) = struct.unpack("<Q", fh.read(8))
        offsets = struct.unpack("<QQQ", fh.read(24))
        (e,) = struct.unpack("<Q", fh.read(8))
        mu = np.frombuffer(fh.read(8 * e), dtype="<f8").copy()
        u = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
    return u, mu, offsets


def export_csv(solution: FomSolution, mesh: MixedDimMesh, path) -> None:
    """Cell table (block, cell id, coordinates, value) for plotting."""
    lay = mesh.dof_layout
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        dim = mesh.dim
        w.writerow(["block", "cell", "x", "y", "z"][: 2 + dim] + ["value"])
        for c in range(mesh.matrix.n_cells):
            xyz = mesh.matrix.cell_centers[c].tolist()
            w.writerow(["pressure", c] + xyz + [solution.u[c]])
        for fid in sorted(mesh.faults):
            sub = mesh.faults[fid]
            off = lay.fault_pressure_offset[fid]
            for c in range(sub.n_cells):
                xyz = sub.cell_centers[c].tolist()
                w.writerow([f"fault_pressure:{fid}", c] + xyz
                           + [solution.u[off + c]])
