"""POD and block-POD reduced models.

The basis comes from the method of snapshots: an eigendecomposition of
the small Gram matrix S^T S, with left vectors recovered as S V / sigma.
Block mode applies the decomposition per physical variable and stacks the
truncated bases block-diagonally.  Online queries reassemble the
full-order operator at the new parameter point (the geometry parameter
makes the problem non-affine) and Galerkin-project it onto the basis.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError

RANK_RTOL = 1e-12


@dataclass
class PodBasis:
    basis: np.ndarray            # (N, n) orthonormal columns
    singular_values: list        # per block, full spectra
    mode: str                    # "monolithic" | "block"
    block_offsets: tuple = None  # for block mode
    block_modes: int = None      # modes kept per block

    @property
    def N(self) -> int:
        return self.basis.shape[0]

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def compression_rate(self) -> float:
        return self.n / self.N


@dataclass
class ReducedSystem:
    A_n: np.ndarray
    b_n: np.ndarray


def svd_snapshots(S: np.ndarray):
    """Method of snapshots: (U, sigma, V) with S ~ U diag(sigma) V^T."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] < 1:
        raise ConfigError("snapshot matrix must be N x n_s with n_s >= 1")
    gram = S.T @ S
    w, V = np.linalg.eigh(gram)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    w = np.clip(w, 0.0, None)
    sigma = np.sqrt(w)
    cutoff = RANK_RTOL * (sigma[0] if sigma.size else 0.0)
    rank = int(np.sum(sigma > cutoff))
    U = np.zeros((S.shape[0], S.shape[1]))
    if rank:
        U[:, :rank] = (S @ V[:, :rank]) / sigma[:rank]
    return U, sigma, V


def truncate(U: np.ndarray, sigma: np.ndarray, n: int) -> PodBasis:
    """Keep the n leading left singular vectors."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    cutoff = RANK_RTOL * (sigma[0] if sigma.size else 0.0)
    rank = int(np.sum(sigma > cutoff))
    if n > rank:
        warnings.warn(f"requested {n} modes but rank is {rank}; truncating",
                      stacklevel=2)
        n = rank
    return PodBasis(basis=U[:, :n].copy(), singular_values=[sigma.copy()],
                    mode="monolithic")


def block_pod(S: np.ndarray, block_offsets, n_per_block: int) -> PodBasis:
    """Independent POD per variable block, equal modes per block."""
    S = np.asarray(S, dtype=float)
    offs = list(block_offsets) + [S.shape[0]]
    slices = [slice(offs[i], offs[i + 1]) for i in range(len(offs) - 1)]
    blocks = []
    spectra = []
    kept = []
    for sl in slices:
        U, sigma, _ = svd_snapshots(S[sl])
        tb = truncate(U, sigma, n_per_block)
        blocks.append(tb.basis)
        spectra.append(sigma)
        kept.append(tb.n)
    n_keep = min(kept)
    basis = scipy.linalg.block_diag(*[b[:, :n_keep] for b in blocks])
    return PodBasis(basis=basis, singular_values=spectra, mode="block",
                    block_offsets=tuple(block_offsets), block_modes=n_keep)


def reconstruction_error(S: np.ndarray, basis: PodBasis) -> float:
    """Sum of squared 2-norm residuals of the projected snapshots."""
    Phi = basis.basis
    R = S - Phi @ (Phi.T @ S)
    return float(np.sum(R * R))


def galerkin_solve(A_N, b_N, basis: PodBasis):
    """Project, solve the dense reduced system and reconstruct."""
    Phi = basis.basis
    APhi = A_N @ Phi
    A_n = Phi.T @ APhi
    b_n = Phi.T @ b_N
    try:
        u_n = scipy.linalg.solve(A_n, b_n)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            f"singular reduced operator (basis deficiency): {exc}") from exc
    residual = np.linalg.norm(Phi.T @ (b_N - APhi @ u_n))
    ref = max(np.linalg.norm(b_n), 1e-300)
    if residual > 1e-9 * ref:
        raise NumericalError(
            f"Galerkin residual {residual:.3e} above tolerance")
    return Phi @ u_n, ReducedSystem(A_n=A_n, b_n=b_n), u_n


def online_query(mu, basis: PodBasis, pipeline) -> np.ndarray:
    """Full non-affine query: deform, reassemble, project, solve."""
    system = pipeline.assemble_at(mu)
    u, _, _ = galerkin_solve(system.A_N, system.b_N, basis)
    return u


# ---------------------------------------------------------------------------
# persistence

_PODB_MAGIC = b"PODB"


def save_basis(basis: PodBasis, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_PODB_MAGIC)
        fh.write(struct.pack("<I", 1 if basis.mode == "block" else 0))
        fh.write(struct.pack("<QQ", basis.N, basis.n))
        offs = basis.block_offsets or (0, 0, 0)
        fh.write(struct.pack("<QQQ", *offs))
        fh.write(struct.pack("<Q", basis.block_modes or 0))
        fh.write(struct.pack("<Q", len(basis.singular_values)))
        for sig in basis.singular_values:
            fh.write(struct.pack("<Q", len(sig)))
            fh.write(np.asarray(sig, dtype="<f8").tobytes())
        fh.write(np.asfortranarray(basis.basis, dtype="<f8").tobytes(order="F"))


def load_basis(path) -> PodBasis:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _PODB_MAGIC:
        raise ConfigError(f"{path}: not a POD basis file")
    (mode_flag,) = struct.unpack_from("<I", data, 4)
    N, n = struct.unpack_from("<QQ", data, 8)
    offs = struct.unpack_from("<QQQ", data, 24)
    (block_modes,) = struct.unpack_from("<Q", data, 48)
    (n_spec,) = struct.unpack_from("<Q", data, 56)
    pos = 64
    spectra = []
    for _ in range(n_spec):
        (ln,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        spectra.append(np.frombuffer(data, dtype="<f8", count=ln,
                                     offset=pos).copy())
        pos += 8 * ln
    basis = np.frombuffer(data, dtype="<f8", count=N * n,
                          offset=pos).reshape(N, n, order="F").copy()
    mode = "block" if mode_flag else "monolithic"
    return PodBasis(basis=basis, singular_values=spectra, mode=mode,
                    block_offsets=offs if mode_flag else None,
                    block_modes=block_modes or None)
