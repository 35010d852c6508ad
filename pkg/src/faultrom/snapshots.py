"""Offline snapshot generation: sampling, solving, splitting, persistence.

A snapshot set pairs parameter points with full-order solution columns of
identical length (the deformed meshes share one topology).  Normalization
statistics are per physical variable block and always computed from the
training split only.
"""

from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2


@dataclass
class ParameterAxis:
    name: str
    lo: float
    hi: float
    scale: str = "linear"       # "linear" | "exponent"

    def __post_init__(self):
        if self.scale not in ("linear", "exponent"):
            raise ConfigError(f"unknown axis scale {self.scale!r}")
        if not self.lo <= self.hi:
            raise ConfigError(f"axis {self.name}: lo > hi")
        if self.scale == "exponent" and not self.lo > 0:
            raise ConfigError(f"axis {self.name}: exponent axes need lo > 0")


@dataclass
class ParameterSpace:
    axes: list

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("parameter space needs at least one axis")

    @property
    def e(self) -> int:
        return len(self.axes)

    def to_unit(self, points: np.ndarray) -> np.ndarray:
        """Map natural-unit points into the unit cube (log on exponent axes)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty_like(pts)
        for k, ax in enumerate(self.axes):
            if ax.scale == "exponent":
                lo, hi = np.log(ax.lo), np.log(ax.hi)
                v = np.log(pts[:, k])
            else:
                lo, hi = ax.lo, ax.hi
                v = pts[:, k]
            out[:, k] = 0.5 if hi == lo else (v - lo) / (hi - lo)
        return out

    def from_unit(self, unit: np.ndarray) -> np.ndarray:
        unit = np.atleast_2d(np.asarray(unit, dtype=float))
        out = np.empty_like(unit)
        for k, ax in enumerate(self.axes):
            if ax.scale == "exponent":
                lo, hi = np.log(ax.lo), np.log(ax.hi)
                out[:, k] = np.exp(lo + unit[:, k] * (hi - lo))
            else:
                out[:, k] = ax.lo + unit[:, k] * (ax.hi - ax.lo)
        return out

    def bounds(self) -> np.ndarray:
        return np.array([[ax.lo, ax.hi] for ax in self.axes])


def sample_uniform(space: ParameterSpace, count: int, seed: int) -> np.ndarray:
    """I.i.d. uniform samples per axis; exponent axes sample the exponent."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    rng = np.random.default_rng(seed)
    unit = rng.random((count, space.e))
    return space.from_unit(unit)


@dataclass
class SnapshotSet:
    params: np.ndarray           # (n_s, e)
    S: np.ndarray                # (N, n_s), Fortran order on disk
    block_offsets: tuple         # start of each variable block
    split_tags: np.ndarray       # (n_s,) u8
    norm_stats: np.ndarray = None  # (n_blocks, 2) min/max over training split
    failures: list = field(default_factory=list)

    @property
    def n_s(self) -> int:
        return self.S.shape[1]

    @property
    def N(self) -> int:
        return self.S.shape[0]

    @property
    def e(self) -> int:
        return self.params.shape[1]

    def block_slices(self):
        offs = list(self.block_offsets) + [self.N]
        return [slice(offs[i], offs[i + 1]) for i in range(len(self.block_offsets))]

    def indices(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.split_tags == tag)

    def columns(self, tag: int) -> np.ndarray:
        return self.S[:, self.indices(tag)]


def split_tags(n_s: int, sizes: tuple, seed: int) -> np.ndarray:
    """Seeded shuffle split into train/val/test of exactly the given sizes."""
    if sum(sizes) != n_s:
        raise ConfigError(f"split sizes {sizes} do not sum to {n_s}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_s)
    tags = np.empty(n_s, dtype=np.uint8)
    a, b = sizes[0], sizes[0] + sizes[1]
    tags[perm[:a]] = SPLIT_TRAIN
    tags[perm[a:b]] = SPLIT_VAL
    tags[perm[b:]] = SPLIT_TEST
    return tags


def compute_norm_stats(snap: SnapshotSet) -> np.ndarray:
    """Per-block min/max over the training columns."""
    train = snap.columns(SPLIT_TRAIN)
    if train.shape[1] == 0:
        raise ConfigError("no training columns to normalize against")
    stats = np.zeros((len(snap.block_offsets), 2))
    for i, sl in enumerate(snap.block_slices()):
        stats[i, 0] = train[sl].min()
        stats[i, 1] = train[sl].max()
    return stats


def normalize(values: np.ndarray, stats: np.ndarray, block_slices) -> np.ndarray:
    """Map each block into [0, 1]; zero-range blocks map to 0.5."""
    out = np.empty_like(np.asarray(values, dtype=float))
    for i, sl in enumerate(block_slices):
        lo, hi = stats[i]
        if hi - lo <= 0:
            out[sl] = 0.5
        else:
            out[sl] = (values[sl] - lo) / (hi - lo)
    return out


def denormalize(values: np.ndarray, stats: np.ndarray, block_slices) -> np.ndarray:
    out = np.empty_like(np.asarray(values, dtype=float))
    for i, sl in enumerate(block_slices):
        lo, hi = stats[i]
        if hi - lo <= 0:
            out[sl] = lo
        else:
            out[sl] = values[sl] * (hi - lo) + lo
    return out


# ---------------------------------------------------------------------------
# generation

_WORKER_PIPELINE = None


def _init_worker(pipeline_factory):
    global _WORKER_PIPELINE
    _WORKER_PIPELINE = pipeline_factory()


def _solve_index(args):
    idx, mu = args
    try:
        return idx, _WORKER_PIPELINE.solve_at(mu), None
    except Exception as exc:  # noqa: BLE001 - reported to the caller
        return idx, None, f"{type(exc).__name__}: {exc}"


def generate(space: ParameterSpace, pipeline, count: int, seed: int,
             sizes: tuple = None, jobs: int = 1,
             allow_failures: bool = False,
             pipeline_factory=None) -> SnapshotSet:
    """Deform, assemble and solve at `count` sampled parameter points.

    `pipeline` must provide solve_at(mu) -> dof vector and block_offsets.
    Results are gathered in sample order, so the set is independent of
    worker scheduling; a failed solve aborts unless allow_failures records
    and skips it.
    """
    params = sample_uniform(space, count, seed)
    columns = [None] * count
    errors = [None] * count

    if jobs > 1 and pipeline_factory is not None:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(pipeline_factory,)) as pool:
            for idx, col, err in pool.map(
                    _solve_index, [(i, params[i]) for i in range(count)],
                    chunksize=8):
                columns[idx] = col
                errors[idx] = err
    else:
        for i in range(count):
            try:
                columns[i] = pipeline.solve_at(params[i])
            except Exception as exc:  # noqa: BLE001
                errors[i] = f"{type(exc).__name__}: {exc}"

    failed = [i for i, e in enumerate(errors) if e is not None]
    if failed and not allow_failures:
        raise NumericalError(
            f"{len(failed)} snapshot solves failed (first: index {failed[0]}, "
            f"{errors[failed[0]]}); rerun with allow_failures to skip")
    keep = [i for i in range(count) if errors[i] is None]
    if not keep:
        raise NumericalError("all snapshot solves failed")
    S = np.column_stack([columns[i] for i in keep])
    params = params[keep]

    n_s = len(keep)
    if sizes is None:
        n_test = max(1, n_s // 10) if n_s >= 3 else 0
        n_val = n_test
        sizes = (n_s - n_val - n_test, n_val, n_test)
    tags = split_tags(n_s, sizes, seed + 1)

    snap = SnapshotSet(params=params, S=S,
                       block_offsets=tuple(pipeline.block_offsets),
                       split_tags=tags,
                       failures=[(i, errors[i]) for i in failed])
    snap.norm_stats = compute_norm_stats(snap)
    return snap


# ---------------------------------------------------------------------------
# persistence

_SNAP_MAGIC = b"SNAP"
_SNAP_VERSION = 1


def save_snapshots(snap: SnapshotSet, path) -> None:
    """Binary layout: header, params row-major, S column-major, tags, stats."""
    N, n_s, e = snap.N, snap.n_s, snap.e
    header_size = 4 + 4 + 8 * 3 + 8 * 3 + 8 + 8
    params_bytes = n_s * e * 8
    s_bytes = N * n_s * 8
    tags_off = header_size + params_bytes + s_bytes
    stats_off = tags_off + n_s
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<I", _SNAP_VERSION))
        fh.write(struct.pack("<QQQ", N, n_s, e))
        fh.write(struct.pack("<QQQ", *snap.block_offsets))
        fh.write(struct.pack("<Q", tags_off))
        fh.write(struct.pack("<Q", stats_off))
        fh.write(np.ascontiguousarray(snap.params, dtype="<f8").tobytes())
        fh.write(np.asfortranarray(snap.S, dtype="<f8").tobytes(order="F"))
        fh.write(snap.split_tags.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(snap.norm_stats, dtype="<f8").tobytes())


def load_snapshots(path) -> SnapshotSet:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _SNAP_MAGIC:
        raise ConfigError(f"{path}: not a snapshot file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _SNAP_VERSION:
        raise ConfigError(f"{path}: unsupported snapshot version {version}")
    N, n_s, e = struct.unpack_from("<QQQ", data, 8)
    offsets = struct.unpack_from("<QQQ", data, 32)
    tags_off, stats_off = struct.unpack_from("<QQ", data, 56)
    pos = 72
    params = np.frombuffer(data, dtype="<f8", count=n_s * e,
                           offset=pos).reshape(n_s, e).copy()
    pos += n_s * e * 8
    S = np.frombuffer(data, dtype="<f8", count=N * n_s,
                      offset=pos).reshape(N, n_s, order="F").copy()
    tags = np.frombuffer(data, dtype=np.uint8, count=n_s,
                         offset=tags_off).copy()
    stats = np.frombuffer(data, dtype="<f8", count=6,
                          offset=stats_off).reshape(3, 2).copy()
    return SnapshotSet(params=params, S=S, block_offsets=tuple(offsets),
                       split_tags=tags, norm_stats=stats)
