"""Batch command-line pipeline: mesh, snapshots, ROM builds, analyses.

Every run writes a manifest (command, config hash, seeds, artifact paths,
wall-clock timings per phase) into a content-addressed output directory,
so repeated runs with identical configuration land in the same place and
differing ones never mix.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, cases, darcy_fom, dlrom, meshkit, rom_pod
from . import snapshots as snaps
from . import uq
from .errors import ConfigError, FaultromError, MeshFormatError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING = 4


# ---------------------------------------------------------------------------
# manifest and output layout

def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


class RunContext:
    def __init__(self, command: str, payload: dict, out_root: str,
                 seed: int):
        self.command = command
        self.payload = payload
        self.hash = _config_hash(payload)
        root = Path(out_root or os.environ.get("FAULTROM_OUT", "faultrom-out"))
        self.dir = root / f"{command.replace(' ', '-')}-{self.hash}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.timings = {}
        self.artifacts = {}
        self._t0 = time.perf_counter()

    def time_phase(self, name: str):
        ctx = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                ctx.timings[name] = ctx.timings.get(name, 0.0) \
                    + time.perf_counter() - self.t

        return _Timer()

    def path(self, name: str) -> Path:
        return self.dir / name

    def record(self, kind: str, path: Path):
        self.artifacts[kind] = str(path)

    def write_manifest(self):
        manifest = {
            "command": self.command,
            "config_hash": self.hash,
            "config": self.payload,
            "seed": self.seed,
            "artifacts": self.artifacts,
            "timings_s": self.timings,
            "versions": {"faultrom": __version__,
                         "numpy": np.__version__},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        with open(self.dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
        return manifest


# ---------------------------------------------------------------------------
# plot data (CSV series plus a minimal static SVG per curve)

def write_series_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_svg_plot(path, series: dict, logy: bool = False,
                   width: int = 480, height: int = 320):
    """Bare-bones polyline plot; the CSV next to it is the real artifact."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    if logy:
        ys = np.log10(np.clip(ys, 1e-300, None))
    x0, x1 = xs.min(), xs.max() or 1.0
    y0, y1 = ys.min(), ys.max()
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 30
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]

    def tx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def ty(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
             f'height="{height - 2 * pad}" fill="none" stroke="black"/>']
    for k, (name, (x, y)) in enumerate(series.items()):
        y = np.asarray(y, dtype=float)
        if logy:
            y = np.log10(np.clip(y, 1e-300, None))
        pts = " ".join(f"{tx(a):.2f},{ty(b):.2f}" for a, b in zip(x, y))
        color = colors[k % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad + 5}" y="{pad + 14 + 13 * k}" '
                     f'fill="{color}" font-size="11">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")


def five_number_summary(values) -> dict:
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"min": float(v[0]), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v[-1])}


# ---------------------------------------------------------------------------
# shared helpers

def _load_definition(args) -> cases.CaseDefinition:
    overrides = {}
    if getattr(args, "snapshots_count", None):
        overrides["snapshot_count"] = args.snapshots_count
        count = args.snapshots_count
        test = max(1, count // 10)
        overrides["sizes"] = (count - 2 * test, test, test)
    if getattr(args, "epochs", None):
        overrides["epochs"] = args.epochs
    if getattr(args, "config", None):
        if not Path(args.config).exists():
            raise FileNotFoundError(args.config)
        defn = cases.CaseDefinition.load(args.config)
        if overrides:
            raise ConfigError("overrides require --case, not --config")
        return defn
    if getattr(args, "case", None) is None:
        raise ConfigError("either --case or --config is required")
    if args.case == 2 and getattr(args, "layers", None):
        overrides["layers"] = args.layers
    return cases.by_id(args.case, **overrides)


def _snapshot_path(args, ctx) -> Path:
    if getattr(args, "snapshots_file", None):
        p = Path(args.snapshots_file)
        if not p.exists():
            raise FileNotFoundError(str(p))
        return p
    return ctx.path("snapshots.snap")


def _test_matrices(snap: snaps.SnapshotSet):
    idx = snap.indices(snaps.SPLIT_TEST)
    return snap.params[idx], snap.S[:, idx]


def _build_dlrom_model(defn, snap, seed):
    space = defn.parameter_space()
    arch = defn.dlrom
    model = dlrom.build_model(
        N=snap.N, n=arch["latent"], e=space.e,
        encoder_hidden=arch["encoder_hidden"], map_hidden=arch["map_hidden"],
        norm_stats=snap.norm_stats, block_offsets=snap.block_offsets,
        mu_lo=[ax.lo for ax in space.axes], mu_hi=[ax.hi for ax in space.axes],
        mu_log=[ax.scale == "exponent" for ax in space.axes])
    dlrom.init_weights(model, seed)
    return model


def _training_config(defn, seed, epochs=None) -> dlrom.TrainingConfig:
    t = defn.dlrom["training"]
    return dlrom.TrainingConfig(
        alpha=t["alpha"], beta=t["beta"], gamma_qoi=t.get("gamma_qoi", 0.0),
        epochs=epochs or t["epochs"], batch_size=t["batch_size"], lr=t["lr"],
        decay_factor=t["decay_factor"], decay_every=t["decay_every"],
        seed=seed)


def _errors_csv(path, report: uq.ErrorReport, label: str):
    write_series_csv(path, ["metric", "value"],
                     [["label", label],
                      ["e_max", report.e_max],
                      ["e_min", report.e_min],
                      ["e_ave", report.e_ave]])


# ---------------------------------------------------------------------------
# commands

def cmd_mesh(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext("mesh", {"case": defn.to_dict()}, args.out, args.seed)
    pipe = cases.CasePipeline(defn)
    with ctx.time_phase("offline_mesh_s"):
        mesh = pipe.reference_mesh
    out = ctx.path("mesh.json")
    meshkit.save_mesh(mesh, out)
    ctx.record("mesh", out)
    stats = {"dim": mesh.dim, "N": mesh.dof_layout.total,
             "matrix_cells": mesh.matrix.n_cells,
             "faults": {fid: f.n_cells for fid, f in mesh.faults.items()},
             "intersections": len(mesh.intersections)}
    with open(ctx.path("mesh_stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=1)
    ctx.write_manifest()
    print(f"mesh: N={stats['N']} -> {out}")
    return EXIT_OK


def cmd_deform(args) -> int:
    defn = _load_definition(args)
    mu_geom = [float(v) for v in args.mu_geom]
    ctx = RunContext("deform", {"case": defn.to_dict(), "mu_geom": mu_geom},
                     args.out, args.seed)
    pipe = cases.CasePipeline(defn)
    mu = np.zeros(defn.e)
    for k, ax in zip(defn.geom_axes, mu_geom):
        mu[k] = ax
    with ctx.time_phase("online_deform_s"):
        mesh = pipe.mesh_at(mu)
    out = ctx.path("deformed_mesh.csv")
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node"] + ["x", "y", "z"][: mesh.dim])
        for i, p in enumerate(mesh.matrix.node_coords):
            w.writerow([i] + p.tolist())
    ctx.record("deformed_nodes", out)
    ctx.write_manifest()
    print(f"deform: {out}")
    return EXIT_OK


def cmd_snapshots(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext("snapshots", {"case": defn.to_dict(), "seed": args.seed,
                                   "count": defn.dataset["count"]},
                     args.out, args.seed)
    pipe = cases.CasePipeline(defn)
    space = defn.parameter_space()
    with ctx.time_phase("offline_datagen_s"):
        snap = snaps.generate(
            space, pipe, defn.dataset["count"], args.seed,
            sizes=tuple(defn.dataset["sizes"]), jobs=args.jobs,
            allow_failures=args.allow_failures,
            pipeline_factory=None if args.jobs <= 1 else
            _PipelineFactory(defn))
    out = ctx.path("snapshots.snap")
    snaps.save_snapshots(snap, out)
    ctx.record("snapshots", out)
    if snap.failures:
        with open(ctx.path("failures.json"), "w", encoding="utf-8") as fh:
            json.dump(snap.failures, fh)
    ctx.write_manifest()
    print(f"snapshots: {snap.n_s} columns, N={snap.N} -> {out}")
    return EXIT_OK


class _PipelineFactory:
    def __init__(self, defn):
        self.doc = defn.to_dict()

    def __call__(self):
        return cases.CasePipeline(cases.CaseDefinition.from_dict(self.doc))


def cmd_pod(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext(f"pod-{args.pod_cmd}",
                     {"case": defn.to_dict(), "modes": args.modes,
                      "block": args.block, "seed": args.seed},
                     args.out, args.seed)
    snap = snaps.load_snapshots(_snapshot_path(args, ctx))
    if args.pod_cmd == "build":
        with ctx.time_phase("offline_build_s"):
            train = snap.columns(snaps.SPLIT_TRAIN)
            if args.block:
                basis = rom_pod.block_pod(train, snap.block_offsets,
                                          args.modes)
            else:
                U, sig, _ = rom_pod.svd_snapshots(train)
                basis = rom_pod.truncate(U, sig, args.modes)
        out = ctx.path("basis.podb")
        rom_pod.save_basis(basis, out)
        ctx.record("basis", out)
        sig_path = ctx.path("singular_values.csv")
        rows = []
        for bi, sig in enumerate(basis.singular_values):
            rows += [[bi, k, s] for k, s in enumerate(sig)]
        write_series_csv(sig_path, ["block", "k", "sigma"], rows)
        write_svg_plot(ctx.path("singular_values.svg"),
                       {f"block{bi}": (np.arange(len(s)), np.asarray(s))
                        for bi, s in enumerate(basis.singular_values)},
                       logy=True)
        ctx.write_manifest()
        print(f"pod build: n={basis.n} N={basis.N} "
              f"(compression {basis.compression_rate:.2%}) -> {out}")
        return EXIT_OK

    basis = rom_pod.load_basis(Path(args.artifact))
    pipe = cases.CasePipeline(defn)
    params, U_ref = _test_matrices(snap)
    times = []
    cols = []
    with ctx.time_phase("online_query_s"):
        for mu in params:
            t0 = time.perf_counter()
            cols.append(rom_pod.online_query(mu, basis, pipe))
            times.append(time.perf_counter() - t0)
    report = uq.errors(U_ref, np.column_stack(cols))
    _errors_csv(ctx.path("errors.csv"), report, f"pod n={basis.n}")
    write_series_csv(ctx.path("online_times.csv"), ["stat", "seconds"],
                     list(five_number_summary(times).items()))
    ctx.write_manifest()
    print(f"pod eval: e_ave={report.e_ave:.4f} e_max={report.e_max:.4f}")
    return EXIT_OK


def cmd_dlrom(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext(f"dlrom-{args.dlrom_cmd}",
                     {"case": defn.to_dict(), "seed": args.seed,
                      "epochs": args.epochs}, args.out, args.seed)
    snap = snaps.load_snapshots(_snapshot_path(args, ctx))
    if args.dlrom_cmd == "train":
        model = _build_dlrom_model(defn, snap, args.seed)
        config = _training_config(defn, args.seed, args.epochs)
        if args.lr:
            config.lr = args.lr
        if args.batch:
            config.batch_size = args.batch
        if args.decay_factor:
            config.decay_factor = args.decay_factor
        if args.decay_every:
            config.decay_every = args.decay_every
        config.alpha = args.alpha
        config.beta = args.beta
        config.gamma_qoi = args.gamma_qoi
        qoi_spec = None
        if config.gamma_qoi:
            pipe = cases.CasePipeline(defn)
            pipe._ensure()
            qoi_spec = dlrom.QoiSpec(defn.qoi["injection_cell"],
                                     defn.qoi["production_cell"])
        with ctx.time_phase("offline_train_s"):
            result = dlrom.train(model, snap, config, qoi_spec)
        out = ctx.path("model.dlrm")
        dlrom.save_model(result.model, out)
        dlrom.save_model(result.best_model, ctx.path("model_best.dlrm"))
        ctx.record("model", out)
        hist = result.history
        write_series_csv(ctx.path("history.csv"),
                         ["epoch", "train_loss", "val_loss", "lr"],
                         [[i, a, b, c] for i, (a, b, c) in enumerate(
                             zip(hist["train_loss"], hist["val_loss"],
                                 hist["lr"]))])
        write_svg_plot(ctx.path("history.svg"),
                       {"train": (np.arange(len(hist["train_loss"])),
                                  hist["train_loss"]),
                        "val": (np.arange(len(hist["val_loss"])),
                                hist["val_loss"])}, logy=True)
        ctx.write_manifest()
        print(f"dlrom train: final loss {hist['train_loss'][-1]:.3e} -> {out}")
        return EXIT_OK

    model = dlrom.load_model(Path(args.artifact))
    params, U_ref = _test_matrices(snap)
    times = []
    cols = []
    with ctx.time_phase("online_query_s"):
        for mu in params:
            t0 = time.perf_counter()
            cols.append(dlrom.infer(model, mu))
            times.append(time.perf_counter() - t0)
    report = uq.errors(U_ref, np.column_stack(cols))
    _errors_csv(ctx.path("errors.csv"), report, "dlrom")
    write_series_csv(ctx.path("online_times.csv"), ["stat", "seconds"],
                     list(five_number_summary(times).items()))
    ctx.write_manifest()
    print(f"dlrom eval: e_ave={report.e_ave:.4f} e_max={report.e_max:.4f}")
    return EXIT_OK


def cmd_errors(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext("errors", {"case": defn.to_dict(), "rom": args.rom,
                                "modes": args.modes, "seed": args.seed},
                     args.out, args.seed)
    snap = snaps.load_snapshots(_snapshot_path(args, ctx))
    params, U_ref = _test_matrices(snap)
    if args.rom == "pod":
        pipe = cases.CasePipeline(defn)
        train = snap.columns(snaps.SPLIT_TRAIN)
        sweep = args.modes_sweep or [args.modes or defn.pod["modes"]]
        rows = []
        series = {}
        U, sig, _ = rom_pod.svd_snapshots(train)
        for n in sweep:
            basis = rom_pod.truncate(U, sig, n)
            cols = [rom_pod.online_query(mu, basis, pipe) for mu in params]
            rep = uq.errors(U_ref, np.column_stack(cols))
            rows.append([n, rep.e_ave, rep.e_max, rep.e_min])
        write_series_csv(ctx.path("errors_vs_n.csv"),
                         ["n", "e_ave", "e_max", "e_min"], rows)
        arr = np.asarray(rows, dtype=float)
        series = {"e_ave": (arr[:, 0], arr[:, 1]),
                  "e_max": (arr[:, 0], arr[:, 2]),
                  "e_min": (arr[:, 0], arr[:, 3])}
        write_svg_plot(ctx.path("errors_vs_n.svg"), series, logy=True)
        print(f"errors: {ctx.path('errors_vs_n.csv')}")
    else:
        model = dlrom.load_model(Path(args.artifact))
        cols = [dlrom.infer(model, mu) for mu in params]
        rep = uq.errors(U_ref, np.column_stack(cols))
        _errors_csv(ctx.path("errors.csv"), rep, "dlrom")
        print(f"errors: e_ave={rep.e_ave:.4f}")
    ctx.write_manifest()
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext("sensitivity", {"case": defn.to_dict(),
                                     "samples": args.samples,
                                     "seed": args.seed}, args.out, args.seed)
    pipe = cases.CasePipeline(defn)
    pipe._ensure()
    space = defn.parameter_space()
    inj = defn.qoi["injection_cell"]
    prod = defn.qoi["production_cell"]

    model = dlrom.load_model(Path(args.artifact))

    def rom_qoi(points):
        out = dlrom.infer(model, points)
        out = np.atleast_2d(out)
        return out[:, inj] - out[:, prod]

    with ctx.time_phase("online_query_s"):
        rom_res = uq.sobol_first_order(rom_qoi, space, args.samples,
                                       args.seed)
    rows = [["surrogate", rom_res.qoi_mean, rom_res.qoi_std]
            + rom_res.first_order.tolist()]
    if args.fom_baseline:
        def fom_qoi(points):
            return np.array([pipe.qoi(mu) for mu in points])

        with ctx.time_phase("fom_baseline_s"):
            fom_res = uq.sobol_first_order(fom_qoi, space, args.samples,
                                           args.seed)
        rows.append(["fom", fom_res.qoi_mean, fom_res.qoi_std]
                    + fom_res.first_order.tolist())
    header = ["model", "qoi_mean", "qoi_std"] \
        + [f"S1_{ax.name}" for ax in space.axes]
    write_series_csv(ctx.path("sensitivity.csv"), header, rows)

    samples = rom_qoi(snaps.sample_uniform(space, args.samples, args.seed))
    grid = np.linspace(samples.min() - 3 * samples.std(),
                       samples.max() + 3 * samples.std(), 200)
    dens = uq.kde(samples, grid)
    write_series_csv(ctx.path("qoi_density.csv"), ["qoi", "density"],
                     np.column_stack([grid, dens]).tolist())
    write_svg_plot(ctx.path("qoi_density.svg"), {"kde": (grid, dens)})

    counts = [c for c in (100, 300, 900, args.samples) if c <= args.samples]
    counts = sorted(set(counts))
    conv = uq.convergence_study(rom_qoi, space, counts, args.seed)
    write_series_csv(ctx.path("convergence.csv"),
                     ["count", "mean", "std"]
                     + [f"S1_{ax.name}" for ax in space.axes],
                     [[c, r.qoi_mean, r.qoi_std] + r.first_order.tolist()
                      for c, r in zip(counts, conv)])
    ctx.write_manifest()
    print(f"sensitivity: {ctx.path('sensitivity.csv')}")
    return EXIT_OK


def cmd_invert(args) -> int:
    defn = _load_definition(args)
    if defn.inverse is None:
        raise ConfigError("case has no inverse-problem configuration")
    inv = defn.inverse
    ctx = RunContext("invert", {"case": defn.to_dict(), "seed": args.seed,
                                "target": args.target}, args.out, args.seed)
    target = args.target if args.target is not None else inv["target"]
    model = dlrom.load_model(Path(args.artifact))
    pipe = cases.CasePipeline(defn)
    pipe._ensure()
    inj, prod = defn.qoi["injection_cell"], defn.qoi["production_cell"]

    inv_space = cases.ParameterSpace(
        [snaps.ParameterAxis(**ax) for ax in inv["axes"]])

    def rom_qoi(mu):
        u = dlrom.infer(model, np.asarray(mu))
        return u[inj] - u[prod]

    unit_bounds = [(0.0, 1.0)] * inv_space.e
    config = uq.DeConfig(bounds=unit_bounds, tol=inv["tol"],
                         atol=inv["atol"], seed=args.seed)
    with ctx.time_phase("online_query_s"):
        result = uq.invert_delta_p(
            lambda u: rom_qoi(inv_space.from_unit(u)[0]), target, config,
            fom_qoi=lambda u: pipe.qoi(inv_space.from_unit(u)[0]))
    mu_star = inv_space.from_unit(result.mu)[0]
    out = {"mu_star": mu_star.tolist(), "qoi_rom": result.qoi_rom,
           "qoi_fom": result.qoi_fom, "target": target,
           "objective": result.objective, "nfev": result.nfev,
           "converged": result.converged}
    with open(ctx.path("inversion.json"), "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=1)
    ctx.write_manifest()
    print(f"invert: qoi_rom={result.qoi_rom:.6f} qoi_fom={result.qoi_fom:.6f}"
          f" target={target}")
    return EXIT_OK


def cmd_case_all(args) -> int:
    defn = _load_definition(args)
    ctx = RunContext(f"case{args.case}-all",
                     {"case": defn.to_dict(), "seed": args.seed},
                     args.out, args.seed)
    pipe = cases.CasePipeline(defn)
    space = defn.parameter_space()

    with ctx.time_phase("offline_datagen_s"):
        snap = snaps.generate(space, pipe, defn.dataset["count"], args.seed,
                              sizes=tuple(defn.dataset["sizes"]),
                              jobs=args.jobs)
    snap_path = ctx.path("snapshots.snap")
    snaps.save_snapshots(snap, snap_path)
    ctx.record("snapshots", snap_path)

    train = snap.columns(snaps.SPLIT_TRAIN)
    params, U_ref = _test_matrices(snap)
    modes = min(defn.pod["modes"], train.shape[1])

    with ctx.time_phase("offline_build_s"):
        U, sig, _ = rom_pod.svd_snapshots(train)
        basis = rom_pod.truncate(U, sig, modes)
        bbasis = rom_pod.block_pod(train, snap.block_offsets,
                                   max(1, modes // 3))
    rom_pod.save_basis(basis, ctx.path("basis.podb"))
    rom_pod.save_basis(bbasis, ctx.path("basis_block.podb"))
    ctx.record("pod_basis", ctx.path("basis.podb"))

    pod_times = []
    cols = []
    with ctx.time_phase("online_query_s"):
        for mu in params:
            t0 = time.perf_counter()
            cols.append(rom_pod.online_query(mu, basis, pipe))
            pod_times.append(time.perf_counter() - t0)
    pod_report = uq.errors(U_ref, np.column_stack(cols))
    _errors_csv(ctx.path("errors_pod.csv"), pod_report, f"pod n={modes}")

    model = _build_dlrom_model(defn, snap, args.seed)
    config = _training_config(defn, args.seed, args.epochs)
    with ctx.time_phase("offline_train_s"):
        result = dlrom.train(model, snap, config)
    dlrom.save_model(result.model, ctx.path("model.dlrm"))
    ctx.record("dlrom_model", ctx.path("model.dlrm"))

    dl_times = []
    cols = []
    for mu in params:
        t0 = time.perf_counter()
        cols.append(dlrom.infer(result.model, mu))
        dl_times.append(time.perf_counter() - t0)
    dl_report = uq.errors(U_ref, np.column_stack(cols))
    _errors_csv(ctx.path("errors_dlrom.csv"), dl_report, "dlrom")

    write_series_csv(ctx.path("online_times.csv"),
                     ["model", "min", "q1", "median", "q3", "max"],
                     [["pod"] + list(five_number_summary(pod_times).values()),
                      ["dlrom"] + list(five_number_summary(dl_times).values())])
    ctx.write_manifest()
    print(f"case {args.case}: pod e_ave={pod_report.e_ave:.4f} "
          f"dlrom e_ave={dl_report.e_ave:.4f} -> {ctx.dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="faultrom",
        description="Reduced-order models for Darcy flow in faulted media")
    p.add_argument("--out", default=None, help="output root directory "
                   "(default: $FAULTROM_OUT or ./faultrom-out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--allow-failures", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_case(sp, config=True):
        sp.add_argument("--case", type=int, choices=(1, 2, 3))
        if config:
            sp.add_argument("--config", help="case definition JSON")
        sp.add_argument("--snapshots-count", type=int, dest="snapshots_count")
        sp.add_argument("--layers", type=int)
        sp.add_argument("--epochs", type=int)

    sp = sub.add_parser("mesh", help="build and save the reference mesh")
    add_case(sp)
    sp.set_defaults(fn=cmd_mesh)

    sp = sub.add_parser("deform", help="deform the mesh at given parameters")
    add_case(sp)
    sp.add_argument("--mu-geom", nargs="+", required=True)
    sp.set_defaults(fn=cmd_deform)

    sp = sub.add_parser("snapshots", help="generate the snapshot dataset")
    add_case(sp)
    sp.set_defaults(fn=cmd_snapshots)

    sp = sub.add_parser("pod", help="build or evaluate a POD basis")
    sp.add_argument("pod_cmd", choices=("build", "eval"))
    add_case(sp)
    sp.add_argument("--snapshots-file", dest="snapshots_file")
    sp.add_argument("--modes", type=int, default=20)
    sp.add_argument("--block", action="store_true")
    sp.add_argument("--artifact", help="basis file for eval")
    sp.set_defaults(fn=cmd_pod)

    sp = sub.add_parser("dlrom", help="train or evaluate the DL-ROM")
    sp.add_argument("dlrom_cmd", choices=("train", "eval"))
    add_case(sp)
    sp.add_argument("--snapshots-file", dest="snapshots_file")
    sp.add_argument("--artifact", help="model file for eval")
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--decay-factor", type=float)
    sp.add_argument("--decay-every", type=int)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--gamma-qoi", type=float, default=0.0)
    sp.set_defaults(fn=cmd_dlrom)

    sp = sub.add_parser("errors", help="error report for a ROM")
    add_case(sp)
    sp.add_argument("--rom", choices=("pod", "dlrom"), required=True)
    sp.add_argument("--snapshots-file", dest="snapshots_file")
    sp.add_argument("--artifact")
    sp.add_argument("--modes", type=int)
    sp.add_argument("--modes-sweep", type=int, nargs="+")
    sp.set_defaults(fn=cmd_errors)

    sp = sub.add_parser("sensitivity", help="Monte Carlo Sobol analysis")
    add_case(sp)
    sp.add_argument("--artifact", required=True, help="DL-ROM model")
    sp.add_argument("--samples", type=int, default=900)
    sp.add_argument("--fom-baseline", action="store_true")
    sp.set_defaults(fn=cmd_sensitivity)

    sp = sub.add_parser("invert", help="inverse problem on the surrogate")
    add_case(sp)
    sp.add_argument("--artifact", required=True, help="DL-ROM model")
    sp.add_argument("--target", type=float)
    sp.set_defaults(fn=cmd_invert)

    sp = sub.add_parser("case", help="run the whole pipeline for one case")
    sp.add_argument("case", type=int, choices=(1, 2, 3))
    sp.add_argument("what", choices=("all",))
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.add_argument("--snapshots-count", type=int, dest="snapshots_count")
    sp.add_argument("--layers", type=int)
    sp.add_argument("--epochs", type=int)
    sp.set_defaults(fn=cmd_case_all)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, MeshFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FaultromError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
