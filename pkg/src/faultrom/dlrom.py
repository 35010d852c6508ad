"""Dense autoencoder + parameter-map surrogate with joint training.

Three fully connected networks: an encoder compressing the full-order
vector to the latent space, a mirrored decoder, and a reduced map from
the parameters to the latent space.  Every layer applies PReLU with a
trainable per-layer slope.  Training minimizes

    L = alpha * |u - dec(enc(u))|^2 / N
      + beta  * |enc(u) - map(mu)|^2 / n
      + gamma * (dp_rom - dp_fom)^2          (optional QoI term)

averaged over the minibatch, by reverse-mode differentiation through all
networks jointly and Adam updates with step decay.  Online evaluation is
dec(map(mu)) only; the encoder never runs.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from . import snapshots as snap_mod


@dataclass
class DenseLayer:
    weights: np.ndarray      # (out, in)
    bias: np.ndarray         # (out,)
    prelu_slope: np.ndarray  # () trainable scalar

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


def make_layers(dims) -> list:
    out = []
    for nin, nout in zip(dims[:-1], dims[1:]):
        out.append(DenseLayer(weights=np.zeros((nout, nin)),
                              bias=np.zeros(nout),
                              prelu_slope=np.asarray(0.25)))
    return out


@dataclass
class DlRomModel:
    encoder: list
    decoder: list
    reduced_map: list
    norm_stats: np.ndarray          # (3, 2) per-block min/max
    block_offsets: tuple
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    mu_log: np.ndarray              # bool per axis: scale in log space
    encoder_calls: int = 0

    @property
    def N(self) -> int:
        return self.encoder[0].fan_in

    @property
    def n(self) -> int:
        return self.encoder[-1].fan_out

    @property
    def e(self) -> int:
        return self.reduced_map[0].fan_in

    def networks(self):
        return (("encoder", self.encoder), ("decoder", self.decoder),
                ("reduced_map", self.reduced_map))

    def parameters(self) -> list:
        out = []
        for _, layers in self.networks():
            for ly in layers:
                out += [ly.weights, ly.bias, ly.prelu_slope]
        return out

    def block_slices(self):
        offs = list(self.block_offsets) + [self.N]
        return [slice(offs[i], offs[i + 1]) for i in range(3)]

    def mu_to_unit(self, mu: np.ndarray) -> np.ndarray:
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        safe = np.where(self.mu_log, self.mu_lo, 1.0)
        lo = np.where(self.mu_log, np.log(safe), self.mu_lo)
        safe = np.where(self.mu_log, self.mu_hi, 1.0)
        hi = np.where(self.mu_log, np.log(safe), self.mu_hi)
        v = np.where(self.mu_log, np.log(np.where(self.mu_log, mu, 1.0)), mu)
        span = np.where(hi > lo, hi - lo, 1.0)
        return np.where(hi > lo, (v - lo) / span, 0.5)


def build_model(N: int, n: int, e: int, encoder_hidden, map_hidden,
                norm_stats, block_offsets, mu_lo, mu_hi,
                mu_log=None) -> DlRomModel:
    """Symmetric architecture: the decoder mirrors the encoder."""
    enc_dims = [N] + list(encoder_hidden) + [n]
    dec_dims = enc_dims[::-1]
    map_dims = [e] + list(map_hidden) + [n]
    mu_lo = np.asarray(mu_lo, dtype=float)
    mu_hi = np.asarray(mu_hi, dtype=float)
    if mu_log is None:
        mu_log = np.zeros(e, dtype=bool)
    return DlRomModel(encoder=make_layers(enc_dims),
                      decoder=make_layers(dec_dims),
                      reduced_map=make_layers(map_dims),
                      norm_stats=np.asarray(norm_stats, dtype=float),
                      block_offsets=tuple(block_offsets),
                      mu_lo=mu_lo, mu_hi=mu_hi,
                      mu_log=np.asarray(mu_log, dtype=bool))


def init_weights(model: DlRomModel, seed: int) -> DlRomModel:
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights and biases."""
    rng = np.random.default_rng(seed)
    for _, layers in model.networks():
        for ly in layers:
            bound = np.sqrt(1.0 / ly.fan_in)
            ly.weights[:] = rng.uniform(-bound, bound, ly.weights.shape)
            ly.bias[:] = rng.uniform(-bound, bound, ly.bias.shape)
            ly.prelu_slope = np.asarray(0.25)
    return model


def prelu(z, a):
    return np.maximum(z, 0.0) + a * np.minimum(z, 0.0)


def forward(layers, x: np.ndarray) -> np.ndarray:
    """Affine map then PReLU per layer, including the output layer."""
    y = np.atleast_2d(np.asarray(x, dtype=float))
    if y.shape[1] != layers[0].fan_in:
        raise ConfigError(
            f"input width {y.shape[1]} != layer fan-in {layers[0].fan_in}")
    for ly in layers:
        y = prelu(y @ ly.weights.T + ly.bias, ly.prelu_slope)
    return y


def _forward_cached(layers, x):
    caches = []
    y = x
    for ly in layers:
        z = y @ ly.weights.T + ly.bias
        caches.append((y, z))
        y = prelu(z, ly.prelu_slope)
    return y, caches


def _backward(layers, caches, dy):
    """Returns (dx, [(dW, db, da) per layer])."""
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        ly = layers[i]
        x, z = caches[i]
        da = np.sum(dy * np.minimum(z, 0.0))
        dz = dy * np.where(z > 0, 1.0, float(ly.prelu_slope))
        dW = dz.T @ x
        db = dz.sum(axis=0)
        grads[i] = (dW, db, np.asarray(da))
        dy = dz @ ly.weights
    return dy, grads


@dataclass
class TrainingConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma_qoi: float = 0.0
    epochs: int = 1000
    batch_size: int = 32
    lr: float = 1e-3
    decay_factor: float = 0.6
    decay_every: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    two_stage: bool = False

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("alpha and beta must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class QoiSpec:
    """Pressure-difference extractor used by the augmented loss."""

    injection_cell: int
    production_cell: int


def loss_and_grads(model: DlRomModel, u_norm: np.ndarray, mu_unit: np.ndarray,
                   config: TrainingConfig, qoi: QoiSpec = None,
                   dp_fom: np.ndarray = None):
    """Composite loss and gradients for one (normalized) minibatch.

    Returns (loss, grads) with grads ordered like model.parameters().
    """
    B = u_norm.shape[0]
    N = model.N
    n = model.n
    v, enc_cache = _forward_cached(model.encoder, u_norm)
    r, dec_cache = _forward_cached(model.decoder, v)
    w, map_cache = _forward_cached(model.reduced_map, mu_unit)

    diff_r = r - u_norm
    diff_v = v - w
    loss = config.alpha * np.sum(diff_r ** 2) / (B * N) \
        + config.beta * np.sum(diff_v ** 2) / (B * n)

    d_r = config.alpha * 2.0 * diff_r / (B * N)
    d_v_l2 = config.beta * 2.0 * diff_v / (B * n)
    d_w_l2 = -d_v_l2

    use_qoi = config.gamma_qoi != 0.0 and qoi is not None
    if use_qoi:
        if dp_fom is None:
            raise ConfigError("QoI loss needs reference pressure differences")
        s, dec_cache_w = _forward_cached(model.decoder, w)
        scale = model.norm_stats[0, 1] - model.norm_stats[0, 0]
        dp_rom = (s[:, qoi.injection_cell] - s[:, qoi.production_cell]) * scale
        delta = dp_rom - dp_fom
        loss += config.gamma_qoi * np.sum(delta ** 2) / B
        d_s = np.zeros_like(s)
        coef = config.gamma_qoi * 2.0 * delta * scale / B
        d_s[:, qoi.injection_cell] += coef
        d_s[:, qoi.production_cell] -= coef

    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}")

    d_v_dec, dec_grads = _backward(model.decoder, dec_cache, d_r)
    if use_qoi:
        d_w_dec, dec_grads_w = _backward(model.decoder, dec_cache_w, d_s)
        dec_grads = [tuple(a + b for a, b in zip(g1, g2))
                     for g1, g2 in zip(dec_grads, dec_grads_w)]
    else:
        d_w_dec = 0.0

    _, enc_grads = _backward(model.encoder, enc_cache, d_v_dec + d_v_l2)
    _, map_grads = _backward(model.reduced_map, map_cache, d_w_l2 + d_w_dec)

    grads = []
    for g in enc_grads + dec_grads + map_grads:
        grads += list(g)
    return float(loss), grads


def evaluate_loss(model, u_norm, mu_unit, config, qoi=None, dp_fom=None):
    loss, _ = loss_and_grads(model, u_norm, mu_unit, config, qoi, dp_fom)
    return loss


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Standard Adam update with bias correction; params updated in place."""
    state.t += 1
    t = state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * (g * g)
        mhat = state.m[i] / (1 - beta1 ** t)
        vhat = state.v[i] / (1 - beta2 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return params, state


def _write_params(model, params):
    i = 0
    for _, layers in model.networks():
        for ly in layers:
            ly.weights = params[i]
            ly.bias = params[i + 1]
            ly.prelu_slope = params[i + 2]
            i += 3


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    model: DlRomModel
    best_model: DlRomModel
    history: dict = field(default_factory=dict)


def train(model: DlRomModel, snap: snap_mod.SnapshotSet,
          config: TrainingConfig, qoi: QoiSpec = None) -> TrainResult:
    """Joint minimization over the training split with per-epoch history.

    The snapshot normalization statistics must already live on the model;
    the validation split is used for monitoring and best-checkpoint
    selection only.
    """
    slices = model.block_slices()
    stats = model.norm_stats

    def prep(tag):
        idx = snap.indices(tag)
        U = snap.S[:, idx].T.copy()
        for i, sl in enumerate(slices):
            lo, hi = stats[i]
            U[:, sl] = 0.5 if hi - lo <= 0 else (U[:, sl] - lo) / (hi - lo)
        M = model.mu_to_unit(snap.params[idx])
        dp = None
        if qoi is not None:
            dp = snap.S[qoi.injection_cell, idx] \
                - snap.S[qoi.production_cell, idx]
        return U, M, dp

    U_tr, M_tr, dp_tr = prep(snap_mod.SPLIT_TRAIN)
    U_va, M_va, dp_va = prep(snap_mod.SPLIT_VAL)
    n_train = len(U_tr)
    if n_train == 0:
        raise ConfigError("empty training split")

    seq = np.random.SeedSequence(config.seed)
    shuffle_rng = np.random.default_rng(seq.spawn(1)[0])

    params = model.parameters()
    state = AdamState.for_params(params)
    history = {"train_loss": [], "val_loss": [], "lr": []}
    best_val = np.inf
    best_model = None

    stages = [("joint", config.epochs)]
    if config.two_stage:
        stages = [("autoencoder", config.epochs), ("map", config.epochs)]

    for stage, epochs in stages:
        for epoch in range(epochs):
            lr = config.lr * config.decay_factor ** (epoch // config.decay_every)
            order = shuffle_rng.permutation(n_train)
            batch_losses = []
            for start in range(0, n_train, config.batch_size):
                sel = order[start:start + config.batch_size]
                loss, grads = _stage_loss(
                    model, stage, U_tr[sel], M_tr[sel], config, qoi,
                    None if dp_tr is None else dp_tr[sel])
                mask = _stage_mask(model, stage)
                grads = [g if keep else np.zeros_like(g)
                         for g, keep in zip(grads, mask)]
                params, state = adam_step(
                    params, grads, state, lr, config.adam_beta1,
                    config.adam_beta2, config.adam_eps)
                batch_losses.append(loss)
            _write_params(model, params)
            train_loss = float(np.mean(batch_losses))
            val_loss = np.nan
            if len(U_va):
                val_loss = evaluate_loss(model, U_va, M_va, config, qoi, dp_va)
            history["train_loss"].append(train_loss)
            history["val_loss"].append(val_loss)
            history["lr"].append(lr)
            if np.isfinite(val_loss) and val_loss < best_val:
                best_val = val_loss
                best_model = copy.deepcopy(model)

    if best_model is None:
        best_model = copy.deepcopy(model)
    return TrainResult(model=model, best_model=best_model, history=history)


def _stage_loss(model, stage, U, M, config, qoi, dp):
    if stage == "joint":
        return loss_and_grads(model, U, M, config, qoi, dp)
    if stage == "autoencoder":
        cfg = copy.copy(config)
        cfg.gamma_qoi = 0.0
        return loss_and_grads(model, U, M, cfg, None, None)
    return loss_and_grads(model, U, M, config, qoi, dp)


def _stage_mask(model, stage):
    n_enc = 3 * len(model.encoder)
    n_dec = 3 * len(model.decoder)
    n_map = 3 * len(model.reduced_map)
    if stage == "joint":
        return [True] * (n_enc + n_dec + n_map)
    if stage == "autoencoder":
        return [True] * (n_enc + n_dec) + [False] * n_map
    return [False] * (n_enc + n_dec) + [True] * n_map


# ---------------------------------------------------------------------------
# inference

def encode(model: DlRomModel, u_norm: np.ndarray) -> np.ndarray:
    model.encoder_calls += 1
    return forward(model.encoder, u_norm)


def infer(model: DlRomModel, mu) -> np.ndarray:
    """Online query dec(map(mu)), denormalized; the encoder is not touched."""
    m = model.mu_to_unit(mu)
    y = forward(model.decoder, forward(model.reduced_map, m))
    out = np.empty_like(y)
    for i, sl in enumerate(model.block_slices()):
        lo, hi = model.norm_stats[i]
        out[:, sl] = lo if hi - lo <= 0 else y[:, sl] * (hi - lo) + lo
    return out[0] if out.shape[0] == 1 else out


def weight_count(model: DlRomModel) -> dict:
    """Trainable parameter counts, one PReLU slope per layer."""
    out = {}
    total = 0
    for name, layers in model.networks():
        c = sum(ly.weights.size + ly.bias.size + 1 for ly in layers)
        out[name] = c
        total += c
    out["total"] = total
    return out


# ---------------------------------------------------------------------------
# persistence

_DLRM_MAGIC = b"DLRM"


def save_model(model: DlRomModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_DLRM_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<QQ", model.e, model.n))
        for _, layers in model.networks():
            dims = [layers[0].fan_in] + [ly.fan_out for ly in layers]
            fh.write(struct.pack("<Q", len(dims)))
            fh.write(struct.pack(f"<{len(dims)}Q", *dims))
        for _, layers in model.networks():
            for ly in layers:
                fh.write(np.ascontiguousarray(ly.weights, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(ly.bias, dtype="<f8").tobytes())
                fh.write(struct.pack("<d", float(ly.prelu_slope)))
        fh.write(np.ascontiguousarray(model.norm_stats, dtype="<f8").tobytes())
        fh.write(struct.pack("<QQQ", *model.block_offsets))
        fh.write(np.ascontiguousarray(model.mu_lo, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.mu_hi, dtype="<f8").tobytes())
        fh.write(model.mu_log.astype(np.uint8).tobytes())


def load_model(path) -> DlRomModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _DLRM_MAGIC:
        raise ConfigError(f"{path}: not a DL-ROM model file")
    pos = 8
    e, n = struct.unpack_from("<QQ", data, pos)
    pos += 16
    dims = []
    for _ in range(3):
        (k,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        dims.append(list(struct.unpack_from(f"<{k}Q", data, pos)))
        pos += 8 * k
    nets = []
    for d in dims:
        layers = make_layers(d)
        for ly in layers:
            w = np.frombuffer(data, dtype="<f8", count=ly.weights.size,
                              offset=pos).reshape(ly.weights.shape).copy()
            pos += 8 * ly.weights.size
            b = np.frombuffer(data, dtype="<f8", count=ly.bias.size,
                              offset=pos).copy()
            pos += 8 * ly.bias.size
            (a,) = struct.unpack_from("<d", data, pos)
            pos += 8
            ly.weights, ly.bias, ly.prelu_slope = w, b, np.asarray(a)
        nets.append(layers)
    stats = np.frombuffer(data, dtype="<f8", count=6,
                          offset=pos).reshape(3, 2).copy()
    pos += 48
    offs = struct.unpack_from("<QQQ", data, pos)
    pos += 24
    mu_lo = np.frombuffer(data, dtype="<f8", count=e, offset=pos).copy()
    pos += 8 * e
    mu_hi = np.frombuffer(data, dtype="<f8", count=e, offset=pos).copy()
    pos += 8 * e
    mu_log = np.frombuffer(data, dtype=np.uint8, count=e,
                           offset=pos).astype(bool)
    return DlRomModel(encoder=nets[0], decoder=nets[1], reduced_map=nets[2],
                      norm_stats=stats, block_offsets=offs,
                      mu_lo=mu_lo, mu_hi=mu_hi, mu_log=mu_log)
