"""Minimal self-contained CNN engine: VGG-style blocks, taps, SGD training.

Every conv is 3x3/stride-1/pad-1 followed by batch norm and ReLU; 'M'
tokens are 2x2/stride-2 max-pools (floor); a single dense classifier sits
on the flattened last map.  Forward passes can emit per-conv activation
taps at the post-BN (default) or pre-BN point, always before the ReLU.

All math is float64 numpy; convolution is im2col + matmul.  Training is
plain SGD with momentum on softmax cross-entropy, deterministic for a
fixed seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import MAXPOOL, ArchConfig
from .data import Dataset, load_cifar_binary  # noqa: F401  (re-exported)
from .errors import DimensionError, FormatError, LengthError, TrainingError
from .ingest import ActivationTensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CHECKPOINT_MAGIC = b"NETP"
CHECKPOINT_VERSION = 1

TAP_POST_BN = "post-bn"
TAP_PRE_BN = "pre-bn"


@dataclass
class Hyper:
    epochs: int = 10
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "momentum": self.momentum,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Hyper":
        return cls(
            epochs=int(obj.get("epochs", cls.epochs)),
            lr=float(obj.get("lr", cls.lr)),
            momentum=float(obj.get("momentum", cls.momentum)),
            batch_size=int(obj.get("batch_size", cls.batch_size)),
        )


@dataclass
class ConvBlock:
    weight: np.ndarray    # (c_out, c_in, 3, 3)
    bias: np.ndarray      # (c_out,)
    gamma: np.ndarray     # (c_out,)
    beta: np.ndarray      # (c_out,)
    run_mean: np.ndarray  # (c_out,)
    run_var: np.ndarray   # (c_out,)

    def copy(self) -> "ConvBlock":
        return ConvBlock(*(a.copy() for a in (
            self.weight, self.bias, self.gamma, self.beta,
            self.run_mean, self.run_var)))


@dataclass
class NetParams:
    config: ArchConfig
    blocks: list = field(default_factory=list)
    fc_weight: np.ndarray = None
    fc_bias: np.ndarray = None

    def copy(self) -> "NetParams":
        return NetParams(
            config=self.config,
            blocks=[b.copy() for b in self.blocks],
            fc_weight=self.fc_weight.copy(),
            fc_bias=self.fc_bias.copy(),
        )

    def learnable(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs of trainable tensors, in checkpoint order."""
        out = []
        for i, b in enumerate(self.blocks):
            out += [
                (f"conv{i}.weight", b.weight),
                (f"conv{i}.bias", b.bias),
                (f"conv{i}.gamma", b.gamma),
                (f"conv{i}.beta", b.beta),
            ]
        out += [("fc.weight", self.fc_weight), ("fc.bias", self.fc_bias)]
        return out

    def all_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, b in enumerate(self.blocks):
            out += [
                (f"conv{i}.weight", b.weight),
                (f"conv{i}.bias", b.bias),
                (f"conv{i}.gamma", b.gamma),
                (f"conv{i}.beta", b.beta),
                (f"conv{i}.run_mean", b.run_mean),
                (f"conv{i}.run_var", b.run_var),
            ]
        out += [("fc.weight", self.fc_weight), ("fc.bias", self.fc_bias)]
        return out

    def param_count(self) -> int:
        return sum(a.size for _, a in self.learnable())

    def filter_bank(self, layer: int) -> np.ndarray:
        return self.blocks[layer].weight


def build(config: ArchConfig, seed: int) -> NetParams:
    """Deterministically initialize a network for `config`.

    Conv and dense weights are zero-mean Gaussian with variance 2/fan-in;
    biases and BN shifts start at zero, BN scales at one.
    """
    flat = config.flat_features()  # validates spatial sizes up front
    rng = np.random.default_rng(seed)
    blocks = []
    c_in = config.input_shape[2]
    for tok in config.tokens:
        if tok == MAXPOOL:
            continue
        fan_in = 9 * c_in
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(tok, c_in, 3, 3))
        blocks.append(
            ConvBlock(
                weight=weight,
                bias=np.zeros(tok),
                gamma=np.ones(tok),
                beta=np.zeros(tok),
                run_mean=np.zeros(tok),
                run_var=np.ones(tok),
            )
        )
        c_in = tok
    k = config.classifier_width
    fc_weight = rng.normal(0.0, np.sqrt(2.0 / flat), size=(k, flat))
    return NetParams(
        config=config, blocks=blocks, fc_weight=fc_weight, fc_bias=np.zeros(k)
    )


# ---------------------------------------------------------------- forward ---

def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B*H*W, 9*C) patches for a 3x3/pad-1 conv, C fastest."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((b, h, w, 9, c), dtype=x.dtype)
    for k in range(9):
        dy, dx = divmod(k, 3)
        cols[:, :, :, k, :] = xp[:, dy:dy + h, dx:dx + w, :]
    return cols.reshape(b * h * w, 9 * c)


def _col2im(dcols: np.ndarray, shape) -> np.ndarray:
    b, h, w, c = shape
    dxp = np.zeros((b, h + 2, w + 2, c))
    dcols = dcols.reshape(b, h, w, 9, c)
    for k in range(9):
        dy, dx = divmod(k, 3)
        dxp[:, dy:dy + h, dx:dx + w, :] += dcols[:, :, :, k, :]
    return dxp[:, 1:h + 1, 1:w + 1, :]


def _wmat(weight: np.ndarray) -> np.ndarray:
    c_out, c_in = weight.shape[0], weight.shape[1]
    return weight.transpose(0, 2, 3, 1).reshape(c_out, 9 * c_in)


def _pool_forward(x: np.ndarray):
    b, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise DimensionError(f"max-pool underflow on a {h}x{w} map")
    xw = (
        x[:, : ho * 2, : wo * 2, :]
        .reshape(b, ho, 2, wo, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, ho, wo, 4, c)
    )
    idx = xw.argmax(axis=3)
    out = np.take_along_axis(xw, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, idx


def _pool_backward(dout: np.ndarray, idx: np.ndarray, shape) -> np.ndarray:
    b, h, w, c = shape
    ho, wo = h // 2, w // 2
    dxw = np.zeros((b, ho, wo, 4, c))
    np.put_along_axis(dxw, idx[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    dx = np.zeros((b, h, w, c))
    dx[:, : ho * 2, : wo * 2, :] = (
        dxw.reshape(b, ho, wo, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, ho * 2, wo * 2, c)
    )
    return dx


def _forward(params, x, train_mode, tap_point=None, update_stats=False):
    """Shared forward pass.

    Returns (logits, taps, caches); caches is None unless train_mode, taps
    is empty unless tap_point is given.
    """
    if x.ndim != 4 or x.shape[1:] != tuple(params.config.input_shape):
        raise DimensionError(
            f"batch shape {x.shape[1:]} does not match input {params.config.input_shape}"
        )
    caches = [] if train_mode else None
    taps = []
    h = np.asarray(x, dtype=np.float64)
    conv_i = 0
    for tok in params.config.tokens:
        if tok == MAXPOOL:
            out, idx = _pool_forward(h)
            if train_mode:
                caches.append(("pool", idx, h.shape))
            h = out
            continue
        blk = params.blocks[conv_i]
        in_shape = h.shape
        cols = _im2col(h)
        pre = (cols @ _wmat(blk.weight).T + blk.bias).reshape(
            h.shape[0], h.shape[1], h.shape[2], -1
        )
        if tap_point == TAP_PRE_BN:
            taps.append(ActivationTensor(conv_i, pre))
        if train_mode:
            mu = pre.mean(axis=(0, 1, 2))
            var = pre.var(axis=(0, 1, 2))
            if update_stats:
                blk.run_mean += BN_MOMENTUM * (mu - blk.run_mean)
                blk.run_var += BN_MOMENTUM * (var - blk.run_var)
        else:
            mu, var = blk.run_mean, blk.run_var
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (pre - mu) * inv
        bn_out = blk.gamma * xhat + blk.beta
        if tap_point == TAP_POST_BN:
            taps.append(ActivationTensor(conv_i, bn_out))
        act = np.maximum(bn_out, 0.0)
        if train_mode:
            caches.append(("conv", cols, in_shape, xhat, inv, bn_out))
        h = act
        conv_i += 1
    flat = h.reshape(h.shape[0], -1)
    logits = flat @ params.fc_weight.T + params.fc_bias
    if train_mode:
        caches.append(("fc", flat, h.shape))
    return logits, taps, caches


def forward_with_taps(
    params: NetParams, batch: np.ndarray, tap: str = TAP_POST_BN
) -> tuple[np.ndarray, list[ActivationTensor]]:
    """Inference-mode forward pass returning logits and one tap per conv layer."""
    if tap not in (TAP_POST_BN, TAP_PRE_BN):
        raise ValueError(f"unknown tap point {tap!r}")
    logits, taps, _ = _forward(params, batch, train_mode=False, tap_point=tap)
    return logits, taps


def _softmax_ce(logits: np.ndarray, labels: np.ndarray):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _backward(params, caches, dlogits):
    grads = {}
    kind, flat, h_shape = caches[-1]
    assert kind == "fc"
    grads["fc.weight"] = dlogits.T @ flat
    grads["fc.bias"] = dlogits.sum(axis=0)
    dh = (dlogits @ params.fc_weight).reshape(h_shape)

    conv_i = len(params.blocks)
    for cache in reversed(caches[:-1]):
        if cache[0] == "pool":
            _, idx, in_shape = cache
            dh = _pool_backward(dh, idx, in_shape)
            continue
        conv_i -= 1
        _, cols, in_shape, xhat, inv, bn_out = cache
        blk = params.blocks[conv_i]
        dh = dh * (bn_out > 0.0)
        # Batch-norm backward (batch statistics).
        grads[f"conv{conv_i}.gamma"] = (dh * xhat).sum(axis=(0, 1, 2))
        grads[f"conv{conv_i}.beta"] = dh.sum(axis=(0, 1, 2))
        dxhat = dh * blk.gamma
        n = xhat.shape[0] * xhat.shape[1] * xhat.shape[2]
        dpre = (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=(0, 1, 2))
            - xhat * (dxhat * xhat).sum(axis=(0, 1, 2))
        )
        c_out = dpre.shape[3]
        dpre_mat = dpre.reshape(-1, c_out)
        dwmat = dpre_mat.T @ cols
        c_in = in_shape[3]
        grads[f"conv{conv_i}.weight"] = (
            dwmat.reshape(c_out, 3, 3, c_in).transpose(0, 3, 1, 2)
        )
        grads[f"conv{conv_i}.bias"] = dpre_mat.sum(axis=0)
        dh = _col2im(dpre_mat @ _wmat(blk.weight), in_shape)
    return grads


def loss_and_grads(params: NetParams, x: np.ndarray, labels: np.ndarray):
    """Training-mode loss and analytic gradients; running stats untouched."""
    logits, _, caches = _forward(params, x, train_mode=True)
    loss, dlogits = _softmax_ce(logits, labels)
    return loss, _backward(params, caches, dlogits)


def loss_only(params: NetParams, x: np.ndarray, labels: np.ndarray) -> float:
    logits, _, _ = _forward(params, x, train_mode=True)
    loss, _ = _softmax_ce(logits, labels)
    return float(loss)


def train(
    params: NetParams,
    dataset: Dataset,
    hyper: Hyper,
    seed: int,
    test: Dataset | None = None,
):
    """SGD-with-momentum training; returns (new params, per-epoch history).

    Deterministic for fixed (params, dataset, hyper, seed).  The input
    params are not modified.  Each history row carries the mean loss, the
    running train accuracy over the epoch's batches, and the test accuracy
    when a test split is supplied.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if dataset.labels.min() < 0 or dataset.labels.max() >= params.config.classifier_width:
        raise ValueError("labels out of range for the classifier width")
    p = params.copy()
    rng = np.random.default_rng(seed)
    vel = {name: np.zeros_like(a) for name, a in p.learnable()}
    history = []
    n = len(dataset)
    for epoch in range(hyper.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, hyper.batch_size):
            idx = perm[start:start + hyper.batch_size]
            x, y = dataset.images[idx], dataset.labels[idx]
            logits, _, caches = _forward(p, x, train_mode=True, update_stats=True)
            loss, dlogits = _softmax_ce(logits, y)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            grads = _backward(p, caches, dlogits)
            for name, arr in p.learnable():
                vel[name] = hyper.momentum * vel[name] + grads[name]
                arr -= hyper.lr * vel[name]
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y).sum())
        row = {
            "epoch": epoch,
            "loss": loss_sum / n,
            "train_acc": correct / n,
        }
        if test is not None:
            row["test_acc"] = evaluate(p, test)
        history.append(row)
    return p, history


def evaluate(params: NetParams, dataset: Dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy in eval mode (BN running statistics)."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start:start + batch_size]
        y = dataset.labels[start:start + batch_size]
        logits, _, _ = _forward(params, x, train_mode=False)
        correct += int((logits.argmax(axis=1) == y).sum())
    return correct / len(dataset)


# ------------------------------------------------------------ checkpoints ---

def save_checkpoint(params: NetParams, path) -> None:
    """Write `path` (binary tensors) plus `path`.json (shape manifest)."""
    path = Path(path)
    tensors = params.all_tensors()
    manifest = {
        "format": CHECKPOINT_MAGIC.decode(),
        "version": CHECKPOINT_VERSION,
        "config": json.loads(params.config.to_json()),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for _, a in tensors:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    Path(str(path) + ".json").write_text(json.dumps(manifest, sort_keys=True, indent=1))


def load_checkpoint(path) -> NetParams:
    path = Path(path)
    manifest = json.loads(Path(str(path) + ".json").read_text())
    if manifest.get("format") != CHECKPOINT_MAGIC.decode():
        raise FormatError(f"{path}.json: not a checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}.json: unsupported version {manifest.get('version')}")
    config = ArchConfig.from_dict(manifest["config"])
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r} at offset 0")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 8 + sum(
        int(np.prod(t["shape"])) * 4 for t in manifest["tensors"]
    )
    if len(raw) != expected:
        raise LengthError(f"{path}: expected {expected} bytes, got {len(raw)}")
    params = build(config, seed=0)
    offset = 8
    arrays = dict(params.all_tensors())
    for t in manifest["tensors"]:
        name, shape = t["name"], tuple(t["shape"])
        if name not in arrays or arrays[name].shape != shape:
            raise FormatError(f"{path}: tensor {name} {shape} does not fit config")
        size = int(np.prod(shape)) * 4
        arr = np.frombuffer(raw[offset:offset + size], dtype="<f4").reshape(shape)
        arrays[name][...] = arr.astype(np.float64)
        offset += size
    return params
