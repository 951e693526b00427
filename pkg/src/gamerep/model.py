"""Composite network: convolutional encoder, unit-sphere projection head and
two-layer classifier, written directly in numpy with explicit backward passes.

Tensors are stored flat in ``Parameters.tensors`` under dotted names whose
first component is the group (``encoder``, ``projection``, ``classifier``).
Images enter as ``(b, h, w, 3)`` arrays and are moved to channel-first layout
internally.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError

NORM_EPS = 1e-12
GROUPS = ("encoder", "projection", "classifier")


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel: int = 3
    stride: int = 2
    activation: str = "relu"


DEFAULT_BLOCKS = (ConvBlock(16), ConvBlock(32), ConvBlock(64))


@dataclass
class ModelConfig:
    input_size: tuple[int, int] = (32, 32)
    blocks: tuple[ConvBlock, ...] = DEFAULT_BLOCKS
    projection_dim: int = 128
    hidden: int = 64
    n_classes: int = 10
    dropout: float = 0.2

    def __post_init__(self):
        self.input_size = tuple(self.input_size)
        self.blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.blocks)
        if not self.blocks:
            raise ConfigError("encoder needs at least one convolution block")
        for b in self.blocks:
            if b.activation not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {b.activation!r}")
            if b.filters < 1 or b.kernel < 1 or b.stride < 1:
                raise ConfigError(f"invalid convolution block {b}")
        if self.rep_dim < 2 or self.projection_dim < 2:
            raise ConfigError("representation and projection dims must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")

    @property
    def rep_dim(self) -> int:
        return self.blocks[-1].filters

    def to_json(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        d["blocks"] = [asdict(b) for b in self.blocks]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["blocks"] = tuple(ConvBlock(**b) for b in d["blocks"])
        return cls(**d)


@dataclass
class Parameters:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    trainable: dict[str, bool] = field(default_factory=lambda: {g: True for g in GROUPS})

    def __getitem__(self, name):
        return self.tensors[name]

    def group(self, name: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.split(".", 1)[0] == name}

    def copy(self) -> "Parameters":
        return Parameters(self.config, {k: v.copy() for k, v in self.tensors.items()},
                          dict(self.trainable))

    def astype(self, dtype) -> "Parameters":
        return Parameters(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()},
                          dict(self.trainable))

    def is_trainable(self, name: str) -> bool:
        return self.trainable[name.split(".", 1)[0]]

    def checksum(self, group: str | None = None) -> str:
        import hashlib
        h = hashlib.sha256()
        for k in sorted(self.tensors):
            if group is None or k.split(".", 1)[0] == group:
                h.update(k.encode())
                h.update(np.ascontiguousarray(self.tensors[k]).tobytes())
        return h.hexdigest()


def _uniform(rng, shape, fan_in, dtype):
    # variance 2 / fan_in
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


def init_params(config: ModelConfig, seed: int, dtype=np.float64) -> Parameters:
    rng = np.random.default_rng(seed)
    t: dict[str, np.ndarray] = {}
    c = 3
    for i, b in enumerate(config.blocks):
        fan_in = c * b.kernel * b.kernel
        t[f"encoder.conv{i}.weight"] = _uniform(rng, (b.filters, c, b.kernel, b.kernel), fan_in, dtype)
        t[f"encoder.conv{i}.bias"] = np.zeros(b.filters, dtype)
        c = b.filters
    d = config.rep_dim
    t["projection.weight"] = _uniform(rng, (d, config.projection_dim), d, dtype)
    t["projection.bias"] = np.zeros(config.projection_dim, dtype)
    t["classifier.fc1.weight"] = _uniform(rng, (d, config.hidden), d, dtype)
    t["classifier.fc1.bias"] = np.zeros(config.hidden, dtype)
    t["classifier.fc2.weight"] = _uniform(rng, (config.hidden, config.n_classes), config.hidden, dtype)
    t["classifier.fc2.bias"] = np.zeros(config.n_classes, dtype)
    return Parameters(config, t)


# ---------------------------------------------------------------------------
# layers

def _relu(x):
    return np.maximum(x, 0)


def _relu_grad(y, dy):
    return dy * (y > 0)


def _tanh_grad(y, dy):
    return dy * (1 - y * y)


ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


def _out_size(n, k, s, p):
    return (n + 2 * p - k) // s + 1


def conv_forward(x, weight, bias, stride):
    """Same-style padded convolution of channel-first ``x`` via im2col."""
    b, c, H, W = x.shape
    f, _, k, _ = weight.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oh, ow = _out_size(H, k, stride, p), _out_size(W, k, stride, p)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * k * k)
    out = cols @ weight.reshape(f, -1).T + bias
    out = out.reshape(b, oh, ow, f).transpose(0, 3, 1, 2)
    return out, (cols, x.shape, stride)


def conv_backward(dout, weight, cache):
    cols, xshape, stride = cache
    b, c, H, W = xshape
    f, _, k, _ = weight.shape
    p = k // 2
    oh, ow = dout.shape[2:]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (d2.T @ cols).reshape(weight.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ weight.reshape(f, -1)).reshape(b, oh, ow, c, k, k)
    dxp = np.zeros((b, c, H + 2 * p, W + 2 * p), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, p:p + H, p:p + W], dw, db


def _check_images(config: ModelConfig, images: np.ndarray):
    if images.ndim != 4 or images.shape[1:] != (*config.input_size, 3):
        raise DataError(f"expected images of shape (b, {config.input_size[0]}, "
                        f"{config.input_size[1]}, 3), got {images.shape}")


# ---------------------------------------------------------------------------
# encoder r

def encode_forward(params: Parameters, images: np.ndarray):
    cfg = params.config
    _check_images(cfg, images)
    dtype = params["encoder.conv0.weight"].dtype
    x = np.ascontiguousarray(images.transpose(0, 3, 1, 2), dtype=dtype)
    caches = []
    for i, blk in enumerate(cfg.blocks):
        w = params[f"encoder.conv{i}.weight"]
        z, cc = conv_forward(x, w, params[f"encoder.conv{i}.bias"], blk.stride)
        x = ACTIVATIONS[blk.activation][0](z)
        caches.append((cc, x))
    reps = x.mean(axis=(2, 3))
    return reps, (caches, x.shape)


def encode(params: Parameters, images: np.ndarray, train_mode: bool = False) -> np.ndarray:
    """Representations ``r(X)``, shape ``(b, d)``.

    ``train_mode`` is accepted for symmetry with :func:`classify`; the encoder
    has no stochastic layers, so both modes give the same map.
    """
    return encode_forward(params, images)[0]


def encode_backward(params: Parameters, cache, dreps: np.ndarray) -> dict[str, np.ndarray]:
    caches, last_shape = cache
    b, c, h, w = last_shape
    dx = np.broadcast_to(dreps[:, :, None, None] / (h * w), last_shape)
    grads = {}
    for i in reversed(range(len(caches))):
        cc, y = caches[i]
        blk = params.config.blocks[i]
        dz = ACTIVATIONS[blk.activation][1](y, dx)
        wname = f"encoder.conv{i}.weight"
        dx, grads[wname], grads[f"encoder.conv{i}.bias"] = conv_backward(dz, params[wname], cc)
    return grads


# ---------------------------------------------------------------------------
# projection p

def normalize_rows(v: np.ndarray) -> np.ndarray:
    return v / (np.linalg.norm(v, axis=1, keepdims=True) + NORM_EPS)


def normalize_rows_backward(v: np.ndarray, dz: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=1, keepdims=True)
    denom = n + NORM_EPS
    safe_n = np.where(n > 0, n, 1.0)
    radial = (v * dz).sum(axis=1, keepdims=True) / (safe_n * denom * denom)
    return dz / denom - np.where(n > 0, v * radial, 0.0)


def project_forward(params: Parameters, reps: np.ndarray):
    v = reps @ params["projection.weight"] + params["projection.bias"]
    return normalize_rows(v), (reps, v)


def project(params: Parameters, reps: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings ``p(x)``: one affine layer, then row normalization."""
    return project_forward(params, reps)[0]


def project_backward(params: Parameters, cache, dz: np.ndarray):
    reps, v = cache
    dv = normalize_rows_backward(v, dz)
    grads = {"projection.weight": reps.T @ dv, "projection.bias": dv.sum(axis=0)}
    return grads, dv @ params["projection.weight"].T


# ---------------------------------------------------------------------------
# classifier c

def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def classify_forward(params: Parameters, reps: np.ndarray, train_mode: bool = False,
                     rng: np.random.Generator | None = None):
    h_pre = reps @ params["classifier.fc1.weight"] + params["classifier.fc1.bias"]
    h = _relu(h_pre)
    mask = None
    rate = params.config.dropout
    if train_mode and rate > 0:
        if rng is None:
            raise ConfigError("train-mode classification needs an rng for dropout")
        # inverted dropout keeps the eval-mode map unscaled
        mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
        h = h * mask
    logits = h @ params["classifier.fc2.weight"] + params["classifier.fc2.bias"]
    probs = softmax(logits)
    return probs, (reps, h, mask, probs)


def classify(params: Parameters, reps: np.ndarray, train_mode: bool = False,
             rng: np.random.Generator | None = None) -> np.ndarray:
    return classify_forward(params, reps, train_mode, rng)[0]


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    return probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))


def classify_backward(params: Parameters, cache, dprobs: np.ndarray):
    reps, h, mask, probs = cache
    dlogits = softmax_backward(probs, dprobs)
    grads = {
        "classifier.fc2.weight": h.T @ dlogits,
        "classifier.fc2.bias": dlogits.sum(axis=0),
    }
    dh = dlogits @ params["classifier.fc2.weight"].T
    if mask is not None:
        dh = dh * mask
    dh = dh * (h > 0)
    grads["classifier.fc1.weight"] = reps.T @ dh
    grads["classifier.fc1.bias"] = dh.sum(axis=0)
    return grads, dh @ params["classifier.fc1.weight"].T


def encode_batched(params: Parameters, images: np.ndarray, batch: int = 256) -> np.ndarray:
    """Eval-mode representations for a large array, computed in chunks."""
    out = [encode(params, images[i:i + batch]) for i in range(0, len(images), batch)]
    return np.concatenate(out) if out else np.zeros((0, params.config.rep_dim))


# ---------------------------------------------------------------------------
# checkpoint container: u64 header length, JSON header, little-endian float32 payload

_MAGIC = b"GREPCKPT"


def save_checkpoint(params: Parameters, path, extra: dict | None = None) -> None:
    entries, offset, blobs = [], 0, []
    for name in params.tensors:
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"config": params.config.to_json(), "trainable": params.trainable,
              "tensors": entries, "extra": extra or {}}
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, dtype=np.float64) -> Parameters:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != _MAGIC:
        raise DataError(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n])
    base = 16 + n
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=base + e["offset"])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(dtype)
    return Parameters(ModelConfig.from_json(header["config"]), tensors, dict(header["trainable"]))


def read_checkpoint_extra(path) -> dict:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", raw[8:16])
    return json.loads(raw[16:16 + n]).get("extra", {})
