"""Training procedures: end-to-end supervised training, contrastive
pretraining of encoder + projection, and classifier fitting on a frozen
encoder. All three share the Adam update and a deterministic batch stream."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import losses, model
from .dataset import AugmentationConfig, Corpus, augment_batch
from .errors import ConfigError, DataError, NumericError
from .model import ModelConfig, Parameters

log = logging.getLogger(__name__)

SUPERVISED = "supervised"
PRETRAIN = "contrastive-pretrain"
CLASSIFIER_FIT = "classifier-fit"
_STAGE_STREAM = {SUPERVISED: 11, PRETRAIN: 12, CLASSIFIER_FIT: 13}


@dataclass
class TrainConfig:
    batch: int = 64
    epochs: int = 10
    steps_per_epoch: int | None = None
    subsample_steps: bool = False
    lr: float = 1e-3
    decay_factor: float = 0.5
    decay_every: int = 3
    margin: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    record_time: bool = True

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            aug = {k: tuple(v) if isinstance(v, list) else v for k, v in self.augmentation.items()}
            self.augmentation = AugmentationConfig(**aug)
        if self.batch < 2:
            raise ConfigError("batch size must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1")
        if not (0 < self.decay_factor <= 1 and self.decay_every >= 1):
            raise ConfigError("decay rule needs 0 < factor <= 1 and period >= 1")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch: step decay every ``decay_every`` epochs."""
        return self.lr * self.decay_factor ** (epoch // self.decay_every)

    def steps_for(self, n_train: int) -> int:
        if self.steps_per_epoch is not None:
            return self.steps_per_epoch
        full = n_train // self.batch
        if self.subsample_steps:
            return max(1, n_train // (10 * self.batch))
        return full

    def to_json(self) -> dict:
        d = asdict(self)
        d["augmentation"] = asdict(self.augmentation)
        return d


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    loss: float
    train_acc: float | None
    val_acc: float | None
    seconds: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        self.records.append(rec)

    def extend(self, other: "TrainingHistory") -> None:
        self.records.extend(other.records)

    def losses(self, stage: str | None = None) -> list[float]:
        return [r.loss for r in self.records if stage is None or r.stage == stage]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)


def adam_step(params: Parameters, grads: dict[str, np.ndarray], state: OptimizerState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[Parameters, OptimizerState]:
    """One bias-corrected Adam update, in place, on trainable groups only."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in tensor {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        if not params.is_trainable(name):
            continue
        theta = params.tensors[name]
        if g.shape != theta.shape:
            raise DataError(f"gradient shape {g.shape} does not match {name} {theta.shape}")
        m = state.m.setdefault(name, np.zeros_like(theta))
        v = state.v.setdefault(name, np.zeros_like(theta))
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        theta -= update.astype(theta.dtype, copy=False)
    return params, state


# ---------------------------------------------------------------------------
# objectives with gradients

def supervised_objective(params: Parameters, images, labels, train_mode=False, rng=None):
    reps, ec = model.encode_forward(params, images)
    probs, cc = model.classify_forward(params, reps, train_mode, rng)
    loss = losses.cross_entropy(probs, labels).value
    dprobs = losses.cross_entropy_grad(probs, labels)
    grads, dreps = model.classify_backward(params, cc, dprobs)
    grads.update(model.encode_backward(params, ec, dreps))
    return loss, grads, probs


def contrastive_objective(params: Parameters, images, labels, margin=1.0):
    reps, ec = model.encode_forward(params, images)
    z, pc = model.project_forward(params, reps)
    loss = losses.contrastive_max_margin(z, labels, margin).value
    dz = losses.contrastive_max_margin_grad(z, labels, margin)
    grads, dreps = model.project_backward(params, pc, dz)
    grads.update(model.encode_backward(params, ec, dreps))
    return loss, grads, z


def classifier_objective(params: Parameters, reps, labels, train_mode=False, rng=None):
    probs, cc = model.classify_forward(params, reps, train_mode, rng)
    loss = losses.cross_entropy(probs, labels).value
    grads, _ = model.classify_backward(params, cc, losses.cross_entropy_grad(probs, labels))
    return loss, grads, probs


# ---------------------------------------------------------------------------
# loops

def _check_corpus(corpus: Corpus, what: str):
    if corpus is None or len(corpus) == 0:
        raise DataError(f"{what} split is empty")


def _batches(n: int, cfg: TrainConfig, rng: np.random.Generator):
    """Seeded shuffle, sequential batches, last partial batch dropped."""
    steps = cfg.steps_for(n)
    if n < cfg.batch:
        raise DataError(f"training split has {n} samples, fewer than one batch of {cfg.batch}")
    order = rng.permutation(n)
    full = n // cfg.batch
    for s in range(steps):
        if s % full == 0 and s > 0:
            order = rng.permutation(n)
        k = s % full
        yield order[k * cfg.batch:(k + 1) * cfg.batch]


def predict(params: Parameters, images: np.ndarray, batch: int = 256) -> np.ndarray:
    reps = model.encode_batched(params, images, batch)
    return model.classify(params, reps)


def _val_accuracy(params, val: Corpus | None):
    from .evaluate import accuracy
    if val is None or len(val) == 0:
        return None
    return accuracy(predict(params, val.images), val.genres)


def _run(stage, params, train, val, cfg, step_fn, out_dir=None, checkpoint_name=None):
    rng = np.random.default_rng([cfg.seed, _STAGE_STREAM[stage]])
    state = OptimizerState()
    history = TrainingHistory()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr_at(epoch)
        loss_sum, correct, seen, steps = 0.0, 0, 0, 0
        for idx in _batches(len(train), cfg, rng):
            x = augment_batch(train.images[idx], cfg.augmentation, rng)
            y = train.genres[idx]
            loss, grads, out = step_fn(params, x, y, rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at {stage} epoch {epoch + 1}")
            adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
            loss_sum += loss
            steps += 1
            if out is not None:
                correct += int((np.argmax(out, axis=1) == y).sum())
                seen += len(y)
        rec = EpochRecord(
            stage=stage,
            epoch=epoch + 1,
            loss=loss_sum / steps,
            train_acc=correct / seen if seen else None,
            val_acc=_val_accuracy(params, val) if stage != PRETRAIN else None,
            seconds=round(time.perf_counter() - t0, 3) if cfg.record_time else 0.0,
        )
        history.append(rec)
        log.info("%s epoch %d: loss %.4f train_acc %s val_acc %s", stage, rec.epoch, rec.loss,
                 rec.train_acc, rec.val_acc)
        if out_dir is not None:
            out_dir = Path(out_dir)
            model.save_checkpoint(params, out_dir / f"{checkpoint_name}-epoch{epoch + 1:02d}.ckpt",
                                  extra={"stage": stage, "epoch": epoch + 1})
            with open(out_dir / "history.jsonl", "a") as fh:
                fh.write(json.dumps(asdict(rec)) + "\n")
    return params, history


def train_fully_supervised(train: Corpus, val: Corpus, model_config: ModelConfig,
                           cfg: TrainConfig, out_dir=None) -> tuple[Parameters, TrainingHistory]:
    """Train encoder and classifier together on cross-entropy."""
    _check_corpus(train, "training")
    _check_corpus(val, "validation")
    params = model.init_params(model_config, cfg.seed, dtype=np.float32)
    params.trainable = {"encoder": True, "projection": False, "classifier": True}

    def step(p, x, y, rng):
        loss, grads, probs = supervised_objective(p, x, y, train_mode=True, rng=rng)
        return loss, grads, probs

    return _run(SUPERVISED, params, train, val, cfg, step, out_dir, "supervised")


def pretrain_contrastive(train: Corpus, model_config: ModelConfig, cfg: TrainConfig,
                         out_dir=None) -> tuple[Parameters, TrainingHistory]:
    """Train encoder and projection head on the max-margin pair loss."""
    _check_corpus(train, "training")
    params = model.init_params(model_config, cfg.seed, dtype=np.float32)
    params.trainable = {"encoder": True, "projection": True, "classifier": False}

    def step(p, x, y, rng):
        loss, grads, _ = contrastive_objective(p, x, y, cfg.margin)
        return loss, grads, None

    return _run(PRETRAIN, params, train, None, cfg, step, out_dir, "pretrain")


def fit_classifier_frozen(pretrained: Parameters, train: Corpus, val: Corpus,
                          cfg: TrainConfig, out_dir=None) -> tuple[Parameters, TrainingHistory]:
    """Fit the classifier on representations of a frozen encoder."""
    _check_corpus(train, "training")
    _check_corpus(val, "validation")
    params = pretrained.copy()
    params.trainable = {"encoder": False, "projection": False, "classifier": True}

    def step(p, x, y, rng):
        reps = model.encode(p, x)
        return classifier_objective(p, reps, y, train_mode=True, rng=rng)

    return _run(CLASSIFIER_FIT, params, train, val, cfg, step, out_dir, "contrastive")


def train_contrastive(train: Corpus, val: Corpus, model_config: ModelConfig,
                      cfg: TrainConfig, out_dir=None) -> tuple[Parameters, TrainingHistory]:
    """Both contrastive stages back to back."""
    pre, h1 = pretrain_contrastive(train, model_config, cfg, out_dir)
    params, h2 = fit_classifier_frozen(pre, train, val, cfg, out_dir)
    h1.extend(h2)
    return params, h1
