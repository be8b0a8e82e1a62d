"""Lightweight embedding classifier: hand-derived SGD, FedAvg, metrics.

Two fixed architectures over P-dimensional embeddings: a linear softmax
head (hidden_dim=0) and a one-hidden-layer ReLU MLP. Gradients are
derived by hand; no autodiff. Checkpoints use the GEOW1 binary format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .container import EmbeddingSet
from .errors import (
    ArchMismatch,
    BadMagic,
    DimensionMismatch,
    EmptyTestSet,
    IoError,
    MissingShape,
    NonFiniteLoss,
    TruncatedFile,
)
from .geometry import GeometricShape
from .longtail import ggeur_layer, inverse_sampling_probs

CHECKPOINT_MAGIC = b"GEOW1"


@dataclass(frozen=True)
class ClassifierParams:
    """Weights for the linear head (W, b) or MLP (W1, b1, W2, b2)."""

    input_dim: int
    hidden_dim: int  # 0 -> linear head
    num_classes: int
    tensors: tuple[np.ndarray, ...]

    def __post_init__(self):
        for t in self.tensors:
            if not np.isfinite(t).all():
                raise ArchMismatch("non-finite parameter tensor")
        expect = _tensor_shapes(self.input_dim, self.hidden_dim, self.num_classes)
        got = tuple(t.shape for t in self.tensors)
        if got != expect:
            raise ArchMismatch(f"tensor shapes {got} do not match descriptor {expect}")


def _tensor_shapes(p: int, h: int, c: int) -> tuple[tuple[int, ...], ...]:
    if h == 0:
        return ((p, c), (c,))
    return ((p, h), (h,), (h, c), (c,))


def init_params(
    input_dim: int, hidden_dim: int, num_classes: int, seed: int = 0
) -> ClassifierParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, seeded."""
    rng = np.random.default_rng(seed)
    tensors = []
    for shape in _tensor_shapes(input_dim, hidden_dim, num_classes):
        fan_in = shape[0] if len(shape) == 2 else 1
        bound = 1.0 / np.sqrt(fan_in)
        tensors.append(rng.uniform(-bound, bound, size=shape))
    return ClassifierParams(input_dim, hidden_dim, num_classes, tuple(tensors))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    sampler: str = "uniform"  # uniform | inverse_frequency
    ggeur_shapes: dict[int, GeometricShape] | None = None
    ggeur_scale_mode: str = "lambda"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid TrainConfig")
        if self.sampler not in ("uniform", "inverse_frequency"):
            raise ValueError(f"unknown sampler {self.sampler!r}")


@dataclass(frozen=True)
class EvalReport:
    top1_overall: float  # percent
    per_class: dict[int, float]
    per_domain: dict[int, float]
    domain_std: float
    band_accuracy: dict[str, float]  # head / middle / tail, NaN if band empty

    def to_dict(self) -> dict:
        return {
            "top1_overall": self.top1_overall,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "per_domain": {str(k): v for k, v in sorted(self.per_domain.items())},
            "domain_std": self.domain_std,
            "band_accuracy": dict(self.band_accuracy),
        }


def _forward(params: ClassifierParams, x: np.ndarray):
    """Returns (logits, hidden activation or None)."""
    if params.hidden_dim == 0:
        w, b = params.tensors
        return x @ w + b, None
    w1, b1, w2, b2 = params.tensors
    h = np.maximum(x @ w1 + b1, 0.0)
    return h @ w2 + b2, h


def predict(params: ClassifierParams, x: np.ndarray) -> np.ndarray:
    logits, _ = _forward(params, np.asarray(x, dtype=np.float64))
    return np.argmax(logits, axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    params: ClassifierParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, tuple[np.ndarray, ...]]:
    """Mean softmax cross-entropy and its gradient w.r.t. every tensor."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    logits, hidden = _forward(params, x)
    probs = _softmax(logits)
    loss = float(-np.log(probs[np.arange(n), y] + 1e-300).mean())
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    if params.hidden_dim == 0:
        return loss, (x.T @ dlogits, dlogits.sum(axis=0))
    w1, b1, w2, b2 = params.tensors
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dh = dlogits @ w2.T
    dh[hidden <= 0] = 0.0
    dw1 = x.T @ dh
    db1 = dh.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def _iter_batches(
    es: EmbeddingSet, cfg: TrainConfig, rng: np.random.Generator
):
    n = es.n
    n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
    if cfg.sampler == "uniform":
        order = rng.permutation(n)
        for b in range(n_batches):
            yield order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
    else:
        counts = es.class_counts()
        present = np.flatnonzero(counts)
        probs = inverse_sampling_probs(counts[present])
        per_class_idx = [es.class_indices(int(c)) for c in present]
        for _ in range(n_batches):
            classes = rng.choice(len(present), size=cfg.batch_size, p=probs)
            rows = np.array(
                [per_class_idx[c][rng.integers(len(per_class_idx[c]))] for c in classes]
            )
            yield rows


def train(
    train_set: EmbeddingSet, cfg: TrainConfig, init: ClassifierParams
) -> ClassifierParams:
    """Minibatch SGD on softmax cross-entropy. Deterministic under cfg.seed.

    With sampler=inverse_frequency, batches are drawn class-first under the
    inverse-frequency law. With ggeur_shapes set, each batch passes through
    the GGEUR layer before the forward pass.
    """
    if train_set.dim != init.input_dim or train_set.num_classes > init.num_classes:
        raise DimensionMismatch("train set does not match classifier descriptor")
    if cfg.ggeur_shapes is not None:
        missing = [c for c in cfg.ggeur_shapes if cfg.ggeur_shapes[c] is None]
        if missing:
            raise MissingShape(f"no shape for tail classes {missing}")
    rng = np.random.default_rng(cfg.seed)
    layer_rng = np.random.default_rng([cfg.seed, 0x47])
    tensors = [t.copy() for t in init.tensors]
    params = replace(init, tensors=tuple(tensors))
    x_all = train_set.rows_f64()
    y_all = train_set.labels.astype(np.int64)
    for _epoch in range(cfg.epochs):
        for batch_idx in _iter_batches(train_set, cfg, rng):
            xb = x_all[batch_idx]
            yb = y_all[batch_idx]
            if cfg.ggeur_shapes is not None:
                xb = ggeur_layer(
                    xb, yb, cfg.ggeur_shapes, layer_rng, cfg.ggeur_scale_mode
                )
            loss, grads = loss_and_grads(params, xb, yb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss diverged to {loss}")
            tensors = tuple(
                t - cfg.learning_rate * g for t, g in zip(params.tensors, grads)
            )
            params = replace(params, tensors=tensors)
    return params


def epoch_losses(
    train_set: EmbeddingSet, cfg: TrainConfig, init: ClassifierParams
) -> list[float]:
    """Full-dataset loss after each epoch (diagnostic for convergence tests)."""
    losses = []
    params = init
    for epoch in range(cfg.epochs):
        params = train(train_set, replace(cfg, epochs=1, seed=cfg.seed + epoch), params)
        loss, _ = loss_and_grads(params, train_set.rows_f64(), train_set.labels)
        losses.append(loss)
    return losses


def fedavg(
    params: list[ClassifierParams], weights: list[int | float]
) -> ClassifierParams:
    """Sample-count-weighted elementwise average of client parameters."""
    if not params:
        raise ArchMismatch("no parameters to average")
    head = params[0]
    for p in params[1:]:
        if (p.input_dim, p.hidden_dim, p.num_classes) != (
            head.input_dim,
            head.hidden_dim,
            head.num_classes,
        ):
            raise ArchMismatch("clients disagree on architecture")
    w = np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        raise ArchMismatch("total weight must be positive")
    w = w / w.sum()
    tensors = tuple(
        sum(wk * p.tensors[i] for wk, p in zip(w, params))
        for i in range(len(head.tensors))
    )
    return replace(head, tensors=tensors)


def evaluate(
    params: ClassifierParams,
    test_set: EmbeddingSet,
    band_thresholds: tuple[int, int] = (100, 20),
    train_counts: np.ndarray | None = None,
) -> EvalReport:
    """Top-1 accuracy overall, per class, per domain (+ population STD),
    and per head/middle/tail band (bands defined by training counts)."""
    if test_set.n == 0:
        raise EmptyTestSet("empty test set")
    preds = predict(params, test_set.data.astype(np.float64))
    correct = preds == test_set.labels.astype(np.int64)
    per_class = {}
    for c in range(test_set.num_classes):
        idx = test_set.class_indices(c)
        if len(idx):
            per_class[c] = 100.0 * float(correct[idx].mean())
    per_domain = {}
    for d in range(test_set.num_domains):
        idx = test_set.domain_indices(d)
        if len(idx):
            per_domain[d] = 100.0 * float(correct[idx].mean())
    dom_acc = np.array(list(per_domain.values()))
    band_acc: dict[str, float] = {}
    if train_counts is not None:
        hi, lo = band_thresholds
        bands = {
            "head": [c for c in per_class if train_counts[c] > hi],
            "middle": [c for c in per_class if lo <= train_counts[c] <= hi],
            "tail": [c for c in per_class if train_counts[c] < lo],
        }
        for name, classes in bands.items():
            if classes:
                idx = np.flatnonzero(np.isin(test_set.labels, classes))
                band_acc[name] = 100.0 * float(correct[idx].mean())
            else:
                band_acc[name] = float("nan")
    return EvalReport(
        top1_overall=100.0 * float(correct.mean()),
        per_class=per_class,
        per_domain=per_domain,
        domain_std=float(dom_acc.std()),  # population STD
        band_accuracy=band_acc,
    )


# --- GEOW1 checkpoints ----------------------------------------------------

def save_checkpoint(params: ClassifierParams, path: str | Path) -> None:
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += bytes([1])
    blob += struct.pack(
        "<III", params.input_dim, params.hidden_dim, params.num_classes
    )
    for t in params.tensors:
        blob += np.ascontiguousarray(t, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> ClassifierParams:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    if raw[:5] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not a GEOW1 checkpoint")
    p, h, c = struct.unpack_from("<III", raw, 6)
    off = 18
    tensors = []
    for shape in _tensor_shapes(p, h, c):
        count = int(np.prod(shape))
        if len(raw) < off + count * 8:
            raise TruncatedFile(f"{path}: truncated checkpoint")
        tensors.append(
            np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            .reshape(shape)
            .copy()
        )
        off += count * 8
    return ClassifierParams(p, h, c, tuple(tensors))
