"""Fused pair features and the residual MLP association classifier."""

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Collection, Iterable, Optional, Sequence

import numpy as np
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import train_test_split

from .config import TrainConfig
from .embed import EmbeddingProvider, embed_many
from .errors import DataError
from .mining import key_text
from .models import LabeledPair, PairStats
from .seeds import substream

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class AssociationError(DataError):
    """Features or training pairs are invalid."""

    pass


class ModelFormatError(DataError):
    """A model file is missing, corrupted or of another format version."""

    pass


class TrainingError(DataError):
    """Training cannot proceed (single class, non-finite loss)."""

    pass


def fuse(w_i, w_j) -> np.ndarray:
    """[w_i | w_j | cos(w_i, w_j) | w_i * w_j], length 3d+1."""
    w_i = np.asarray(w_i, dtype=np.float64)
    w_j = np.asarray(w_j, dtype=np.float64)
    if w_i.shape != w_j.shape or w_i.ndim != 1:
        raise AssociationError(f"Cannot fuse vectors of shapes {w_i.shape} and {w_j.shape}")
    return fuse_batch(w_i[None, :], w_j[None, :])[0]


def fuse_batch(W_i: np.ndarray, W_j: np.ndarray) -> np.ndarray:
    """Row-wise fuse of two (N, d) matrices."""
    if W_i.shape != W_j.shape:
        raise AssociationError(f"Cannot fuse matrices of shapes {W_i.shape} and {W_j.shape}")
    norms = np.linalg.norm(W_i, axis=1) * np.linalg.norm(W_j, axis=1)
    dots = np.einsum("ij,ij->i", W_i, W_j)
    cos = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
    cos = np.clip(cos, -1.0, 1.0)
    return np.concatenate([W_i, W_j, cos[:, None], W_i * W_j], axis=1)


def sample_negatives(
    items: Iterable[str],
    positives: Iterable[PairStats | tuple[str, str]],
    ratio: int,
    seed: int,
    cooccurring: Collection[tuple[str, str]] = (),
) -> list[LabeledPair]:
    """
    Uniformly sample unordered item pairs that never co-occur and are not positive.

    ``cooccurring`` holds sorted pairs seen together in some transaction.
    Sample size is min(ratio * |positives|, available candidates).

    Raises:
        AssociationError: ratio < 1 or no candidate exists
    """
    if ratio < 1:
        raise AssociationError(f"Negative ratio must be >= 1, got {ratio}")

    positive_pairs = set()
    for positive in positives:
        a, b = (positive.item_a, positive.item_b) if isinstance(positive, PairStats) else positive
        positive_pairs.add((a, b) if a < b else (b, a))

    blocked = set(cooccurring) | positive_pairs
    candidates = [
        pair for pair in combinations(sorted(set(items)), 2) if pair not in blocked
    ]
    if not candidates:
        raise AssociationError("No negative candidates: every pair of frequent items co-occurs")

    count = min(ratio * len(positive_pairs), len(candidates))
    rng = substream(seed, "negatives")
    chosen = np.sort(rng.choice(len(candidates), size=count, replace=False))
    negatives = [LabeledPair(candidates[i][0], candidates[i][1], 0) for i in chosen]
    logger.info(f"Sampled {len(negatives)} negatives from {len(candidates)} candidates")
    return negatives


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy computed from logits without overflow."""
    return float(np.mean(
        np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    ))


@dataclass
class AssociationClassifier:
    """
    Residual MLP: dense → relu, two residual blocks h + relu(hW + b), dense → logit.

    Dropout (inverted) follows each hidden output during training only.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_dim: int
    hidden_dim: int
    dropout: float = 0.4
    seed: int = 0

    @classmethod
    def initialize(
        cls, input_dim: int, hidden_dim: int = 128, dropout: float = 0.4, seed: int = 0
    ) -> "AssociationClassifier":
        """Uniform(±1/sqrt(fan_in)) weights, zero biases."""
        rng = substream(seed, "init")
        shapes = [(input_dim, hidden_dim), (hidden_dim, hidden_dim),
                  (hidden_dim, hidden_dim), (hidden_dim, 1)]
        weights = []
        for fan_in, fan_out in shapes:
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases = [np.zeros(fan_out) for _, fan_out in shapes]
        return cls(weights, biases, input_dim, hidden_dim, dropout, seed)

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters in update order: W1, b1, W2, b2, W3, b3, W4, b4."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "AssociationClassifier":
        return AssociationClassifier(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            self.input_dim, self.hidden_dim, self.dropout, self.seed,
        )

    def sample_masks(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
        keep = 1.0 - self.dropout
        return tuple(
            (rng.random((n, self.hidden_dim)) < keep) / keep for _ in range(3)
        )

    def forward(
        self, X: np.ndarray, masks: Optional[tuple[np.ndarray, ...]] = None
    ) -> tuple[np.ndarray, dict]:
        """Logits of shape (N,) plus the activations needed for backward."""
        W1, W2, W3, W4 = self.weights
        b1, b2, b3, b4 = self.biases

        z1 = X @ W1 + b1
        h1 = np.maximum(z1, 0)
        if masks is not None:
            h1 = h1 * masks[0]

        z2 = h1 @ W2 + b2
        h2 = h1 + np.maximum(z2, 0)
        if masks is not None:
            h2 = h2 * masks[1]

        z3 = h2 @ W3 + b3
        h3 = h2 + np.maximum(z3, 0)
        if masks is not None:
            h3 = h3 * masks[2]

        logits = (h3 @ W4 + b4)[:, 0]
        cache = {"X": X, "z1": z1, "h1": h1, "z2": z2, "h2": h2, "z3": z3, "h3": h3, "masks": masks}
        return logits, cache

    def backward(self, dlogits: np.ndarray, cache: dict) -> list[np.ndarray]:
        """Gradients matching ``params`` given dLoss/dlogit per example."""
        W1, W2, W3, W4 = self.weights
        masks = cache["masks"]
        dout = dlogits[:, None]

        dW4 = cache["h3"].T @ dout
        db4 = dout.sum(axis=0)
        dh3 = dout @ W4.T
        if masks is not None:
            dh3 = dh3 * masks[2]

        dz3 = dh3 * (cache["z3"] > 0)
        dW3 = cache["h2"].T @ dz3
        db3 = dz3.sum(axis=0)
        dh2 = dh3 + dz3 @ W3.T
        if masks is not None:
            dh2 = dh2 * masks[1]

        dz2 = dh2 * (cache["z2"] > 0)
        dW2 = cache["h1"].T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dh2 + dz2 @ W2.T
        if masks is not None:
            dh1 = dh1 * masks[0]

        dz1 = dh1 * (cache["z1"] > 0)
        dW1 = cache["X"].T @ dz1
        db1 = dz1.sum(axis=0)
        return [dW1, db1, dW2, db2, dW3, db3, dW4, db4]

    def loss_and_grads(
        self, X: np.ndarray, y: np.ndarray, masks: Optional[tuple[np.ndarray, ...]] = None
    ) -> tuple[float, list[np.ndarray]]:
        logits, cache = self.forward(X, masks)
        loss = bce_with_logits(logits, y)
        grads = self.backward((sigmoid(logits) - y) / len(y), cache)
        return loss, grads

    def logits(self, X: np.ndarray) -> np.ndarray:
        """Inference-mode logits (dropout off)."""
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise AssociationError(
                f"Model expects {self.input_dim} input features, got shape {X.shape}"
            )
        return self.forward(X)[0]

    def predict_batch(self, W_i: np.ndarray, W_j: np.ndarray) -> np.ndarray:
        """Symmetrized probabilities for rows of two (N, d) embedding matrices."""
        W_i = np.asarray(W_i, dtype=np.float64)
        W_j = np.asarray(W_j, dtype=np.float64)
        if W_i.ndim != 2 or W_i.shape != W_j.shape or 3 * W_i.shape[1] + 1 != self.input_dim:
            raise AssociationError(
                f"Vectors of shape {W_i.shape}/{W_j.shape} do not match model input dim {self.input_dim}"
            )
        forward = sigmoid(self.logits(fuse_batch(W_i, W_j)))
        backward = sigmoid(self.logits(fuse_batch(W_j, W_i)))
        return 0.5 * (forward + backward)


class AdamW:
    """Adam with decoupled weight decay on the weight matrices."""

    def __init__(self, params: list[np.ndarray], config: TrainConfig):
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.adam_eps
        self.weight_decay = config.weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for index, (p, g) in enumerate(zip(params, grads)):
            if p.ndim == 2 and self.weight_decay:
                p -= lr * self.weight_decay * p
            self.m[index] = self.beta1 * self.m[index] + (1 - self.beta1) * g
            self.v[index] = self.beta2 * self.v[index] + (1 - self.beta2) * g * g
            m_hat = self.m[index] / correction1
            v_hat = self.v[index] / correction2
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    val_auc: Optional[float]
    lr: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_auc": self.val_auc,
            "lr": self.lr,
        }


@dataclass
class TrainingLog:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: Optional[int] = None
    n_train: int = 0
    n_val: int = 0

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "epochs": [entry.to_dict() for entry in self.epochs],
        }


def pair_features(
    pairs: Sequence[LabeledPair], provider: EmbeddingProvider
) -> tuple[np.ndarray, np.ndarray]:
    """Fused feature matrix and label vector for labeled item pairs."""
    texts = [key_text(item) for pair in pairs for item in (pair.item_a, pair.item_b)]
    vectors = embed_many(provider, texts)
    W_i = np.array([vectors[key_text(pair.item_a)] for pair in pairs])
    W_j = np.array([vectors[key_text(pair.item_b)] for pair in pairs])
    y = np.array([pair.label for pair in pairs], dtype=np.float64)
    return fuse_batch(W_i, W_j), y


def _split(y: np.ndarray, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    indices = np.arange(len(y))
    n_val = math.ceil(val_fraction * len(y))
    if val_fraction <= 0 or n_val == 0 or len(y) - n_val < 2:
        return indices, np.array([], dtype=int)

    class_counts = np.bincount(y.astype(int), minlength=2)
    stratify = y if class_counts.min() >= 2 and n_val >= 2 and len(y) - n_val >= 2 else None
    random_state = int(substream(seed, "split").integers(2 ** 31 - 1))
    train_idx, val_idx = train_test_split(
        indices, test_size=n_val, random_state=random_state, stratify=stratify
    )
    return np.sort(train_idx), np.sort(val_idx)


def _balanced_batches(
    y: np.ndarray, batch_size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Batches with equal positive and negative counts; the minority class is resampled."""
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    half = max(1, batch_size // 2)
    majority = max(len(pos), len(neg))
    n_batches = math.ceil(majority / half)

    def stream(indices: np.ndarray) -> np.ndarray:
        if len(indices) == majority:
            return rng.permutation(indices)
        return indices[rng.integers(0, len(indices), size=majority)]

    pos_stream, neg_stream = stream(pos), stream(neg)
    return [
        np.concatenate([pos_stream[b * half:(b + 1) * half], neg_stream[b * half:(b + 1) * half]])
        for b in range(n_batches)
    ]


def _eval_metrics(model: AssociationClassifier, X: np.ndarray, y: np.ndarray) -> tuple[float, Optional[float]]:
    logits = model.logits(X)
    loss = bce_with_logits(logits, y)
    auc = float(roc_auc_score(y, logits)) if len(np.unique(y)) == 2 else None
    return loss, auc


def train(
    pairs: Sequence[LabeledPair],
    provider: EmbeddingProvider,
    config: TrainConfig,
    seed: int = 0,
) -> tuple[AssociationClassifier, TrainingLog]:
    """
    Train the classifier on labeled pairs.

    Returns the parameters with the best validation loss (the last epoch's
    when there is no validation split) and the per-epoch log.

    Raises:
        TrainingError: Single-class input or a non-finite loss
    """
    labels = {pair.label for pair in pairs}
    if labels != {0, 1}:
        raise TrainingError(f"Training needs positive and negative pairs, got labels {sorted(labels)}")

    X, y = pair_features(pairs, provider)
    train_idx, val_idx = _split(y, config.val_fraction, seed)
    X_train, y_train = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]
    if len(np.unique(y_train)) < 2:
        raise TrainingError("Training split lost one of the classes; add more pairs")

    model = AssociationClassifier.initialize(X.shape[1], config.hidden_dim, config.dropout, seed)
    optimizer = AdamW(model.params, config)
    batch_rng = substream(seed, "batches")
    dropout_rng = substream(seed, "dropout")

    log = TrainingLog(n_train=len(y_train), n_val=len(y_val))
    lr = config.lr
    best_loss = math.inf
    plateau_best = math.inf
    stalled = 0
    best_model = model.copy()

    logger.info(
        f"Training on {len(y_train)} pairs ({int(y_train.sum())} positive), "
        f"validating on {len(y_val)}, input dim {X.shape[1]}"
    )

    for epoch in range(1, config.epochs + 1):
        batch_losses = []
        for batch_number, batch in enumerate(_balanced_batches(y_train, config.batch_size, batch_rng), start=1):
            masks = model.sample_masks(len(batch), dropout_rng) if model.dropout > 0 else None
            loss, grads = model.loss_and_grads(X_train[batch], y_train[batch], masks)
            if not math.isfinite(loss):
                largest = max(float(np.max(np.abs(p))) for p in model.params)
                raise TrainingError(
                    f"Non-finite training loss at epoch {epoch}, batch {batch_number} "
                    f"(lr={lr:g}, largest |param|={largest:g})"
                )
            optimizer.step(model.params, grads, lr)
            batch_losses.append(loss)

        train_loss = float(np.mean(batch_losses))
        val_loss, val_auc = (None, None)
        if len(y_val):
            val_loss, val_auc = _eval_metrics(model, X_val, y_val)
            if not math.isfinite(val_loss):
                raise TrainingError(f"Non-finite validation loss at epoch {epoch} (lr={lr:g})")

        log.epochs.append(EpochLog(epoch, train_loss, val_loss, val_auc, lr))
        logger.debug(f"Epoch {epoch}: train {train_loss:.4f}, val {val_loss}, auc {val_auc}, lr {lr:g}")

        if val_loss is None:
            continue

        if val_loss < best_loss:
            best_loss = val_loss
            best_model = model.copy()
            log.best_epoch = epoch

        if val_loss < plateau_best - config.min_improvement:
            plateau_best = val_loss
            stalled = 0
        else:
            stalled += 1
            if stalled >= config.patience:
                lr *= config.plateau_factor
                stalled = 0
                logger.info(f"Validation loss stalled for {config.patience} epochs, lr now {lr:g}")

    if not len(y_val):
        best_model = model
        log.best_epoch = config.epochs

    final = log.epochs[log.best_epoch - 1]
    logger.info(
        f"Training finished: best epoch {log.best_epoch}, val loss {final.val_loss}, val AUC {final.val_auc}"
    )
    return best_model, log


def predict(model: AssociationClassifier, w_i, w_j) -> float:
    """Association probability, averaged over both argument orders."""
    return float(model.predict_batch(np.atleast_2d(w_i), np.atleast_2d(w_j))[0])


def save_model(model: AssociationClassifier, path: Path) -> None:
    """Write the model as JSON atomically."""
    path = Path(path)
    data = {
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "seed": model.seed,
        "dropout": model.dropout,
        "layers": [
            {"weight": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.parent / f"{path.name}.tmp"
    try:
        with open(tmp_path, 'w', encoding='utf-8') as f:
            json.dump(data, f, separators=(",", ":"))
        tmp_path.replace(path)
        logger.info(f"Saved association model to {path}")
    except IOError as e:
        logger.error(f"Failed to save model to {path}: {e}")
        if tmp_path.exists():
            tmp_path.unlink()
        raise


def load_model(path: Path) -> AssociationClassifier:
    """
    Read a model written by save_model.

    Raises:
        ModelFormatError: Missing, truncated/corrupted, or version mismatch
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ModelFormatError(f"Model file not found: {path}")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"Model file {path} is corrupted: {e}")

    if not isinstance(data, dict):
        raise ModelFormatError(f"Model file {path} is corrupted: expected an object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"Model file {path} has format version {version}, expected {FORMAT_VERSION}"
        )

    try:
        input_dim = int(data["input_dim"])
        hidden_dim = int(data["hidden_dim"])
        layers = data["layers"]
        weights = [np.asarray(layer["weight"], dtype=np.float64) for layer in layers]
        biases = [np.asarray(layer["bias"], dtype=np.float64) for layer in layers]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Model file {path} is corrupted: {e}")

    expected = [(input_dim, hidden_dim), (hidden_dim, hidden_dim), (hidden_dim, hidden_dim), (hidden_dim, 1)]
    if [w.shape for w in weights] != expected or [b.shape for b in biases] != [(s[1],) for s in expected]:
        raise ModelFormatError(f"Model file {path} has inconsistent layer shapes")
    if not all(np.all(np.isfinite(p)) for p in weights + biases):
        raise ModelFormatError(f"Model file {path} holds non-finite weights")

    return AssociationClassifier(
        weights, biases, input_dim, hidden_dim,
        float(data.get("dropout", 0.4)), int(data.get("seed", 0)),
    )
