"""Network assemblies and the training loop.

Two classifiers share one training interface:

* EmbeddingFusionNet: embeds padded token indices, flattens, runs the
  result through two PReLU-activated dense layers down to a 16-wide latent
  vector, maps standardized numerics through one PReLU-activated dense
  layer to the same width, adds the two branch outputs elementwise,
  applies a final PReLU, and classifies from the fused vector.
* BaselineMlp: three dense layers with PReLU after the first two, fed the
  standardized numerics concatenated with one frequency-encoded value per
  categorical column.

Training is mini-batch Adam with a seeded shuffle per epoch, epoch-level
validation, and early stopping that restores the best-epoch snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .nn import Adam, Embedding, Linear, Param, PReLU, softmax, softmax_cross_entropy
from .preprocess import PreprocessState
from .schema import DataTable


def snapshot_params(params: list[Param]) -> list[np.ndarray]:
    return [p.value.copy() for p in params]


def restore_params(params: list[Param], snapshot: list[np.ndarray]) -> None:
    for p, saved in zip(params, snapshot):
        p.value[...] = saved


class EmbeddingFusionNet:
    """Token-embedding branch fused with a numeric branch by addition.

    Args:
        vocab_size: total offset-combined vocabulary size (embedding rows).
        token_width: number of padded token positions per row (S).
        n_numeric: numeric feature count (N).
        n_classes: output classes (K).
        embed_dim: embedding width d, default 16.
        hidden_width: width of the first categorical dense layer, default 32.
        fused_width: width both branches are projected to, default 16.
        seed: initialization seed.
        preprocess_fingerprint: fingerprint of the state this model expects.
    """

    kind = "fusion"

    def __init__(
        self,
        vocab_size: int,
        token_width: int,
        n_numeric: int,
        n_classes: int,
        embed_dim: int = 16,
        hidden_width: int = 32,
        fused_width: int = 16,
        seed: int = 0,
        preprocess_fingerprint: str = "",
    ):
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        rng = np.random.default_rng(seed)
        self.embedding = Embedding(max(vocab_size, 1), embed_dim, rng, "embedding")
        self.cat_linear1 = Linear(token_width * embed_dim, hidden_width, rng, "cat1")
        self.cat_act1 = PReLU("cat1.act")
        self.cat_linear2 = Linear(hidden_width, fused_width, rng, "cat2")
        self.cat_act2 = PReLU("cat2.act")
        self.num_linear = Linear(n_numeric, fused_width, rng, "num")
        self.num_act = PReLU("num.act")
        self.fusion_act = PReLU("fusion.act")
        self.classifier = Linear(fused_width, n_classes, rng, "classifier")
        self.token_width = token_width
        self.n_numeric = n_numeric
        self.n_classes = n_classes
        self.embed_dim = embed_dim
        self.preprocess_fingerprint = preprocess_fingerprint
        self._shape = None

    def params(self) -> list[Param]:
        out = []
        for layer in (
            self.embedding,
            self.cat_linear1,
            self.cat_act1,
            self.cat_linear2,
            self.cat_act2,
            self.num_linear,
            self.num_act,
            self.fusion_act,
            self.classifier,
        ):
            out.extend(layer.params())
        return out

    def forward(self, numeric: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        emb = self.embedding.forward(tokens)
        self._shape = emb.shape
        flat = emb.reshape(emb.shape[0], -1)
        c = self.cat_act1.forward(self.cat_linear1.forward(flat))
        c = self.cat_act2.forward(self.cat_linear2.forward(c))
        n = self.num_act.forward(self.num_linear.forward(numeric))
        fused = self.fusion_act.forward(c + n)
        return self.classifier.forward(fused)

    def backward(self, grad_logits: np.ndarray) -> None:
        d_fused = self.fusion_act.backward(self.classifier.backward(grad_logits))
        # the addition node fans the same gradient into both branches
        self.num_linear.backward(self.num_act.backward(d_fused))
        d_c = self.cat_linear2.backward(self.cat_act2.backward(d_fused))
        d_flat = self.cat_linear1.backward(self.cat_act1.backward(d_c))
        self.embedding.backward(d_flat.reshape(self._shape))

    def predict_proba(self, numeric: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        return softmax(self.forward(numeric, tokens))


class BaselineMlp:
    """Plain MLP over numerics plus per-column frequency-encoded categoricals."""

    kind = "baseline"

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        hidden1: int = 64,
        hidden2: int = 32,
        seed: int = 0,
        preprocess_fingerprint: str = "",
    ):
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        rng = np.random.default_rng(seed)
        self.linear1 = Linear(n_features, hidden1, rng, "mlp1")
        self.act1 = PReLU("mlp1.act")
        self.linear2 = Linear(hidden1, hidden2, rng, "mlp2")
        self.act2 = PReLU("mlp2.act")
        self.linear3 = Linear(hidden2, n_classes, rng, "mlp3")
        self.n_features = n_features
        self.n_classes = n_classes
        self.preprocess_fingerprint = preprocess_fingerprint

    def params(self) -> list[Param]:
        out = []
        for layer in (self.linear1, self.act1, self.linear2, self.act2, self.linear3):
            out.extend(layer.params())
        return out

    def forward(self, features: np.ndarray) -> np.ndarray:
        h = self.act1.forward(self.linear1.forward(features))
        h = self.act2.forward(self.linear2.forward(h))
        return self.linear3.forward(h)

    def backward(self, grad_logits: np.ndarray) -> None:
        d = self.act2.backward(self.linear3.backward(grad_logits))
        d = self.act1.backward(self.linear2.backward(d))
        self.linear1.backward(d)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.forward(features))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    min_improvement: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, and patience must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "min_improvement": self.min_improvement,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass
class TrainLog:
    """Per-epoch history; epochs are 1-based."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    val_accuracies: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def to_csv_text(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_accuracy"]
        rows = zip(self.train_losses, self.val_losses, self.val_accuracies)
        for i, (tl, vl, va) in enumerate(rows, start=1):
            lines.append(f"{i},{tl!r},{vl!r},{va!r}")
        return "\n".join(lines) + "\n"


class EarlyStopper:
    """Stop when validation loss fails to improve for `patience` epochs.

    Improvement means a decrease of more than `min_improvement` below the
    best loss seen, which avoids stalling on float jitter.
    """

    def __init__(self, patience: int, min_improvement: float = 1e-6):
        self.patience = patience
        self.min_improvement = min_improvement
        self.best_loss = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, val_loss: float, epoch: int) -> bool:
        """Record one epoch's validation loss; returns True to stop."""
        if val_loss < self.best_loss - self.min_improvement:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved(self) -> bool:
        return self.bad_epochs == 0


def train(
    model,
    train_inputs: tuple[np.ndarray, ...],
    train_labels: np.ndarray,
    val_inputs: tuple[np.ndarray, ...],
    val_labels: np.ndarray,
    config: TrainConfig,
):
    """Mini-batch Adam with early stopping; restores the best-epoch snapshot.

    Inputs are tuples of arrays aligned on axis 0 and splatted into
    ``model.forward``. The model is mutated in place; on return its
    parameters are the snapshot from the epoch with the lowest validation
    loss.

    Returns:
        (model, TrainLog)

    Raises:
        DataError: empty training or validation data.
        NumericError: loss became non-finite.
    """
    n = len(train_labels)
    if n == 0 or len(val_labels) == 0:
        raise DataError("training and validation sets must be non-empty")
    params = model.params()
    optimizer = Adam(params, learning_rate=config.learning_rate)
    stopper = EarlyStopper(config.patience, config.min_improvement)
    rng = np.random.default_rng(config.seed)
    log = TrainLog()
    best_snapshot = snapshot_params(params)

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch = tuple(a[idx] for a in train_inputs)
            logits = model.forward(*batch)
            loss, grad = softmax_cross_entropy(logits, train_labels[idx])
            if not np.isfinite(loss):
                raise NumericError(
                    f"training loss became non-finite at epoch {epoch}"
                )
            optimizer.zero_grad()
            model.backward(grad)
            optimizer.step()
            loss_sum += loss * len(idx)
        log.train_losses.append(loss_sum / n)

        val_logits = model.forward(*val_inputs)
        val_loss, _ = softmax_cross_entropy(val_logits, val_labels)
        if not np.isfinite(val_loss):
            raise NumericError(f"validation loss became non-finite at epoch {epoch}")
        log.val_losses.append(val_loss)
        log.val_accuracies.append(
            float((val_logits.argmax(axis=1) == val_labels).mean())
        )

        should_stop = stopper.update(val_loss, epoch)
        if stopper.improved:
            best_snapshot = snapshot_params(params)
        log.stopped_epoch = epoch
        if should_stop:
            break

    restore_params(params, best_snapshot)
    log.best_epoch = stopper.best_epoch
    return model, log


@dataclass(frozen=True)
class FrequencyEncoder:
    """Per categorical column, maps a raw value to its training frequency.

    Values are imputed with the fitted mode, then lowercased, so casing
    differences collapse to one category. Values unseen in the training
    split encode to 0.0. Frequencies over a fitted column sum to 1.
    """

    columns: tuple[str, ...]
    tables: dict[str, dict[str, float]]
    modes: dict[str, str]

    @classmethod
    def fit(
        cls, table: DataTable, state: PreprocessState, row_indices: np.ndarray
    ) -> "FrequencyEncoder":
        """Count value frequencies over the given rows (the training split)."""
        rows = set(int(i) for i in row_indices)
        if not rows:
            raise DataError("frequency encoder needs at least one row")
        columns = state.categorical_columns
        tables = {}
        modes = {}
        for name in columns:
            mode = state.vocabularies[name].mode_value
            modes[name] = mode
            counts: dict[str, int] = {}
            total = 0
            for r, cell in enumerate(table.column(name)):
                if r not in rows:
                    continue
                value = (cell if cell is not None else mode).lower()
                counts[value] = counts.get(value, 0) + 1
                total += 1
            tables[name] = {v: c / total for v, c in counts.items()}
        return cls(columns, tables, modes)

    def encode(self, table: DataTable) -> np.ndarray:
        """One column per fitted categorical column, shape (rows, C)."""
        out = np.zeros((table.row_count, len(self.columns)), dtype=np.float64)
        for j, name in enumerate(self.columns):
            freq = self.tables[name]
            mode = self.modes[name]
            for r, cell in enumerate(table.column(name)):
                value = (cell if cell is not None else mode).lower()
                out[r, j] = freq.get(value, 0.0)
        return out

    def to_json_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "tables": self.tables,
            "modes": self.modes,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FrequencyEncoder":
        return cls(
            tuple(doc["columns"]),
            {k: dict(v) for k, v in doc["tables"].items()},
            dict(doc["modes"]),
        )
