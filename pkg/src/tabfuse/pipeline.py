"""End-to-end orchestration: data -> preprocessing -> members -> evaluation.

This is the layer the CLI drives. It owns the run configuration, the
mapping from model kind to the features that kind consumes, deterministic
per-member seeding, and the bundle assembly after training.

Feature views:

* fusion members read the standardized numeric matrix and the padded
  token-index matrix directly;
* baseline members read numerics concatenated with one frequency-encoded
  column per categorical feature;
* gbdt members read a configurable view: "numeric+tokens" (token indices
  as integer ordinals, the default), "numeric+frequency", or "numeric".

Member i of an ensemble trains with seed = run seed + 7919 * i, so member
0 reproduces the standalone model exactly and members never share a seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bundle import (
    GBDT_FEATURE_VIEWS,
    MODEL_KINDS,
    BundleMember,
    ModelBundle,
)
from .ensemble import soft_vote
from .errors import DataError, UsageError
from .gbdt import GbdtConfig, train_gbdt
from .metrics import EvalReport, evaluate
from .models import (
    BaselineMlp,
    EmbeddingFusionNet,
    FrequencyEncoder,
    TrainConfig,
    train,
)
from .preprocess import EncodedDataset, PreprocessState, fit, stratified_split, transform
from .schema import DataTable, load_csv, load_schema
from .synthetic import generate_synthetic

MEMBER_SEED_STRIDE = 7919


@dataclass(frozen=True)
class SyntheticSpec:
    rows: int
    imbalance: tuple[float, ...] | None = None
    missing_fraction: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    schema_path: str
    model_kind: str = "fusion"
    data_path: str | None = None
    synthetic: SyntheticSpec | None = None
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    out_dir: str = "run_out"
    train_config: TrainConfig = field(default_factory=TrainConfig)
    gbdt_config: GbdtConfig = field(default_factory=GbdtConfig)
    ensemble_members: tuple[str, ...] = ("fusion", "gbdt")
    gbdt_feature_view: str = "numeric+tokens"
    parallel_members: bool = False

    def validate(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise UsageError(
                f"unknown model {self.model_kind!r}; pick one of {', '.join(MODEL_KINDS)}"
            )
        if (self.data_path is None) == (self.synthetic is None):
            raise UsageError("provide exactly one data source: --data or --rows")
        if self.gbdt_feature_view not in GBDT_FEATURE_VIEWS:
            raise UsageError(
                f"unknown feature view {self.gbdt_feature_view!r}; "
                f"pick one of {', '.join(GBDT_FEATURE_VIEWS)}"
            )
        if self.model_kind == "ensemble":
            if not self.ensemble_members:
                raise UsageError("ensemble needs at least one member")
            bad = [m for m in self.ensemble_members if m not in MODEL_KINDS or m == "ensemble"]
            if bad:
                raise UsageError(f"invalid ensemble members: {', '.join(bad)}")

    def member_kinds(self) -> tuple[str, ...]:
        if self.model_kind == "ensemble":
            return tuple(self.ensemble_members)
        return (self.model_kind,)

    def to_json_dict(self) -> dict:
        return {
            "schema": self.schema_path,
            "model": self.model_kind,
            "data": self.data_path,
            "synthetic": (
                {
                    "rows": self.synthetic.rows,
                    "imbalance": (
                        list(self.synthetic.imbalance)
                        if self.synthetic.imbalance is not None
                        else None
                    ),
                    "missing_fraction": self.synthetic.missing_fraction,
                }
                if self.synthetic is not None
                else None
            ),
            "fractions": list(self.fractions),
            "seed": self.seed,
            "out_dir": self.out_dir,
            "train": self.train_config.to_json_dict(),
            "gbdt": self.gbdt_config.to_json_dict(),
            "ensemble_members": list(self.ensemble_members),
            "gbdt_feature_view": self.gbdt_feature_view,
        }


def build_features(
    view: str, encoded: EncodedDataset, frequency_matrix: np.ndarray | None
) -> np.ndarray:
    """Assemble the flat feature matrix a tree/MLP member consumes.

    ``frequency_matrix`` is aligned to the original table; rows are picked
    out by ``encoded.row_indices`` so split subsets stay consistent.
    """
    if view == "numeric":
        return encoded.numeric
    if view == "numeric+tokens":
        return np.hstack([encoded.numeric, encoded.tokens.astype(np.float64)])
    if view == "numeric+frequency":
        if frequency_matrix is None:
            raise DataError("feature view needs a fitted frequency encoder")
        return np.hstack([encoded.numeric, frequency_matrix[encoded.row_indices]])
    raise UsageError(f"unknown feature view {view!r}")


def load_training_table(config: RunConfig) -> DataTable:
    schema = load_schema(config.schema_path)
    if config.data_path is not None:
        return load_csv(config.data_path, schema)
    spec = config.synthetic
    return generate_synthetic(
        schema,
        spec.rows,
        seed=config.seed,
        imbalance=spec.imbalance,
        missing_fraction=spec.missing_fraction,
    )


def _needs_frequency(config: RunConfig) -> bool:
    kinds = config.member_kinds()
    if "baseline" in kinds:
        return True
    return "gbdt" in kinds and config.gbdt_feature_view == "numeric+frequency"


@dataclass
class TrainedMember:
    member: BundleMember
    log_name: str
    log_csv: str


@dataclass
class TrainOutcome:
    bundle: ModelBundle
    report: EvalReport
    member_reports: list[tuple[str, EvalReport]]
    member_logs: list[tuple[str, str]]
    test_rows: int


def _train_one_member(
    kind: str,
    index: int,
    config: RunConfig,
    state: PreprocessState,
    n_classes: int,
    splits: tuple[EncodedDataset, EncodedDataset, EncodedDataset],
    frequency_matrix: np.ndarray | None,
) -> TrainedMember:
    train_d, val_d, _ = splits
    member_seed = config.seed + MEMBER_SEED_STRIDE * index
    fingerprint = state.fingerprint()
    if kind == "fusion":
        model = EmbeddingFusionNet(
            max(state.total_vocab_size, 1),
            state.total_padded_width,
            len(state.numeric_columns),
            n_classes,
            seed=member_seed,
            preprocess_fingerprint=fingerprint,
        )
        cfg = replace(config.train_config, seed=member_seed)
        _, log = train(
            model,
            (train_d.numeric, train_d.tokens),
            train_d.labels,
            (val_d.numeric, val_d.tokens),
            val_d.labels,
            cfg,
        )
        return TrainedMember(BundleMember(kind, model), "fusion", log.to_csv_text())
    if kind == "baseline":
        x_train = build_features("numeric+frequency", train_d, frequency_matrix)
        x_val = build_features("numeric+frequency", val_d, frequency_matrix)
        model = BaselineMlp(
            x_train.shape[1],
            n_classes,
            seed=member_seed,
            preprocess_fingerprint=fingerprint,
        )
        cfg = replace(config.train_config, seed=member_seed)
        _, log = train(model, (x_train,), train_d.labels, (x_val,), val_d.labels, cfg)
        return TrainedMember(BundleMember(kind, model), "baseline", log.to_csv_text())
    if kind == "gbdt":
        view = config.gbdt_feature_view
        x_train = build_features(view, train_d, frequency_matrix)
        model, losses = train_gbdt(
            x_train, train_d.labels, n_classes, config.gbdt_config, seed=member_seed
        )
        model.preprocess_fingerprint = fingerprint
        lines = ["round,train_loss"]
        lines.extend(f"{r},{loss!r}" for r, loss in enumerate(losses, start=1))
        return TrainedMember(
            BundleMember(kind, model, feature_view=view), "gbdt", "\n".join(lines) + "\n"
        )
    raise UsageError(f"unknown member kind {kind!r}")


def member_probabilities(
    bundle: ModelBundle,
    encoded: EncodedDataset,
    frequency_matrix: np.ndarray | None,
) -> list[np.ndarray]:
    out = []
    for m in bundle.members:
        if m.kind == "fusion":
            out.append(m.model.predict_proba(encoded.numeric, encoded.tokens))
        elif m.kind == "baseline":
            x = build_features("numeric+frequency", encoded, frequency_matrix)
            out.append(m.model.predict_proba(x))
        elif m.kind == "gbdt":
            x = build_features(m.feature_view, encoded, frequency_matrix)
            out.append(m.model.predict_proba(x))
        else:
            raise DataError(f"bundle contains unknown member kind {m.kind!r}")
    return out


def combined_probabilities(
    bundle: ModelBundle,
    encoded: EncodedDataset,
    frequency_matrix: np.ndarray | None,
) -> np.ndarray:
    members = member_probabilities(bundle, encoded, frequency_matrix)
    if bundle.kind == "ensemble":
        return soft_vote(members, bundle.weights)
    return members[0]


def predict_on_table(bundle: ModelBundle, table: DataTable) -> np.ndarray:
    """Probabilities for every row of a raw table under a loaded bundle."""
    encoded = transform(table, bundle.state)
    freq = (
        bundle.frequency_encoder.encode(table)
        if bundle.frequency_encoder is not None
        else None
    )
    return combined_probabilities(bundle, encoded, freq)


def run_training(config: RunConfig) -> TrainOutcome:
    """Execute a full training run and return everything the CLI writes.

    Deterministic for a fixed config: data generation/loading, splitting,
    member seeding, and training contain no unseeded randomness.
    """
    config.validate()
    table = load_training_table(config)
    state = fit(table)
    encoded = transform(table, state)
    splits = stratified_split(encoded, config.fractions, config.seed)
    train_d, _, test_d = splits

    frequency_encoder = None
    frequency_matrix = None
    if _needs_frequency(config):
        frequency_encoder = FrequencyEncoder.fit(table, state, train_d.row_indices)
        frequency_matrix = frequency_encoder.encode(table)

    kinds = config.member_kinds()
    n_classes = table.schema.n_classes

    def job(args):
        index, kind = args
        return _train_one_member(
            kind, index, config, state, n_classes, splits, frequency_matrix
        )

    if config.parallel_members and len(kinds) > 1:
        with ThreadPoolExecutor(max_workers=len(kinds)) as pool:
            trained = list(pool.map(job, enumerate(kinds)))
    else:
        trained = [job(item) for item in enumerate(kinds)]

    bundle = ModelBundle(
        kind=config.model_kind,
        state=state,
        members=[t.member for t in trained],
        weights=None,
        frequency_encoder=frequency_encoder,
        train_config=config.train_config,
        gbdt_config=config.gbdt_config,
        run_summary=config.to_json_dict(),
    )

    class_labels = table.schema.class_labels
    member_probas = member_probabilities(bundle, test_d, frequency_matrix)
    member_reports = []
    if bundle.kind == "ensemble":
        probas = soft_vote(member_probas, bundle.weights)
        for t, p in zip(trained, member_probas):
            member_reports.append(
                (t.member.kind, evaluate(p, test_d.labels, class_labels))
            )
    else:
        probas = member_probas[0]
    report = evaluate(probas, test_d.labels, class_labels)

    logs = []
    for i, t in enumerate(trained):
        name = f"train_log_{i}_{t.log_name}" if len(trained) > 1 else "train_log"
        logs.append((name, t.log_csv))

    return TrainOutcome(bundle, report, member_reports, logs, test_d.n_rows)
