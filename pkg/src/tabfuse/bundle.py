"""Versioned on-disk model format.

A bundle is a single JSON document holding the fitted preprocessing state,
one or more member model parameter sets, optional ensemble weights, the
frequency encoder when a member needs one, and the run configuration it
was trained with. Floats serialize through Python's shortest round-trip
repr, so save/load reproduces every parameter bit for bit.

Every member records the fingerprint of the preprocessing state it was
trained against; load refuses a bundle whose members and state disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .gbdt import GbdtConfig, GbdtModel
from .models import BaselineMlp, EmbeddingFusionNet, FrequencyEncoder, TrainConfig
from .preprocess import PreprocessState

BUNDLE_FORMAT_VERSION = 1

MODEL_KINDS = ("fusion", "baseline", "gbdt", "ensemble")
GBDT_FEATURE_VIEWS = ("numeric+tokens", "numeric+frequency", "numeric")


def _params_payload(model) -> dict:
    return {p.name: p.value.tolist() for p in model.params()}


def _load_params(model, payload: dict) -> None:
    for p in model.params():
        if p.name not in payload:
            raise DataError(f"bundle is missing parameter {p.name!r}")
        arr = np.asarray(payload[p.name], dtype=np.float64)
        if arr.shape != p.value.shape:
            raise DataError(
                f"parameter {p.name!r} has shape {arr.shape}, "
                f"expected {p.value.shape}"
            )
        p.value[...] = arr


def _fusion_payload(model: EmbeddingFusionNet) -> dict:
    return {
        "vocab_size": model.embedding.vocab_size,
        "token_width": model.token_width,
        "n_numeric": model.n_numeric,
        "n_classes": model.n_classes,
        "embed_dim": model.embed_dim,
        "hidden_width": model.cat_linear1.out_dim,
        "fused_width": model.cat_linear2.out_dim,
        "preprocess_fingerprint": model.preprocess_fingerprint,
        "params": _params_payload(model),
    }


def _fusion_from_payload(doc: dict) -> EmbeddingFusionNet:
    model = EmbeddingFusionNet(
        int(doc["vocab_size"]),
        int(doc["token_width"]),
        int(doc["n_numeric"]),
        int(doc["n_classes"]),
        embed_dim=int(doc["embed_dim"]),
        hidden_width=int(doc["hidden_width"]),
        fused_width=int(doc["fused_width"]),
        preprocess_fingerprint=doc["preprocess_fingerprint"],
    )
    _load_params(model, doc["params"])
    return model


def _baseline_payload(model: BaselineMlp) -> dict:
    return {
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "hidden1": model.linear1.out_dim,
        "hidden2": model.linear2.out_dim,
        "preprocess_fingerprint": model.preprocess_fingerprint,
        "params": _params_payload(model),
    }


def _baseline_from_payload(doc: dict) -> BaselineMlp:
    model = BaselineMlp(
        int(doc["n_features"]),
        int(doc["n_classes"]),
        hidden1=int(doc["hidden1"]),
        hidden2=int(doc["hidden2"]),
        preprocess_fingerprint=doc["preprocess_fingerprint"],
    )
    _load_params(model, doc["params"])
    return model


@dataclass
class BundleMember:
    """One trained model plus how it consumes the encoded data.

    ``feature_view`` applies to gbdt members only ("numeric+tokens",
    "numeric+frequency", or "numeric"); fusion members always take the
    numeric matrix and token matrix, baseline members the numeric matrix
    concatenated with frequency-encoded categoricals.
    """

    kind: str
    model: object
    feature_view: str = ""

    def fingerprint(self) -> str:
        return self.model.preprocess_fingerprint

    def to_json_dict(self) -> dict:
        if self.kind == "fusion":
            payload = _fusion_payload(self.model)
        elif self.kind == "baseline":
            payload = _baseline_payload(self.model)
        elif self.kind == "gbdt":
            payload = self.model.to_json_dict()
        else:
            raise DataError(f"unknown member kind {self.kind!r}")
        doc = {"kind": self.kind, "payload": payload}
        if self.feature_view:
            doc["feature_view"] = self.feature_view
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BundleMember":
        kind = doc["kind"]
        payload = doc["payload"]
        if kind == "fusion":
            model = _fusion_from_payload(payload)
        elif kind == "baseline":
            model = _baseline_from_payload(payload)
        elif kind == "gbdt":
            model = GbdtModel.from_json_dict(payload)
        else:
            raise DataError(f"bundle contains unknown member kind {kind!r}")
        return cls(kind, model, doc.get("feature_view", ""))


@dataclass
class ModelBundle:
    """Everything needed to predict on new rows of the fitted schema."""

    kind: str
    state: PreprocessState
    members: list[BundleMember]
    weights: tuple[float, ...] | None = None
    frequency_encoder: FrequencyEncoder | None = None
    train_config: TrainConfig | None = None
    gbdt_config: GbdtConfig | None = None
    run_summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        if not self.members:
            raise DataError("bundle has no members")
        if self.weights is not None and len(self.weights) != len(self.members):
            raise DataError("weight count does not match member count")
        fp = self.state.fingerprint()
        for m in self.members:
            if m.fingerprint() and m.fingerprint() != fp:
                raise DataError(
                    f"member {m.kind!r} was trained against a different "
                    f"preprocessing state (fingerprint mismatch)"
                )

    def to_json_dict(self) -> dict:
        return {
            "format_version": BUNDLE_FORMAT_VERSION,
            "kind": self.kind,
            "preprocess": self.state.to_json_dict(),
            "preprocess_fingerprint": self.state.fingerprint(),
            "members": [m.to_json_dict() for m in self.members],
            "weights": list(self.weights) if self.weights is not None else None,
            "frequency_encoder": (
                self.frequency_encoder.to_json_dict()
                if self.frequency_encoder is not None
                else None
            ),
            "train_config": (
                self.train_config.to_json_dict() if self.train_config else None
            ),
            "gbdt_config": (
                self.gbdt_config.to_json_dict() if self.gbdt_config else None
            ),
            "run_summary": self.run_summary,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelBundle":
        version = doc.get("format_version")
        if version != BUNDLE_FORMAT_VERSION:
            raise DataError(
                f"unsupported bundle version {version!r}; "
                f"this build reads version {BUNDLE_FORMAT_VERSION}"
            )
        state = PreprocessState.from_json_dict(doc["preprocess"])
        stored_fp = doc.get("preprocess_fingerprint", "")
        if stored_fp and stored_fp != state.fingerprint():
            raise DataError(
                "bundle preprocess fingerprint does not match its state "
                "(document was modified or corrupted)"
            )
        members = [BundleMember.from_json_dict(m) for m in doc["members"]]
        weights = doc.get("weights")
        freq_doc = doc.get("frequency_encoder")
        train_doc = doc.get("train_config")
        gbdt_doc = doc.get("gbdt_config")
        return cls(
            kind=doc["kind"],
            state=state,
            members=members,
            weights=tuple(weights) if weights is not None else None,
            frequency_encoder=(
                FrequencyEncoder.from_json_dict(freq_doc) if freq_doc else None
            ),
            train_config=TrainConfig.from_json_dict(train_doc) if train_doc else None,
            gbdt_config=GbdtConfig.from_json_dict(gbdt_doc) if gbdt_doc else None,
            run_summary=doc.get("run_summary", {}),
        )


def save_bundle(bundle: ModelBundle, path) -> None:
    Path(path).write_text(
        json.dumps(bundle.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )


def load_bundle(path) -> ModelBundle:
    p = Path(path)
    if not p.exists():
        raise DataError(f"bundle file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"bundle file is not valid JSON: {p} ({e})") from None
    return ModelBundle.from_json_dict(doc)
