"""Validating loader for JSON experiment configs.

A config file has sections channel / dataset / model / train / infer /
eval plus schema_version and seed.  Unknown keys anywhere are rejected
with the offending path; every section is validated before any work
starts.  The top-level seed fills any section seed that the file does
not set explicitly, and a seed override (the CLI --seed flag) replaces
all of them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from .chansim import ChannelConfig
from .diffusion import LossConfig
from .errors import ConfigError
from .evalkit import EvalConfig
from .nets import BackboneSpec, EncoderSpec
from .pipeline import InferConfig, MODEL_NAMES, ModelSpec, TrainConfig

SCHEMA_VERSION = 1

_MODE_BY_NAME = {
    "DiU": "ar", "DiT": "ar", "LinFusion": "seq2seq", "DiU-seq2seq": "seq2seq",
    "DiU3": "seq2seq", "GRU": "direct", "ConvLSTM": "direct", "LinFormer": "direct",
}
_ENCODER_KIND = {
    "DiU": "convlstm", "DiT": "convlstm", "LinFusion": "linformer",
    "DiU-seq2seq": "none", "DiU3": "none",
    "GRU": "gru", "ConvLSTM": "convlstm", "LinFormer": "linformer",
}
_BACKBONE_KIND = {
    "DiU": "unet2d", "DiT": "dit", "LinFusion": "unet2d",
    "DiU-seq2seq": "unet2d", "DiU3": "unet3d",
}


def _check_keys(d: dict, allowed, path: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in config section {path!r}")


def _fields(cls) -> Tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(cls))


@dataclass(frozen=True)
class DatasetSection:
    profiles: Tuple[str, ...] = ("CDL-A", "CDL-B", "CDL-C", "CDL-D", "CDL-E")
    num_samples: int = 100_000
    n_past: int = 30
    n_future: int = 10
    split_fracs: Tuple[float, float, float] = (0.9, 0.05, 0.05)
    seed: int = 0

    def __post_init__(self):
        if not self.profiles:
            raise ConfigError("dataset.profiles must be non-empty")
        if self.num_samples < 1:
            raise ConfigError("dataset.num_samples must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    channel: Optional[ChannelConfig] = None
    dataset: Optional[DatasetSection] = None
    model: Optional[ModelSpec] = None
    train: Optional[TrainConfig] = None
    infer: Optional[InferConfig] = None
    eval: Optional[EvalConfig] = None

    def require(self, *names: str):
        out = []
        for name in names:
            section = getattr(self, name)
            if section is None:
                raise ConfigError(f"config section {name!r} is required for this command")
            out.append(section)
        return out[0] if len(out) == 1 else out


def paper_model_spec(
    name: str,
    n_past: int = 30,
    n_future: int = 10,
    n_tx: int = 16,
    n_carriers: int = 16,
    encoder_overrides: Optional[dict] = None,
    backbone_overrides: Optional[dict] = None,
) -> ModelSpec:
    """ModelSpec for a named model at its published widths."""
    if name not in MODEL_NAMES:
        raise ConfigError(f"unknown model name {name!r}, expected one of {MODEL_NAMES}")
    enc_kw = {"kind": _ENCODER_KIND[name]}
    if name == "ConvLSTM":
        enc_kw["dropout"] = 0.2
    enc_kw.update(encoder_overrides or {})
    if enc_kw["kind"] != _ENCODER_KIND[name]:
        raise ConfigError(f"model {name} fixes encoder kind {_ENCODER_KIND[name]!r}")
    bb_kind = _BACKBONE_KIND.get(name)
    backbone = None
    if bb_kind is not None:
        bb_kw = {"kind": bb_kind}
        bb_kw.update(backbone_overrides or {})
        if bb_kw["kind"] != bb_kind:
            raise ConfigError(f"model {name} fixes backbone kind {bb_kind!r}")
        if "channel_multipliers" in bb_kw:
            bb_kw["channel_multipliers"] = tuple(bb_kw["channel_multipliers"])
        backbone = BackboneSpec(**bb_kw)
    elif backbone_overrides:
        raise ConfigError(f"model {name} is a direct baseline and takes no backbone section")
    return ModelSpec(
        name=name,
        encoder=EncoderSpec(**enc_kw),
        backbone=backbone,
        inference_mode=_MODE_BY_NAME[name],
        n_past=n_past,
        n_future=n_future,
        n_tx=n_tx,
        n_carriers=n_carriers,
    )


def _model_from_section(d: dict) -> ModelSpec:
    _check_keys(d, ("name", "encoder", "backbone", "n_past", "n_future", "n_tx", "n_carriers"), "model")
    if "name" not in d:
        raise ConfigError("config section 'model' needs a 'name'")
    enc = d.get("encoder", {})
    bb = d.get("backbone", {})
    if not isinstance(enc, dict) or not isinstance(bb, dict):
        raise ConfigError("model.encoder and model.backbone must be JSON objects")
    _check_keys(enc, _fields(EncoderSpec), "model.encoder")
    _check_keys(bb, _fields(BackboneSpec), "model.backbone")
    return paper_model_spec(
        d["name"],
        n_past=d.get("n_past", 30),
        n_future=d.get("n_future", 10),
        n_tx=d.get("n_tx", 16),
        n_carriers=d.get("n_carriers", 16),
        encoder_overrides=enc,
        backbone_overrides=bb or None,
    )


def _train_from_section(d: dict, seed: int) -> TrainConfig:
    _check_keys(d, _fields(TrainConfig), "train")
    d = dict(d)
    for name in ("adam_betas", "snr_range_db"):
        if name in d:
            d[name] = tuple(d[name])
    if "loss" in d:
        _check_keys(d["loss"], _fields(LossConfig), "train.loss")
        d["loss"] = LossConfig(**d["loss"])
    d.setdefault("seed", seed)
    return TrainConfig(**d)


def _eval_from_section(d: dict, seed: int) -> EvalConfig:
    _check_keys(d, _fields(EvalConfig), "eval")
    d = dict(d)
    for name in ("snr_grid_db", "velocities_kmh", "context_lengths", "sampling_steps_grid"):
        if name in d:
            d[name] = tuple(d[name])
    d.setdefault("seed", seed)
    return EvalConfig(**d)


def _dataset_from_section(d: dict, seed: int) -> DatasetSection:
    _check_keys(d, _fields(DatasetSection), "dataset")
    d = dict(d)
    if "profiles" in d:
        d["profiles"] = tuple(d["profiles"])
    if "split_fracs" in d:
        d["split_fracs"] = tuple(d["split_fracs"])
    d.setdefault("seed", seed)
    return DatasetSection(**d)


def _channel_from_section(d: dict) -> ChannelConfig:
    _check_keys(d, _fields(ChannelConfig), "channel")
    d = dict(d)
    for name in ("velocity_range_kmh", "delay_spread_range_ns"):
        if name in d:
            d[name] = tuple(d[name])
    return ChannelConfig(**d)


def _infer_from_section(d: dict) -> InferConfig:
    _check_keys(d, _fields(InferConfig), "infer")
    return InferConfig(**d)


def load_experiment(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    _check_keys(
        raw,
        ("schema_version", "seed", "channel", "dataset", "model", "train", "infer", "eval"),
        str(path),
    )
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version} (expected {SCHEMA_VERSION})")
    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = seed_override

    def section(name):
        d = raw.get(name)
        if d is None:
            return None
        if not isinstance(d, dict):
            raise ConfigError(f"config section {name!r} must be a JSON object")
        if seed_override is not None and "seed" in d:
            d = {**d, "seed": seed_override}
        return d

    channel = section("channel")
    dataset = section("dataset")
    model = section("model")
    train = section("train")
    infer = section("infer")
    eval_ = section("eval")
    return ExperimentConfig(
        schema_version=version,
        seed=seed,
        channel=_channel_from_section(channel) if channel is not None else None,
        dataset=_dataset_from_section(dataset, seed) if dataset is not None else None,
        model=_model_from_section(model) if model is not None else None,
        train=_train_from_section(train, seed) if train is not None else None,
        infer=_infer_from_section(infer) if infer is not None else None,
        eval=_eval_from_section(eval_, seed) if eval_ is not None else None,
    )
