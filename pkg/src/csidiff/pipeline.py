"""Training, autoregressive and seq2seq inference, EMA, and checkpointing.

Tensor convention at this level: CSI blocks are [B, frames, 2, N_t, N_c]
(real/imaginary packed on the channel axis).  Training follows the
recipe: corrupt the context at a random SNR, encode it, diffuse the
target to a random step, and regress the clean target under a Huber
loss with gradient clipping and an EMA shadow of all parameters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from . import datafile
from .chansim import DatasetBundle, corrupt_with_snr
from .diffusion import (
    LossConfig,
    NoiseSchedule,
    SamplerConfig,
    compute_loss,
    ddim_step,
    forward_diffuse,
    make_cosine_schedule,
    make_substeps,
    noise_from_sample,
    sample_from_noise,
)
from .errors import (
    CheckpointError,
    ConfigError,
    InputError,
    TrainingDivergedError,
    UnsupportedFormatError,
)
from .nets import (
    BackboneSpec,
    ConvLSTMForecaster,
    EncoderSpec,
    GRUForecaster,
    LinFormerForecaster,
    build_backbone,
    build_encoder,
)

MODEL_NAMES = (
    "DiU",
    "DiU-seq2seq",
    "LinFusion",
    "DiT",
    "DiU3",
    "GRU",
    "ConvLSTM",
    "LinFormer",
)

_MODE_BY_NAME = {
    "DiU": "ar",
    "DiT": "ar",
    "LinFusion": "seq2seq",
    "DiU-seq2seq": "seq2seq",
    "DiU3": "seq2seq",
    "GRU": "direct",
    "ConvLSTM": "direct",
    "LinFormer": "direct",
}

_ENCODER_KIND_BY_NAME = {
    "DiU": "convlstm",
    "DiT": "convlstm",
    "LinFusion": "linformer",
    "DiU-seq2seq": "none",
    "DiU3": "none",
    "GRU": "gru",
    "ConvLSTM": "convlstm",
    "LinFormer": "linformer",
}

_BACKBONE_KIND_BY_NAME = {
    "DiU": "unet2d",
    "DiT": "dit",
    "LinFusion": "unet2d",
    "DiU-seq2seq": "unet2d",
    "DiU3": "unet3d",
}


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description; shapes follow from this alone."""

    name: str
    encoder: EncoderSpec
    backbone: Optional[BackboneSpec]
    inference_mode: str
    n_past: int = 30
    n_future: int = 10
    n_tx: int = 16
    n_carriers: int = 16

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ConfigError(f"unknown model name {self.name!r}, expected one of {MODEL_NAMES}")
        mode = _MODE_BY_NAME[self.name]
        if self.inference_mode != mode:
            raise ConfigError(f"{self.name} requires inference_mode={mode!r}, got {self.inference_mode!r}")
        want_enc = _ENCODER_KIND_BY_NAME[self.name]
        if self.encoder.kind != want_enc:
            raise ConfigError(f"{self.name} requires encoder kind {want_enc!r}, got {self.encoder.kind!r}")
        want_bb = _BACKBONE_KIND_BY_NAME.get(self.name)
        if want_bb is None:
            if self.backbone is not None:
                raise ConfigError(f"{self.name} is a direct baseline and takes no backbone")
        else:
            if self.backbone is None or self.backbone.kind != want_bb:
                raise ConfigError(f"{self.name} requires a {want_bb!r} backbone")
        for fname in ("n_past", "n_future", "n_tx", "n_carriers"):
            if getattr(self, fname) < 1:
                raise ConfigError(f"ModelSpec.{fname} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "encoder": dataclasses.asdict(self.encoder),
            "backbone": None if self.backbone is None else dataclasses.asdict(self.backbone),
            "inference_mode": self.inference_mode,
            "n_past": self.n_past,
            "n_future": self.n_future,
            "n_tx": self.n_tx,
            "n_carriers": self.n_carriers,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        enc = EncoderSpec(**d["encoder"])
        bb = d["backbone"]
        if bb is not None:
            bb = dict(bb)
            bb["channel_multipliers"] = tuple(bb["channel_multipliers"])
            bb = BackboneSpec(**bb)
        return ModelSpec(
            name=d["name"],
            encoder=enc,
            backbone=bb,
            inference_mode=d["inference_mode"],
            n_past=d["n_past"],
            n_future=d["n_future"],
            n_tx=d["n_tx"],
            n_carriers=d["n_carriers"],
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 512
    lr_encoder: float = 1e-3
    lr_generator: float = 1e-3
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    ema_decay: float = 0.995
    ema_interval: int = 10
    grad_clip_norm: float = 1.0
    snr_range_db: Tuple[float, float] = (-20.0, 20.0)
    loss: LossConfig = field(default_factory=LossConfig)
    T: int = 2000
    beta_min: float = 1e-4
    beta_max: float = 2e-2
    seed: int = 0
    max_steps: Optional[int] = None
    t_per_sample: bool = False
    normalized_corruption: bool = False

    def __post_init__(self):
        for fname in ("epochs", "batch_size", "ema_interval", "T"):
            if getattr(self, fname) < 1:
                raise ConfigError(f"TrainConfig.{fname} must be >= 1")
        for fname in ("lr_encoder", "lr_generator", "grad_clip_norm"):
            if getattr(self, fname) <= 0:
                raise ConfigError(f"TrainConfig.{fname} must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError("ema_decay must lie in [0, 1]")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ConfigError(f"snr_range_db must be ordered, got {self.snr_range_db}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1 when set")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        d["snr_range_db"] = list(self.snr_range_db)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        d["adam_betas"] = tuple(d["adam_betas"])
        d["snr_range_db"] = tuple(d["snr_range_db"])
        d["loss"] = LossConfig(**d["loss"])
        return TrainConfig(**d)


@dataclass(frozen=True)
class InferConfig:
    num_sample_steps: int = 3
    zeta: float = 0.0
    feedback_noise_sigma: Union[float, str] = "from_snr"
    inference_snr_db: Optional[float] = None

    def __post_init__(self):
        if self.num_sample_steps < 1:
            raise ConfigError("num_sample_steps must be >= 1")
        if self.zeta < 0:
            raise ConfigError("zeta must be >= 0")
        if isinstance(self.feedback_noise_sigma, str):
            if self.feedback_noise_sigma != "from_snr":
                raise ConfigError("feedback_noise_sigma must be a number or 'from_snr'")
        elif self.feedback_noise_sigma < 0:
            raise ConfigError("feedback_noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "InferConfig":
        return InferConfig(**d)


class PredictionModel(nn.Module):
    """Encoder/backbone (or direct forecaster) pair behind one state dict."""

    def __init__(self, spec: ModelSpec, predict_kind: str = "sample"):
        super().__init__()
        if predict_kind not in ("sample", "noise"):
            raise ConfigError(f"predict_kind must be 'sample' or 'noise', got {predict_kind!r}")
        self.spec = spec
        self.predict_kind = predict_kind
        self.schedule: Optional[NoiseSchedule] = None
        enc_spec, bb_spec = spec.encoder, spec.backbone
        if spec.inference_mode == "direct":
            if spec.name == "GRU":
                self.forecaster = GRUForecaster(
                    spec.n_tx, spec.n_carriers, spec.n_future,
                    hidden=enc_spec.hidden_channels, layers=enc_spec.num_layers,
                )
            elif spec.name == "ConvLSTM":
                self.forecaster = ConvLSTMForecaster(
                    spec.n_future, hidden=enc_spec.hidden_channels, dropout=enc_spec.dropout,
                )
            else:
                self.forecaster = LinFormerForecaster(
                    spec.n_tx, spec.n_carriers, spec.n_past, spec.n_future,
                    model_dim=enc_spec.model_dim, ff_dim=enc_spec.ff_dim,
                    blocks=enc_spec.num_blocks,
                )
            return
        self.encoder = build_encoder(
            enc_spec, n_tx=spec.n_tx, n_carriers=spec.n_carriers, n_past=spec.n_past
        )
        if bb_spec.kind == "unet3d":
            in_ch, out_ch = 3, 2
        elif spec.inference_mode == "ar":
            in_ch, out_ch = 2 + enc_spec.latent_channels, 2
        else:  # seq2seq on a 2D backbone: future frames stacked on channels
            cond = enc_spec.latent_channels if self.encoder is not None else 2 * spec.n_past
            in_ch, out_ch = 2 * spec.n_future + cond, 2 * spec.n_future
        self.backbone = build_backbone(
            bb_spec, in_channels=in_ch, out_channels=out_ch,
            n_tx=spec.n_tx, n_carriers=spec.n_carriers, n_future=spec.n_future,
        )

    # -- denoiser plumbing ------------------------------------------------

    def conditioning(self, context: torch.Tensor) -> Optional[torch.Tensor]:
        """Latent map Z, channel-stacked raw context, or None (3D backbone)."""
        if self.spec.backbone.kind == "unet3d":
            return None
        if self.encoder is not None:
            return self.encoder(context)
        b = context.shape[0]
        return context.reshape(b, -1, self.spec.n_tx, self.spec.n_carriers)

    def net_out(self, noisy: torch.Tensor, t, context: torch.Tensor) -> torch.Tensor:
        """Raw backbone output on a noisy block, shaped back to [B, F, 2, H, W]."""
        spec = self.spec
        b, f = noisy.shape[0], noisy.shape[1]
        tt = torch.as_tensor(t)
        if spec.backbone.kind == "unet3d":
            frames = torch.cat([context, noisy], dim=1)  # [B, P+F, 2, H, W]
            video = frames.permute(0, 2, 1, 3, 4)
            mask = torch.zeros_like(video[:, :1])
            mask[:, :, : context.shape[1]] = 1.0
            out = self.backbone(torch.cat([video, mask], dim=1), tt)
            return out.permute(0, 2, 1, 3, 4)
        cond = self.conditioning(context)
        x = torch.cat([noisy.reshape(b, 2 * f, *noisy.shape[3:]), cond], dim=1)
        out = self.backbone(x, tt)
        return out.reshape(b, f, 2, *out.shape[2:])

    def predict_sample(self, noisy: torch.Tensor, t: int, context: torch.Tensor) -> torch.Tensor:
        """Clean-block estimate regardless of the trained prediction space."""
        raw = self.net_out(noisy, t, context)
        if self.predict_kind == "noise":
            return sample_from_noise(noisy, raw, t, self.schedule)
        return raw

    def forward(self, context: torch.Tensor) -> torch.Tensor:
        """Full prediction of n_future frames (used for complexity accounting)."""
        if self.spec.inference_mode == "direct":
            return self.forecaster(context)
        icfg = InferConfig(feedback_noise_sigma=0.0)
        gen = torch.Generator().manual_seed(0)
        if self.spec.inference_mode == "ar":
            return self._rollout_ar(context, icfg, gen, np.random.default_rng(0))
        return self._rollout_seq2seq(context, icfg, gen, np.random.default_rng(0), self.spec.n_future)

    # -- samplers ----------------------------------------------------------

    def _sample_block(
        self, context: torch.Tensor, n_frames: int, icfg: InferConfig,
        gen: torch.Generator, np_rng: np.random.Generator,
    ) -> torch.Tensor:
        sched = self.schedule
        scfg = SamplerConfig(num_sample_steps=icfg.num_sample_steps, zeta=icfg.zeta)
        b = context.shape[0]
        shape = (b, n_frames, 2, self.spec.n_tx, self.spec.n_carriers)
        Ht = torch.randn(shape, generator=gen, dtype=context.dtype)
        for t, t_prev in make_substeps(sched.T, icfg.num_sample_steps):
            H0hat = self.predict_sample(Ht, t, context)
            Ht = ddim_step(Ht, H0hat, t, t_prev, scfg, sched, rng=_TorchNormal(np_rng))
        return Ht

    def _feedback_sigma(self, pred: torch.Tensor, icfg: InferConfig) -> torch.Tensor:
        if not isinstance(icfg.feedback_noise_sigma, str):
            return torch.full((pred.shape[0], 1, 1, 1, 1), float(icfg.feedback_noise_sigma))
        if icfg.inference_snr_db is None:
            return torch.zeros(pred.shape[0], 1, 1, 1, 1)
        rho = 10.0 ** (icfg.inference_snr_db / 10.0)
        power = (pred**2).mean(dim=(1, 2, 3, 4), keepdim=True)
        return torch.sqrt(power / rho)

    def _rollout_ar(self, context, icfg, gen, np_rng) -> torch.Tensor:
        if self.spec.inference_mode != "ar":
            raise ConfigError(f"{self.spec.name} does not support autoregressive inference")
        ctx = context
        preds = []
        for _ in range(self.spec.n_future):
            pred = self._sample_block(ctx, 1, icfg, gen, np_rng)
            preds.append(pred)
            sigma = self._feedback_sigma(pred, icfg)
            fed = pred + sigma * torch.randn(pred.shape, generator=gen, dtype=pred.dtype)
            ctx = torch.cat([ctx, fed], dim=1)
        return torch.cat(preds, dim=1)

    def _rollout_seq2seq(self, context, icfg, gen, np_rng, horizon: int) -> torch.Tensor:
        if self.spec.inference_mode != "seq2seq":
            raise ConfigError(f"{self.spec.name} does not support seq2seq inference")
        if context.shape[1] != self.spec.n_past:
            raise InputError(
                f"seq2seq inference is fixed to {self.spec.n_past} context frames, "
                f"got {context.shape[1]}"
            )
        seq = context
        preds: list[torch.Tensor] = []
        produced = 0
        while produced < horizon:
            block = self._sample_block(seq[:, -self.spec.n_past :], self.spec.n_future, icfg, gen, np_rng)
            preds.append(block)
            seq = torch.cat([seq, block], dim=1)
            produced += self.spec.n_future
        return torch.cat(preds, dim=1)[:, :horizon]


class _TorchNormal:
    """Adapter giving numpy-drawn normals as torch tensors for the sampler."""

    def __init__(self, np_rng: np.random.Generator):
        self.np_rng = np_rng

    def standard_normal(self, shape):
        return torch.from_numpy(self.np_rng.standard_normal(shape).astype(np.float32))


@dataclass
class Checkpoint:
    spec: ModelSpec
    train_cfg: TrainConfig
    step: int
    raw: Dict[str, np.ndarray]
    ema: Dict[str, np.ndarray]
    rng_digest: str = ""


def build_model(spec: ModelSpec, train_cfg: Optional[TrainConfig] = None) -> PredictionModel:
    cfg = train_cfg or TrainConfig()
    kind = "noise" if cfg.loss.kind == "mse_on_noise" else "sample"
    model = PredictionModel(spec, predict_kind=kind)
    model.schedule = make_cosine_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    return model


def model_from_checkpoint(ckpt: Checkpoint, use_ema: bool = True) -> PredictionModel:
    model = build_model(ckpt.spec, ckpt.train_cfg)
    params = ckpt.ema if use_ema else ckpt.raw
    state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in params.items()}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"parameters incompatible with spec {ckpt.spec.name}: {exc}") from exc
    model.eval()
    return model


def ema_decay_at(num_updates: int, cap: float) -> float:
    """Warmup-capped EMA decay: min(cap, (1 + n) / (10 + n)).

    Without the warmup a short run's shadow stays dominated by the random
    initialization (0.995^200 is still 0.37); the cap ramps the averaging
    horizon up with the number of updates and converges to ``cap``.
    """
    if num_updates < 1:
        raise InputError("num_updates must be >= 1")
    return min(cap, (1.0 + num_updates) / (10.0 + num_updates))


def ema_update(
    shadow: Dict[str, torch.Tensor], live: Dict[str, torch.Tensor], decay: float
) -> Dict[str, torch.Tensor]:
    """shadow' = decay * shadow + (1 - decay) * live, per named tensor."""
    if shadow.keys() != live.keys():
        missing = set(shadow) ^ set(live)
        raise CheckpointError(f"EMA parameter name mismatch: {sorted(missing)}")
    out = {}
    for name, s in shadow.items():
        v = live[name]
        if tuple(s.shape) != tuple(v.shape):
            raise CheckpointError(
                f"EMA shape mismatch for {name}: {tuple(s.shape)} vs {tuple(v.shape)}"
            )
        out[name] = decay * s + (1.0 - decay) * v
    return out


def _check_dataset_matches(spec: ModelSpec, data: DatasetBundle) -> None:
    X, Y = data.splits["train"]
    want_x = (spec.n_past, 2, spec.n_tx, spec.n_carriers)
    want_y = (spec.n_future, 2, spec.n_tx, spec.n_carriers)
    if tuple(X.shape[1:]) != want_x or tuple(Y.shape[1:]) != want_y:
        raise ConfigError(
            f"dataset shapes X{tuple(X.shape[1:])} / Y{tuple(Y.shape[1:])} do not match "
            f"model spec (expected X{want_x} / Y{want_y})"
        )


def _state_to_numpy(state: Dict[str, torch.Tensor]) -> Dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in state.items()}


def train(
    spec: ModelSpec,
    data: DatasetBundle,
    cfg: TrainConfig,
    log_path=None,
) -> Checkpoint:
    """Fit the model; returns a checkpoint with raw and EMA parameters.

    Writes a line-delimited JSON metrics log (step, loss, grad norms,
    learning rates) when ``log_path`` is given.  Reproducible: all draws
    derive from cfg.seed.
    """
    _check_dataset_matches(spec, data)
    if spec.inference_mode == "direct" and cfg.loss.kind == "mse_on_noise":
        raise ConfigError("noise-space loss is undefined for direct baselines")
    torch.manual_seed(cfg.seed)
    np_rng = np.random.default_rng(cfg.seed)
    model = build_model(spec, cfg)
    model.train()
    sched = model.schedule

    groups = []
    if spec.inference_mode == "direct":
        groups.append({"params": list(model.forecaster.parameters()), "lr": cfg.lr_generator})
    else:
        if model.encoder is not None:
            groups.append({"params": list(model.encoder.parameters()), "lr": cfg.lr_encoder})
        groups.append({"params": list(model.backbone.parameters()), "lr": cfg.lr_generator})
    optim = torch.optim.Adam(groups, betas=cfg.adam_betas)

    shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}
    X_all, Y_all = data.splits["train"]
    n = X_all.shape[0]
    lo, hi = cfg.snr_range_db
    step = 0
    log_file = open(log_path, "w") if log_path is not None else None
    try:
        done = False
        for _ in range(cfg.epochs):
            if done:
                break
            order = np_rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                X = X_all[idx]
                Y = Y_all[idx]
                rho_db = float(np_rng.uniform(lo, hi))
                X_tilde = corrupt_with_snr(X, rho_db, np_rng)
                if cfg.normalized_corruption:
                    X_tilde = X_tilde / math.sqrt(10.0 ** (rho_db / 10.0))
                Xb = torch.from_numpy(X_tilde)
                target = Y[:, :1] if spec.inference_mode == "ar" else Y
                Yb = torch.from_numpy(np.ascontiguousarray(target))

                if spec.inference_mode == "direct":
                    pred = model.forecaster(Xb)
                    loss = compute_loss(pred, Yb, None, cfg.loss)
                elif cfg.t_per_sample:
                    t_vec = np_rng.integers(0, cfg.T, size=len(idx))
                    abar = torch.from_numpy(
                        sched.alpha_bar[t_vec].astype(np.float32)
                    ).reshape(-1, 1, 1, 1, 1)
                    eps = torch.randn(Yb.shape)
                    noisy = torch.sqrt(abar) * Yb + torch.sqrt(1.0 - abar) * eps
                    raw = model.net_out(noisy, torch.from_numpy(t_vec), Xb)
                    loss = compute_loss(raw, Yb, eps, cfg.loss)
                else:
                    t = int(np_rng.integers(0, cfg.T))
                    eps = torch.randn(Yb.shape)
                    noisy = forward_diffuse(Yb, t, eps, sched)
                    raw = model.net_out(noisy, t, Xb)
                    loss = compute_loss(raw, Yb, eps, cfg.loss)

                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss {loss.item()} at step {step + 1} "
                        f"(snr {rho_db:.2f} dB); aborting"
                    )
                optim.zero_grad(set_to_none=True)
                loss.backward()
                pre_norm = float(
                    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
                )
                optim.step()
                step += 1
                if step % cfg.ema_interval == 0:
                    eff_decay = ema_decay_at(step // cfg.ema_interval, cfg.ema_decay)
                    shadow = ema_update(shadow, dict(model.state_dict()), eff_decay)
                if log_file is not None:
                    rec = {
                        "step": step,
                        "loss": float(loss.item()),
                        "grad_norm": min(pre_norm, cfg.grad_clip_norm),
                        "grad_norm_preclip": pre_norm,
                        "lr_encoder": cfg.lr_encoder,
                        "lr_generator": cfg.lr_generator,
                    }
                    log_file.write(json.dumps(rec, sort_keys=True) + "\n")
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    done = True
                    break
    finally:
        if log_file is not None:
            log_file.close()

    digest_src = json.dumps(np_rng.bit_generator.state, sort_keys=True, default=str).encode()
    digest_src += torch.get_rng_state().numpy().tobytes()
    digest = hashlib.sha256(digest_src).hexdigest()[:16]
    return Checkpoint(
        spec=spec,
        train_cfg=cfg,
        step=step,
        raw=_state_to_numpy(model.state_dict()),
        ema=_state_to_numpy(shadow),
        rng_digest=digest,
    )


# -- inference entry points ---------------------------------------------


def _as_batched_tensor(H_p: np.ndarray) -> Tuple[torch.Tensor, bool]:
    arr = np.ascontiguousarray(H_p, dtype=np.float32)
    if arr.ndim == 4:
        return torch.from_numpy(arr[None]), True
    if arr.ndim != 5:
        raise InputError(f"context must be [frames, 2, H, W] or batched, got {arr.shape}")
    return torch.from_numpy(arr), False


def infer_ar(H_p, ckpt: Checkpoint, icfg: InferConfig, seed: int = 0, use_ema: bool = True):
    """Frame-by-frame prediction; accepts any context length >= 1."""
    model = model_from_checkpoint(ckpt, use_ema=use_ema)
    ctx, squeeze = _as_batched_tensor(H_p)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        out = model._rollout_ar(ctx, icfg, gen, np.random.default_rng(seed))
    res = out.numpy()
    return res[0] if squeeze else res


def infer_seq2seq(
    H_p, ckpt: Checkpoint, icfg: InferConfig, seed: int = 0,
    horizon: Optional[int] = None, use_ema: bool = True,
):
    """Joint prediction of all future frames; context length is fixed.

    A horizon beyond the trained block length runs by re-windowing:
    predicted frames are appended and the newest n_past frames become
    the next context.
    """
    model = model_from_checkpoint(ckpt, use_ema=use_ema)
    ctx, squeeze = _as_batched_tensor(H_p)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        out = model._rollout_seq2seq(
            ctx, icfg, gen, np.random.default_rng(seed),
            horizon if horizon is not None else ckpt.spec.n_future,
        )
    res = out.numpy()
    return res[0] if squeeze else res


def infer_direct(H_p, ckpt: Checkpoint, seed: int = 0, use_ema: bool = True):
    """Single deterministic forward of a baseline forecaster."""
    model = model_from_checkpoint(ckpt, use_ema=use_ema)
    ctx, squeeze = _as_batched_tensor(H_p)
    with torch.no_grad():
        out = model.forecaster(ctx)
    res = out.numpy()
    return res[0] if squeeze else res


class CheckpointPredictor:
    """Reusable prediction handle: one model build, many predict calls."""

    def __init__(self, ckpt: Checkpoint, icfg: InferConfig, use_ema: bool = True):
        self.ckpt = ckpt
        self.icfg = icfg
        self.model = model_from_checkpoint(ckpt, use_ema=use_ema)
        self.name = ckpt.spec.name
        self.spec = ckpt.spec

    def with_config(self, icfg: InferConfig) -> "CheckpointPredictor":
        clone = object.__new__(CheckpointPredictor)
        clone.ckpt, clone.icfg, clone.model = self.ckpt, icfg, self.model
        clone.name, clone.spec = self.name, self.spec
        return clone

    def predict(self, X: np.ndarray, seed: int = 0, horizon: Optional[int] = None) -> np.ndarray:
        ctx, squeeze = _as_batched_tensor(X)
        gen = torch.Generator().manual_seed(seed)
        np_rng = np.random.default_rng(seed)
        mode = self.spec.inference_mode
        with torch.no_grad():
            if mode == "direct":
                out = self.model.forecaster(ctx)
            elif mode == "ar":
                out = self.model._rollout_ar(ctx, self.icfg, gen, np_rng)
            else:
                out = self.model._rollout_seq2seq(
                    ctx, self.icfg, gen, np_rng,
                    horizon if horizon is not None else self.spec.n_future,
                )
        res = out.numpy()
        return res[0] if squeeze else res


def make_predictor(ckpt: Checkpoint, icfg: Optional[InferConfig] = None, use_ema: bool = True) -> CheckpointPredictor:
    return CheckpointPredictor(ckpt, icfg or InferConfig(), use_ema=use_ema)


# -- checkpoint files -----------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = {
        "kind": "checkpoint",
        "spec": ckpt.spec.to_dict(),
        "train_cfg": ckpt.train_cfg.to_dict(),
        "step": ckpt.step,
        "rng_digest": ckpt.rng_digest,
    }
    arrays = {}
    for name in sorted(ckpt.raw):
        arrays[f"raw/{name}"] = ckpt.raw[name]
    for name in sorted(ckpt.ema):
        arrays[f"ema/{name}"] = ckpt.ema[name]
    datafile.write_tensor_file(path, meta, arrays)


def load_checkpoint(path, expected_spec: Optional[ModelSpec] = None) -> Checkpoint:
    meta, arrays = datafile.read_tensor_file(path)
    if meta.get("kind") != "checkpoint":
        raise UnsupportedFormatError(f"{path} is not a checkpoint file (kind={meta.get('kind')!r})")
    spec = ModelSpec.from_dict(meta["spec"])
    if expected_spec is not None and spec != expected_spec:
        raise CheckpointError(
            f"checkpoint was trained for {spec.name} with different settings than requested"
        )
    raw, ema = {}, {}
    for key, arr in arrays.items():
        group, _, name = key.partition("/")
        if group == "raw":
            raw[name] = arr
        elif group == "ema":
            ema[name] = arr
        else:
            raise UnsupportedFormatError(f"unexpected array group {group!r} in {path}")
    if raw.keys() != ema.keys():
        raise CheckpointError("raw and EMA parameter sets differ in names")
    return Checkpoint(
        spec=spec,
        train_cfg=TrainConfig.from_dict(meta["train_cfg"]),
        step=int(meta["step"]),
        raw=raw,
        ema=ema,
        rng_digest=meta.get("rng_digest", ""),
    )
