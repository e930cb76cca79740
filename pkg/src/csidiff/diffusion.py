"""Noise schedules, forward diffusion, DDIM steps, losses, and NMSE.

Everything here is a pure function.  Array arguments may be numpy
arrays or torch tensors; step coefficients are Python floats taken
from a float64 schedule, so the same code serves both training
(torch) and test oracles (numpy float64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateStepError,
    InputError,
    InvalidScheduleError,
    MetricError,
)

NMSE_FLOOR_DB = -120.0


@dataclass(frozen=True)
class NoiseSchedule:
    """Self-consistent (beta, alpha, alpha_bar) triple of length T."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_min: float
    beta_max: float

    def __post_init__(self) -> None:
        for name in ("beta", "alpha", "alpha_bar"):
            arr = getattr(self, name)
            if arr.shape != (self.T,):
                raise ConfigError(f"schedule {name} must have shape ({self.T},)")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"schedule {name} contains non-finite values")
        if np.any(self.beta < self.beta_min) or np.any(self.beta > self.beta_max):
            raise ConfigError("beta leaves the [beta_min, beta_max] clip range")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ConfigError("alpha_bar must be strictly decreasing")
        if np.any(self.alpha_bar <= 0) or np.any(self.alpha_bar >= 1):
            raise ConfigError("alpha_bar must lie in (0, 1)")


def cosine_alpha_bar(t: np.ndarray | float, T: int) -> np.ndarray | float:
    """Squared-cosine target cumulative product before any clipping."""
    return np.cos(((np.asarray(t, dtype=np.float64) / T + 0.008) / 1.008) * (math.pi / 2)) ** 2


def make_cosine_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """Squared-cosine schedule with per-step clipping.

    beta_t = 1 - abar_t / abar_{t-1} for t >= 1 (beta_0 = 1 - abar_0),
    clipped into [beta_min, beta_max]; alpha_bar is recomputed from the
    clipped betas so the stored triple stays self-consistent.
    """
    if T < 2:
        raise ConfigError(f"schedule length T must be >= 2, got {T}")
    if not (0 < beta_min < beta_max < 1):
        raise ConfigError(f"need 0 < beta_min < beta_max < 1, got [{beta_min}, {beta_max}]")
    abar_raw = np.asarray(cosine_alpha_bar(np.arange(T), T))
    beta = np.empty(T, dtype=np.float64)
    beta[0] = 1.0 - abar_raw[0]
    beta[1:] = 1.0 - abar_raw[1:] / abar_raw[:-1]
    beta = np.clip(beta, beta_min, beta_max)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(
        T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar, beta_min=beta_min, beta_max=beta_max
    )


@dataclass(frozen=True)
class SamplerConfig:
    num_sample_steps: int = 3
    zeta: float = 0.0
    substep_rule: str = "even_including_final"

    def __post_init__(self) -> None:
        if self.num_sample_steps < 1:
            raise ConfigError("num_sample_steps must be >= 1")
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.substep_rule != "even_including_final":
            raise ConfigError(f"unknown substep_rule {self.substep_rule!r}")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "huber_on_sample"
    huber_delta: float = 0.016

    _KINDS = ("huber_on_sample", "mse_on_sample", "mse_on_noise")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ConfigError(f"loss kind must be one of {self._KINDS}, got {self.kind!r}")
        if self.huber_delta <= 0:
            raise ConfigError("huber_delta must be positive")


def _check_step(t: int, sched: NoiseSchedule) -> None:
    if not 0 <= t < sched.T:
        raise InputError(f"step t={t} outside [0, {sched.T})")


def forward_diffuse(H0, t: int, eps, sched: NoiseSchedule):
    """sqrt(abar_t) * H0 + sqrt(1 - abar_t) * eps."""
    _check_step(t, sched)
    if tuple(eps.shape) != tuple(H0.shape):
        raise InputError(f"eps shape {tuple(eps.shape)} != H0 shape {tuple(H0.shape)}")
    abar = float(sched.alpha_bar[t])
    return math.sqrt(abar) * H0 + math.sqrt(1.0 - abar) * eps


def noise_from_sample(Ht, H0hat, t: int, sched: NoiseSchedule):
    """Invert forward_diffuse: (Ht - sqrt(abar_t) * H0hat) / sqrt(1 - abar_t)."""
    _check_step(t, sched)
    abar = float(sched.alpha_bar[t])
    if abar >= 1.0 - 1e-12:
        raise DegenerateStepError(f"alpha_bar[{t}] = {abar} is too close to 1")
    return (Ht - math.sqrt(abar) * H0hat) / math.sqrt(1.0 - abar)


def sample_from_noise(Ht, eps_hat, t: int, sched: NoiseSchedule):
    """Recover the clean-sample estimate implied by a noise prediction."""
    _check_step(t, sched)
    abar = float(sched.alpha_bar[t])
    return (Ht - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)


def ddim_sigma(t: int, t_prev: int, zeta: float, sched: NoiseSchedule) -> float:
    """Stochasticity scale: zeta * sqrt((1-abar_prev)/(1-abar_t)) * sqrt(1-abar_t/abar_prev)."""
    _check_step(t, sched)
    abar_t = float(sched.alpha_bar[t])
    abar_prev = 1.0 if t_prev < 0 else float(sched.alpha_bar[t_prev])
    return zeta * math.sqrt((1.0 - abar_prev) / (1.0 - abar_t)) * math.sqrt(1.0 - abar_t / abar_prev)


def ddim_step(Ht, H0hat, t: int, t_prev: int, cfg: SamplerConfig, sched: NoiseSchedule, rng=None):
    """One DDIM update from step t to t_prev (t_prev = -1 means the clean end).

    With zeta = 0 the step is deterministic and draws nothing from rng;
    rng is only consulted when sigma > 0 and must then provide
    ``standard_normal(shape)``.
    """
    if t_prev >= t:
        raise InputError(f"t_prev={t_prev} must be < t={t}")
    abar_prev = 1.0 if t_prev < 0 else float(sched.alpha_bar[t_prev])
    sigma = ddim_sigma(t, t_prev, cfg.zeta, sched)
    k = 1.0 - abar_prev - sigma * sigma
    if k < -1e-12:
        raise InvalidScheduleError(
            f"1 - abar_prev - sigma^2 = {k} < 0 at (t={t}, t_prev={t_prev}, zeta={cfg.zeta})"
        )
    k = max(k, 0.0)
    eps_hat = noise_from_sample(Ht, H0hat, t, sched)
    out = math.sqrt(abar_prev) * H0hat + math.sqrt(k) * eps_hat
    if sigma > 0.0:
        if rng is None:
            raise InputError("ddim_step with zeta > 0 requires an rng")
        out = out + sigma * rng.standard_normal(tuple(Ht.shape))
    return out


def make_substeps(T_train: int, n: int) -> list[tuple[int, int]]:
    """n evenly spaced steps including T_train - 1, paired descending.

    The i-th visited step is T_train - 1 - round(i * T_train / n); the
    final pair ends at -1 (the clean sample).
    """
    if not 1 <= n <= T_train:
        raise InputError(f"need 1 <= n <= T_train, got n={n}, T_train={T_train}")
    ts = [T_train - 1 - round(i * T_train / n) for i in range(n)]
    return [(ts[i], ts[i + 1] if i + 1 < n else -1) for i in range(n)]


def huber_loss(y, yhat, delta: float):
    """Mean element-wise Huber loss: quadratic inside |err| <= delta, linear outside."""
    if delta <= 0:
        raise InputError("huber_loss: delta must be positive")
    if tuple(y.shape) != tuple(yhat.shape):
        raise InputError(f"huber_loss: shape mismatch {tuple(y.shape)} vs {tuple(yhat.shape)}")
    err = y - yhat
    a = abs(err)
    quad = 0.5 * err * err
    lin = delta * (a - 0.5 * delta)
    if isinstance(y, np.ndarray):
        return float(np.where(a <= delta, quad, lin).mean())
    import torch

    return torch.where(a <= delta, quad, lin).mean()


def compute_loss(pred, target_sample, eps, loss_cfg: LossConfig):
    """Training loss for the configured kind (sample- or noise-space)."""
    if loss_cfg.kind == "huber_on_sample":
        return huber_loss(target_sample, pred, loss_cfg.huber_delta)
    if loss_cfg.kind == "mse_on_sample":
        return ((target_sample - pred) ** 2).mean()
    return ((eps - pred) ** 2).mean()


def nmse_linear(H_true: np.ndarray, H_pred: np.ndarray) -> float:
    """Mean over samples of ||H - Hhat||^2 / ||H||^2 (axis 0 is the sample axis)."""
    if H_true.shape != H_pred.shape:
        raise InputError(f"nmse: shape mismatch {H_true.shape} vs {H_pred.shape}")
    flat_t = H_true.reshape(H_true.shape[0], -1)
    flat_p = H_pred.reshape(H_pred.shape[0], -1)
    denom = np.sum(np.abs(flat_t) ** 2, axis=1)
    if np.any(denom == 0):
        raise MetricError("nmse undefined: a ground-truth sample has zero norm")
    num = np.sum(np.abs(flat_t - flat_p) ** 2, axis=1)
    return float(np.mean(num / denom))


def nmse_db(H_true: np.ndarray, H_pred: np.ndarray) -> float:
    """10*log10 of the mean linear ratio, clamped below at -120 dB."""
    ratio = nmse_linear(H_true, H_pred)
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return max(10.0 * math.log10(ratio), NMSE_FLOOR_DB)
