"""Time-varying MIMO channel generation and dataset packaging.

A channel sequence is a sum over clusters and rays of Doppler-rotating
complex gains times the transmit steering vector and a per-subcarrier
delay phase.  Sequences are cut into (past, future) pairs, min-max
scaled with training-split extrema, and stored in the self-describing
binary container from :mod:`csidiff.datafile`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .datafile import read_tensor_file, write_tensor_file
from .errors import ConfigError, DataError, InputError
from .profiles import CdlProfile

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelConfig:
    carrier_freq_hz: float = 28e9
    num_tx: int = 16
    num_rx: int = 1
    num_subcarriers_total: int = 300
    num_subcarriers_kept: int = 16
    symbol_duration_s: float = 33.3e-6
    num_steps: int = 100
    antenna_spacing_ratio: float = 0.5
    velocity_range_kmh: tuple[float, float] = (30.0, 120.0)
    delay_spread_range_ns: tuple[float, float] = (50.0, 400.0)

    def __post_init__(self) -> None:
        if self.carrier_freq_hz <= 0:
            raise ConfigError("carrier_freq_hz must be positive")
        if self.num_tx < 1 or self.num_steps < 1:
            raise ConfigError("num_tx and num_steps must be >= 1")
        if self.num_rx != 1:
            raise ConfigError("only num_rx = 1 is supported")
        if self.num_subcarriers_kept < 1 or self.num_subcarriers_total < self.num_subcarriers_kept:
            raise ConfigError(
                "need 1 <= num_subcarriers_kept <= num_subcarriers_total, got "
                f"{self.num_subcarriers_kept} of {self.num_subcarriers_total}"
            )
        if self.symbol_duration_s <= 0 or self.antenna_spacing_ratio <= 0:
            raise ConfigError("symbol_duration_s and antenna_spacing_ratio must be positive")
        for label, rng in (
            ("velocity_range_kmh", self.velocity_range_kmh),
            ("delay_spread_range_ns", self.delay_spread_range_ns),
        ):
            if len(rng) != 2 or rng[0] > rng[1]:
                raise ConfigError(f"{label} must be (low, high) with low <= high")

    @property
    def kept_subcarrier_indices(self) -> np.ndarray:
        """Evenly spaced indices into the total grid, first index 0."""
        stride = self.num_subcarriers_total // self.num_subcarriers_kept
        return np.arange(self.num_subcarriers_kept) * stride

    @property
    def subcarrier_freqs_hz(self) -> np.ndarray:
        """Frequency offsets f_m = m * f_s / N_total at the kept indices."""
        f_s = 1.0 / self.symbol_duration_s
        return self.kept_subcarrier_indices * (f_s / self.num_subcarriers_total)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["velocity_range_kmh"] = list(self.velocity_range_kmh)
        d["delay_spread_range_ns"] = list(self.delay_spread_range_ns)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelConfig":
        kwargs = dict(data)
        for key in ("velocity_range_kmh", "delay_spread_range_ns"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class PathGainParams:
    power_linear: float
    doppler_cycles_per_step: float
    init_phase_rad: float

    def __post_init__(self) -> None:
        if self.power_linear < 0:
            raise InputError("power_linear must be >= 0")
        if not 0 <= self.init_phase_rad < 2 * math.pi:
            raise InputError("init_phase_rad must lie in [0, 2*pi)")


def array_response(phi: float, num_elems: int, spacing_ratio: float) -> np.ndarray:
    """Uniform linear array steering vector, unit L2 norm.

    Element k is exp(j*2*pi*spacing_ratio*k*sin(phi)) / sqrt(num_elems).
    """
    if not math.isfinite(phi):
        raise InputError(f"array_response: phi must be finite, got {phi}")
    if num_elems < 1:
        raise InputError("array_response: num_elems must be >= 1")
    k = np.arange(num_elems)
    return np.exp(1j * 2 * math.pi * spacing_ratio * k * math.sin(phi)) / math.sqrt(num_elems)


def path_gain(params: PathGainParams, n: int) -> complex:
    """Complex gain sqrt(P) * exp(j*(2*pi*f*n + phi)) at step n."""
    if n < 0:
        raise InputError("path_gain: n must be >= 0")
    phase = 2 * math.pi * params.doppler_cycles_per_step * n + params.init_phase_rad
    return math.sqrt(params.power_linear) * complex(math.cos(phase), math.sin(phase))


@dataclass(frozen=True)
class CsiSequence:
    """Complex channel evolution [num_steps, N_t, N_c] plus generation metadata."""

    data: np.ndarray
    meta: dict

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise InputError(f"CsiSequence data must be 3D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise InputError("CsiSequence contains non-finite entries")

    def packed(self) -> np.ndarray:
        """Real/imaginary view [num_steps, 2, N_t, N_c]; lossless round trip."""
        return np.stack([self.data.real, self.data.imag], axis=1)

    @staticmethod
    def unpack(packed: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`packed`: [*, 2, N_t, N_c] -> complex [*, N_t, N_c]."""
        return packed[..., 0, :, :] + 1j * packed[..., 1, :, :]


def generate_channel(
    profile: CdlProfile,
    cfg: ChannelConfig,
    velocity_kmh: float,
    delay_spread_ns: float,
    seed: int,
) -> CsiSequence:
    """Generate one channel sequence, a pure function of its arguments.

    Per-ray initial phases and the travel direction come from a stream
    seeded with ``seed``; the Doppler of each ray is
    (v/c) * f_c * cos(aoa - travel_direction) * T_sym cycles per step.
    """
    if profile.num_clusters == 0:
        raise ConfigError("generate_channel: profile has no clusters")
    rng = np.random.default_rng(seed)
    travel_dir = rng.uniform(0.0, 2 * math.pi)
    L, R = profile.num_clusters, profile.rays_per_cluster
    init_phases = rng.uniform(0.0, 2 * math.pi, size=(L, R))

    ray_power = (profile.powers_linear() / R)[:, None] * np.ones((L, R))
    aoa_rad = np.deg2rad(profile.ray_aoa_deg())
    aod_rad = np.deg2rad(profile.ray_aod_deg())
    v_mps = velocity_kmh / 3.6
    doppler = (
        (v_mps / SPEED_OF_LIGHT)
        * cfg.carrier_freq_hz
        * np.cos(aoa_rad - travel_dir)
        * cfg.symbol_duration_s
    )

    # gains[n, l*R+r] = sqrt(P) * exp(j*(2*pi*f*n + phi))
    n = np.arange(cfg.num_steps)[:, None]
    phases = 2 * math.pi * doppler.reshape(-1)[None, :] * n + init_phases.reshape(-1)[None, :]
    gains = np.sqrt(ray_power.reshape(-1))[None, :] * np.exp(1j * phases)

    # Transmit steering (conjugated by the Hermitian in the channel sum);
    # the single receive element contributes a unit factor.
    k = np.arange(cfg.num_tx)
    steer = np.exp(
        1j * 2 * math.pi * cfg.antenna_spacing_ratio * np.sin(aod_rad.reshape(-1))[:, None] * k
    ) / math.sqrt(cfg.num_tx)

    tau_s = profile.normalized_delays() * delay_spread_ns * 1e-9
    delay_phase = np.exp(
        -1j * 2 * math.pi * cfg.subcarrier_freqs_hz[None, :] * tau_s[:, None]
    )  # [L, N_c]
    delay_phase = np.repeat(delay_phase, R, axis=0)  # [L*R, N_c]

    basis = np.conj(steer)[:, :, None] * delay_phase[:, None, :]  # [L*R, N_t, N_c]
    H = gains @ basis.reshape(L * R, -1)
    H = H.reshape(cfg.num_steps, cfg.num_tx, cfg.num_subcarriers_kept)
    meta = {
        "profile": profile.name,
        "velocity_kmh": float(velocity_kmh),
        "delay_spread_ns": float(delay_spread_ns),
        "seed": int(seed),
    }
    return CsiSequence(data=H, meta=meta)


@dataclass(frozen=True)
class MinMaxScaler:
    """Global min/max over packed real/imaginary values of the training split."""

    min_val: float
    max_val: float

    def __post_init__(self) -> None:
        if not (self.max_val > self.min_val):
            raise ConfigError(
                f"MinMaxScaler needs max_val > min_val, got [{self.min_val}, {self.max_val}]"
            )

    @classmethod
    def fit(cls, *arrays: np.ndarray) -> "MinMaxScaler":
        lo = min(float(a.min()) for a in arrays if a.size)
        hi = max(float(a.max()) for a in arrays if a.size)
        return cls(min_val=lo, max_val=hi)

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.max_val - self.min_val
        return ((x - self.min_val) / span).astype(x.dtype, copy=False)

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        span = self.max_val - self.min_val
        return (x * span + self.min_val).astype(x.dtype, copy=False)


@dataclass
class DatasetBundle:
    """Scaled (X, Y) splits plus the scaler and generation provenance.

    splits maps "train"/"val"/"test" to (X, Y) float32 arrays of shapes
    [n, N_p, 2, N_t, N_c] and [n, N_f, 2, N_t, N_c]; values are scaled
    so the training split lies in [0, 1].
    """

    splits: dict[str, tuple[np.ndarray, np.ndarray]]
    scaler: MinMaxScaler
    provenance: dict = field(default_factory=dict)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.splits:
            raise DataError(f"dataset has no split {name!r}")
        return self.splits[name]


def _sample_params(
    profiles: list[CdlProfile],
    cfg: ChannelConfig,
    n_past: int,
    n_future: int,
    rng: np.random.Generator,
    velocity_kmh: float | None,
) -> tuple[int, float, float, int, int]:
    """Draw (profile index, velocity, delay spread, window start, channel seed)."""
    p_idx = int(rng.integers(len(profiles)))
    vel = float(rng.uniform(*cfg.velocity_range_kmh)) if velocity_kmh is None else velocity_kmh
    ds = float(rng.uniform(*cfg.delay_spread_range_ns))
    start = int(rng.integers(0, cfg.num_steps - (n_past + n_future) + 1))
    chan_seed = int(rng.integers(0, 2**63 - 1))
    return p_idx, vel, ds, start, chan_seed


def generate_pairs(
    cfg: ChannelConfig,
    profiles: list[CdlProfile],
    num_samples: int,
    n_past: int,
    n_future: int,
    seed: int,
    velocity_kmh: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Generate unscaled float32 (X, Y) pairs, one window per sequence.

    Per-sample randomness comes from a stream seeded with seed XOR index,
    so generation order is irrelevant and parallelizable.  A fixed
    ``velocity_kmh`` pins every sample to that speed (used by sweeps).
    """
    if num_samples < 1:
        raise ConfigError("num_samples must be >= 1")
    if n_past < 1 or n_future < 1 or n_past + n_future > cfg.num_steps:
        raise ConfigError(
            f"need 1 <= n_past, n_future and n_past + n_future <= num_steps "
            f"({n_past} + {n_future} vs {cfg.num_steps})"
        )
    if not profiles:
        raise ConfigError("profile list is empty")
    X = np.empty((num_samples, n_past, 2, cfg.num_tx, cfg.num_subcarriers_kept), np.float32)
    Y = np.empty((num_samples, n_future, 2, cfg.num_tx, cfg.num_subcarriers_kept), np.float32)
    for i in range(num_samples):
        rng = np.random.default_rng(seed ^ i)
        p_idx, vel, ds, start, chan_seed = _sample_params(
            profiles, cfg, n_past, n_future, rng, velocity_kmh
        )
        seq = generate_channel(profiles[p_idx], cfg, vel, ds, chan_seed)
        packed = seq.packed().astype(np.float32)
        X[i] = packed[start:start + n_past]
        Y[i] = packed[start + n_past:start + n_past + n_future]
    return X, Y


def build_dataset(
    cfg: ChannelConfig,
    profiles: list[CdlProfile],
    num_samples: int,
    n_past: int = 30,
    n_future: int = 10,
    split_fracs: tuple[float, float, float] = (0.9, 0.05, 0.05),
    seed: int = 0,
) -> DatasetBundle:
    """Generate, window, split, and scale a dataset.

    The scaler is fit on the training split only and applied everywhere.
    Split sizes are round(n * f_train), round(n * f_val), remainder.
    """
    if len(split_fracs) != 3 or any(f < 0 for f in split_fracs):
        raise ConfigError("split_fracs must be three non-negative fractions")
    if abs(sum(split_fracs) - 1.0) > 1e-9:
        raise ConfigError(f"split_fracs must sum to 1, got {sum(split_fracs)}")
    n_train = round(num_samples * split_fracs[0])
    n_val = round(num_samples * split_fracs[1])
    n_test = num_samples - n_train - n_val
    if n_train < 1:
        raise ConfigError(f"split {split_fracs} of {num_samples} samples leaves the train set empty")
    if n_test < 0:
        raise ConfigError(f"split {split_fracs} of {num_samples} samples overflows")

    X, Y = generate_pairs(cfg, profiles, num_samples, n_past, n_future, seed)
    bounds = {"train": (0, n_train), "val": (n_train, n_train + n_val),
              "test": (n_train + n_val, num_samples)}
    scaler = MinMaxScaler.fit(X[:n_train], Y[:n_train])
    splits = {
        name: (scaler.transform(X[a:b]), scaler.transform(Y[a:b]))
        for name, (a, b) in bounds.items()
    }
    provenance = {
        "channel": cfg.to_dict(),
        "profiles": [p.name for p in profiles],
        "num_samples": num_samples,
        "n_past": n_past,
        "n_future": n_future,
        "split_fracs": list(split_fracs),
        "seed": seed,
    }
    return DatasetBundle(splits=splits, scaler=scaler, provenance=provenance)


def corrupt_with_snr(X: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Return sqrt(rho) * X + N with rho = 10^(snr_db/10), N standard normal."""
    if not np.all(np.isfinite(X)):
        raise InputError("corrupt_with_snr: input contains non-finite values")
    rho = 10.0 ** (snr_db / 10.0)
    if X.dtype == np.float32:
        noise = rng.standard_normal(X.shape, dtype=np.float32)
        return np.float32(math.sqrt(rho)) * X + noise
    return math.sqrt(rho) * X + rng.standard_normal(X.shape)


def write_dataset(bundle: DatasetBundle, path: str | Path) -> None:
    meta = {
        "kind": "dataset",
        "scaler": {"min_val": bundle.scaler.min_val, "max_val": bundle.scaler.max_val},
        "provenance": bundle.provenance,
    }
    arrays = {}
    for name, (X, Y) in bundle.splits.items():
        arrays[f"{name}/X"] = X
        arrays[f"{name}/Y"] = Y
    write_tensor_file(path, meta, arrays)


def read_dataset(path: str | Path) -> DatasetBundle:
    header, arrays = read_tensor_file(path)
    if header.get("kind") != "dataset":
        raise DataError(f"{path}: not a dataset file (kind={header.get('kind')!r})")
    splits: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for key in arrays:
        name, part = key.split("/", 1)
        if part == "X":
            splits[name] = (arrays[key], arrays[f"{name}/Y"])
    scaler = MinMaxScaler(**header["scaler"])
    return DatasetBundle(splits=splits, scaler=scaler, provenance=header["provenance"])
