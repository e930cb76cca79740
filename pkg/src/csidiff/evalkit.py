"""NMSE evaluation, figure-axis sweeps, complexity reporting, CSV/plot export.

Averaging convention: per prediction step, the NMSE linear ratio is
averaged over test samples and then converted to dB; the across-step
average row (prediction_step = 0) averages the per-step linear ratios
before the dB transform.  Predictions and truth are inverse min-max
scaled back to complex CSI before any norm is taken.

Column conventions: velocity = -1 marks the mixed-velocity test set;
sampling_steps = 0 marks models that do not sample (direct baselines,
stubs); prediction_step = 0 is the across-step average row.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .chansim import ChannelConfig, DatasetBundle, MinMaxScaler, corrupt_with_snr, generate_pairs
from .diffusion import NMSE_FLOOR_DB, nmse_linear
from .errors import ConfigError, DataError, InputError
from .nets import count_params, estimate_flops
from .pipeline import Checkpoint, CheckpointPredictor, InferConfig, ModelSpec, build_model, make_predictor

log = logging.getLogger(__name__)

MIXED_VELOCITY = -1.0
AVERAGE_STEP = 0
NMSE_CEIL_DB = 40.0
CSV_HEADER = (
    "model", "snr_db", "velocity", "context_len",
    "sampling_steps", "prediction_step", "nmse_db", "n_samples",
)


@dataclass(frozen=True)
class EvalConfig:
    snr_grid_db: Tuple[float, ...] = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    velocities_kmh: Tuple[float, ...] = (30.0, 60.0, 120.0)
    context_lengths: Tuple[int, ...] = (5, 10, 20, 30, 40)
    sampling_steps_grid: Tuple[int, ...] = (2, 3, 4, 5, 10, 100)
    horizon: int = 10
    num_test_samples: Optional[int] = None
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("snr_grid_db", "velocities_kmh", "context_lengths", "sampling_steps_grid"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"EvalConfig.{name} must be non-empty")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.num_test_samples is not None and self.num_test_samples < 1:
            raise ConfigError("num_test_samples must be >= 1 when set")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "EvalConfig":
        d = dict(d)
        for name in ("snr_grid_db", "velocities_kmh", "context_lengths", "sampling_steps_grid"):
            if name in d:
                d[name] = tuple(d[name])
        return EvalConfig(**d)


@dataclass(frozen=True)
class ResultRow:
    model: str
    snr_db: float
    velocity: float
    context_len: int
    sampling_steps: int
    prediction_step: int
    nmse_db: float
    n_samples: int

    def __post_init__(self) -> None:
        # canonicalize floats to the 6 significant digits the CSV carries,
        # so export followed by read_csv reproduces rows exactly
        for name in ("snr_db", "velocity", "nmse_db"):
            object.__setattr__(self, name, _sig6(float(getattr(self, name))))

    def key(self) -> tuple:
        return (
            self.model, self.snr_db, self.velocity, self.context_len,
            self.sampling_steps, self.prediction_step,
        )


@dataclass
class ResultTable:
    rows: List[ResultRow] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, row: ResultRow) -> None:
        if any(row.key() == r.key() for r in self.rows):
            raise InputError(f"duplicate result row for key {row.key()}")
        self.rows.append(row)

    def extend(self, other: "ResultTable") -> None:
        for row in other.rows:
            self.add(row)

    def filter(self, **kv) -> List[ResultRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kv.items())]


def _sig6(x: float) -> float:
    """Round to the 6 significant digits the CSV carries, keeping dB honest."""
    return float(f"{x:.6g}")


def _clamp_db(x: float) -> float:
    return min(max(x, NMSE_FLOOR_DB), NMSE_CEIL_DB)


def _ratio_to_db(ratio: float) -> float:
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return _clamp_db(10.0 * math.log10(ratio))


def _to_complex(packed: np.ndarray) -> np.ndarray:
    """[..., 2, H, W] real/imag ->  complex [..., H, W]."""
    return packed[..., 0, :, :] + 1j * packed[..., 1, :, :]


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


class OracleStub:
    """Returns the unscaled ground truth; pins the metric path at -120 dB."""

    name = "oracle-stub"
    predicts_unscaled = True
    wants_indices = True

    def __init__(self, data: DatasetBundle):
        _, Y = data.split("test")
        self.truth = data.scaler.inverse_transform(Y)

    def predict(self, X, seed: int = 0, horizon: Optional[int] = None, indices=None):
        return self.truth[indices]


class ZeroStub:
    """Predicts the all-zero channel; exactly 0 dB NMSE by construction."""

    name = "zero-stub"
    predicts_unscaled = True
    wants_indices = False

    def __init__(self, n_future: int):
        self.n_future = n_future

    def predict(self, X, seed: int = 0, horizon: Optional[int] = None, indices=None):
        n = horizon if horizon is not None else self.n_future
        return np.zeros((X.shape[0], n) + X.shape[2:], np.float32)


def _as_predictor(model) -> object:
    if isinstance(model, Checkpoint):
        return make_predictor(model)
    if hasattr(model, "predict"):
        return model
    raise ConfigError(f"evaluate() needs a Checkpoint or predictor, got {type(model).__name__}")


def _predict_batches(predictor, Xc: np.ndarray, ecfg: EvalConfig, horizon: int) -> np.ndarray:
    outs = []
    for ci, start in enumerate(range(0, Xc.shape[0], ecfg.batch_size)):
        stop = min(start + ecfg.batch_size, Xc.shape[0])
        kwargs = {"seed": ecfg.seed * 100_003 + ci, "horizon": horizon}
        if getattr(predictor, "wants_indices", False):
            kwargs["indices"] = np.arange(start, stop)
        out = np.asarray(predictor.predict(Xc[start:stop], **kwargs))
        if out.shape[1] < horizon:
            raise InputError(
                f"{getattr(predictor, 'name', 'predictor')} returned {out.shape[1]} frames, "
                f"need {horizon}"
            )
        outs.append(out[:, :horizon])
    return np.concatenate(outs, axis=0)


def evaluate(
    model,
    data: DatasetBundle,
    ecfg: EvalConfig,
    icfg: Optional[InferConfig] = None,
    *,
    velocity: float = MIXED_VELOCITY,
    context_len: Optional[int] = None,
    snr_grid: Optional[Sequence[float]] = None,
) -> ResultTable:
    """Per-SNR, per-prediction-step NMSE on the test split.

    Emits horizon + 1 rows per SNR point: steps 1..horizon plus the
    across-step average at prediction_step = 0.
    """
    predictor = _as_predictor(model)
    X, Y = data.split("test")
    if X.shape[0] == 0:
        raise DataError("test split is empty")
    if ecfg.num_test_samples is not None:
        X, Y = X[: ecfg.num_test_samples], Y[: ecfg.num_test_samples]
    if ecfg.horizon > Y.shape[1]:
        raise InputError(f"horizon {ecfg.horizon} exceeds dataset future length {Y.shape[1]}")
    if context_len is not None:
        if not 1 <= context_len <= X.shape[1]:
            raise InputError(f"context_len {context_len} outside [1, {X.shape[1]}]")
        X = X[:, -context_len:]

    spec = getattr(predictor, "spec", None)
    if spec is not None and X.shape[2:] != (2, spec.n_tx, spec.n_carriers):
        raise ConfigError(
            f"dataset frames {X.shape[2:]} do not match model {spec.name} "
            f"(expects (2, {spec.n_tx}, {spec.n_carriers}))"
        )
    normalized = (
        isinstance(predictor, CheckpointPredictor)
        and predictor.ckpt.train_cfg.normalized_corruption
    )
    unscaled = getattr(predictor, "predicts_unscaled", False)
    truth_c = _to_complex(data.scaler.inverse_transform(Y[:, : ecfg.horizon]))

    table = ResultTable(provenance={
        "checkpoint_digest": getattr(getattr(predictor, "ckpt", None), "rng_digest", "") or
            getattr(predictor, "name", type(predictor).__name__),
        "dataset_digest": _digest(X, Y),
        "eval_seed": ecfg.seed,
    })
    base_icfg = icfg or (predictor.icfg if isinstance(predictor, CheckpointPredictor) else InferConfig())
    for si, snr in enumerate(snr_grid if snr_grid is not None else ecfg.snr_grid_db):
        rng = np.random.default_rng([ecfg.seed & 0x7FFFFFFF, si])
        if math.isinf(snr):  # clean context, no corruption
            Xc = X
        else:
            Xc = corrupt_with_snr(X, float(snr), rng)
            if normalized:
                Xc = Xc / np.float32(math.sqrt(10.0 ** (snr / 10.0)))
        p = predictor
        if isinstance(predictor, CheckpointPredictor):
            p = predictor.with_config(dataclasses.replace(base_icfg, inference_snr_db=float(snr)))
        pred = _predict_batches(p, Xc, ecfg, ecfg.horizon)
        pred_c = _to_complex(pred if unscaled else data.scaler.inverse_transform(pred))

        if isinstance(predictor, CheckpointPredictor):
            steps_label = 0 if spec.inference_mode == "direct" else base_icfg.num_sample_steps
        else:
            steps_label = 0
        ratios = [
            nmse_linear(truth_c[:, s], pred_c[:, s]) for s in range(ecfg.horizon)
        ]
        common = dict(
            model=getattr(predictor, "name", type(predictor).__name__),
            snr_db=_sig6(float(snr)),
            velocity=_sig6(velocity),
            context_len=context_len if context_len is not None else X.shape[1],
            sampling_steps=steps_label,
            n_samples=X.shape[0],
        )
        for s, ratio in enumerate(ratios, start=1):
            table.add(ResultRow(prediction_step=s, nmse_db=_sig6(_ratio_to_db(ratio)), **common))
        table.add(ResultRow(
            prediction_step=AVERAGE_STEP,
            nmse_db=_sig6(_ratio_to_db(float(np.mean(ratios)))),
            **common,
        ))
    return table


def sweep_velocity(
    ckpt,
    gen_cfg: ChannelConfig,
    ecfg: EvalConfig,
    profiles,
    scaler: Optional[MinMaxScaler] = None,
    icfg: Optional[InferConfig] = None,
) -> ResultTable:
    """Regenerate fixed-velocity test sets (seeded) and evaluate each.

    Pass the training bundle's scaler so predictions stay in the scale
    the checkpoint was trained on; without one, each velocity set is
    self-scaled.
    """
    predictor = _as_predictor(ckpt)
    spec = getattr(predictor, "spec", None)
    n_past = spec.n_past if spec is not None else gen_cfg.num_steps - ecfg.horizon
    num = ecfg.num_test_samples or 64
    merged = ResultTable()
    for vi, vel in enumerate(ecfg.velocities_kmh):
        X, Y = generate_pairs(
            gen_cfg, profiles, num, n_past, ecfg.horizon,
            seed=ecfg.seed ^ (0x5EED + vi), velocity_kmh=float(vel),
        )
        sc = scaler if scaler is not None else MinMaxScaler.fit(X, Y)
        bundle = DatasetBundle(
            splits={"train": (sc.transform(X[:1]), sc.transform(Y[:1])),
                    "test": (sc.transform(X), sc.transform(Y))},
            scaler=sc,
            provenance={"velocity_kmh": float(vel)},
        )
        merged.extend(evaluate(predictor, bundle, ecfg, icfg, velocity=float(vel)))
    merged.provenance = {"sweep": "velocity", "eval_seed": ecfg.seed}
    return merged


def sweep_context(ckpt, data: DatasetBundle, ecfg: EvalConfig, icfg: Optional[InferConfig] = None) -> ResultTable:
    """Evaluate one AR checkpoint at every context length, no retraining."""
    predictor = _as_predictor(ckpt)
    spec = getattr(predictor, "spec", None)
    if spec is None or spec.inference_mode != "ar":
        raise ConfigError("sweep_context needs an autoregressive checkpoint")
    X, _ = data.split("test")
    too_long = [c for c in ecfg.context_lengths if c > X.shape[1]]
    if too_long:
        raise InputError(
            f"context lengths {too_long} exceed the dataset's {X.shape[1]} past frames; "
            "generate the dataset with more context"
        )
    merged = ResultTable()
    for c in ecfg.context_lengths:
        merged.extend(evaluate(predictor, data, ecfg, icfg, context_len=int(c)))
    merged.provenance = {"sweep": "context", "eval_seed": ecfg.seed}
    return merged


def sweep_sampling_steps(ckpt, data: DatasetBundle, ecfg: EvalConfig, icfg: Optional[InferConfig] = None) -> ResultTable:
    """Evaluate at each sampling-step count with identical noise seeds."""
    predictor = _as_predictor(ckpt)
    spec = getattr(predictor, "spec", None)
    if spec is None or spec.inference_mode == "direct":
        raise ConfigError("sampling-step sweep needs a diffusion checkpoint")
    base = icfg or predictor.icfg
    merged = ResultTable()
    for k in ecfg.sampling_steps_grid:
        merged.extend(evaluate(
            predictor, data, ecfg,
            dataclasses.replace(base, num_sample_steps=int(k)),
        ))
    merged.provenance = {"sweep": "sampling_steps", "eval_seed": ecfg.seed}
    return merged


# -- export ---------------------------------------------------------------


def export_csv(table: ResultTable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in table.rows:
            w.writerow([
                r.model, f"{r.snr_db:.6g}", f"{r.velocity:.6g}", r.context_len,
                r.sampling_steps, r.prediction_step, f"{r.nmse_db:.6g}", r.n_samples,
            ])
    return path


def read_csv(path) -> ResultTable:
    table = ResultTable()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise DataError(f"{path} is not a result CSV (header {header})")
        for rec in reader:
            table.add(ResultRow(
                model=rec[0], snr_db=float(rec[1]), velocity=float(rec[2]),
                context_len=int(rec[3]), sampling_steps=int(rec[4]),
                prediction_step=int(rec[5]), nmse_db=float(rec[6]), n_samples=int(rec[7]),
            ))
    return table


def _line_label(row: ResultRow, varying: List[str]) -> str:
    parts = [row.model]
    if "velocity" in varying and row.velocity != MIXED_VELOCITY:
        parts.append(f"{row.velocity:g} km/h")
    if "context_len" in varying:
        parts.append(f"ctx {row.context_len}")
    if "sampling_steps" in varying and row.sampling_steps > 0:
        parts.append(f"{row.sampling_steps} steps")
    return ", ".join(parts)


def emit_plots(table: ResultTable, out_dir) -> dict:
    """NMSE-vs-step (one file per SNR) and NMSE-vs-SNR (first/last/average)
    line charts, plus a JSON summary of per-figure best/worst models.

    Returns {"figures": [paths], "summary": path or None, "status": ...};
    never mutates the table.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    if not table.rows:
        log.warning("emit_plots: empty result table, nothing to draw")
        return {"figures": [], "summary": None, "status": "empty"}
    out_dir.mkdir(parents=True, exist_ok=True)

    varying = [
        name for name in ("velocity", "context_len", "sampling_steps")
        if len({getattr(r, name) for r in table.rows}) > 1
    ]
    figures: List[str] = []
    summary: dict = {}

    def draw(fig_name: str, series: dict, xlabel: str, title: str):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        means = {}
        for label in sorted(series):
            xs, ys = zip(*sorted(series[label]))
            ax.plot(xs, ys, marker="o", label=label)
            means[label] = float(np.mean(ys))
        ax.set_xlabel(xlabel)
        ax.set_ylabel("NMSE (dB)")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
        path = out_dir / f"{fig_name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        figures.append(str(path))
        best = min(means, key=means.get)
        worst = max(means, key=means.get)
        summary[fig_name] = {"best": best, "worst": worst}

    snrs = sorted({r.snr_db for r in table.rows})
    for snr in snrs:
        series: dict = {}
        for r in table.rows:
            if r.snr_db != snr or r.prediction_step == AVERAGE_STEP:
                continue
            series.setdefault(_line_label(r, varying), []).append((r.prediction_step, r.nmse_db))
        if series:
            draw(f"nmse_vs_step_snr{snr:+g}dB", series, "prediction step",
                 f"NMSE per prediction step at {snr:g} dB SNR")

    steps = sorted({r.prediction_step for r in table.rows if r.prediction_step != AVERAGE_STEP})
    panels = [("first", steps[0]), ("last", steps[-1]), ("average", AVERAGE_STEP)] if steps else []
    for panel_name, step in panels:
        series = {}
        for r in table.rows:
            if r.prediction_step != step:
                continue
            series.setdefault(_line_label(r, varying), []).append((r.snr_db, r.nmse_db))
        if series and len(snrs) > 1:
            draw(f"nmse_vs_snr_{panel_name}", series, "SNR (dB)",
                 f"NMSE vs SNR ({panel_name} prediction step)")

    summary_path = out_dir / "summary.json"
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return {"figures": figures, "summary": str(summary_path), "status": "ok"}


def export_heatmap(H_true: np.ndarray, H_pred: np.ndarray, path) -> Path:
    """Side-by-side magnitude heatmaps of a true and predicted CSI frame."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.5))
    for ax, H, name in zip(axes, (H_true, H_pred), ("true", "predicted")):
        im = ax.imshow(np.abs(H), aspect="auto", cmap="viridis")
        ax.set_title(f"|H| {name}")
        ax.set_xlabel("subcarrier")
        ax.set_ylabel("tx antenna")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def complexity_report(specs: Iterable[ModelSpec]) -> List[dict]:
    """(model, params, est_flops) per spec at its own configuration.

    FLOPs cover one full prediction of n_future frames, including every
    encoder call and denoiser substep the inference mode incurs.
    """
    import torch

    report = []
    for spec in specs:
        torch.manual_seed(0)
        model = build_model(spec)
        ctx_shape = (1, spec.n_past, 2, spec.n_tx, spec.n_carriers)
        report.append({
            "model": spec.name,
            "params": count_params(model),
            "est_flops": estimate_flops(model, ctx_shape),
        })
    return report
