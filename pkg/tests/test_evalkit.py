"""NMSE sweeps, stubs, CSV round trips, plots, complexity report."""
from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from csidiff.config import paper_model_spec
from csidiff.errors import ConfigError, DataError, InputError
from csidiff.evalkit import (
    AVERAGE_STEP,
    CSV_HEADER,
    EvalConfig,
    MIXED_VELOCITY,
    NMSE_CEIL_DB,
    OracleStub,
    ResultRow,
    ResultTable,
    ZeroStub,
    complexity_report,
    emit_plots,
    evaluate,
    export_csv,
    export_heatmap,
    read_csv,
    sweep_context,
    sweep_sampling_steps,
    sweep_velocity,
)
from csidiff.pipeline import InferConfig, TrainConfig, train, make_predictor

TINY_ENC = {"hidden_channels": 8, "latent_channels": 4}
TINY_BB = {"base_channels": 8, "time_embed_dim": 32}


@pytest.fixture(scope="module")
def tiny_ckpt(tiny_bundle):
    spec = paper_model_spec("DiU", n_past=6, n_future=4, n_tx=4, n_carriers=4,
                            encoder_overrides=TINY_ENC, backbone_overrides=TINY_BB)
    return train(spec, tiny_bundle, TrainConfig(epochs=1, batch_size=8, max_steps=3, seed=0))


@pytest.fixture
def quick_ecfg():
    return EvalConfig(snr_grid_db=(0.0, 20.0), horizon=4, num_test_samples=6,
                      batch_size=4, seed=0)


ICFG = InferConfig(num_sample_steps=2, zeta=0.0, feedback_noise_sigma=0.0)


# --- stubs pin the metric path -------------------------------------------------

def test_oracle_stub_rows_hit_floor(tiny_bundle, quick_ecfg):
    tab = evaluate(OracleStub(tiny_bundle), tiny_bundle, quick_ecfg)
    assert len(tab.rows) == 2 * (4 + 1)  # 2 SNRs x (steps + average)
    assert all(r.nmse_db == -120.0 for r in tab.rows)
    assert all(r.model == "oracle-stub" for r in tab.rows)
    assert all(r.sampling_steps == 0 for r in tab.rows)


def test_zero_stub_rows_at_zero_db(tiny_bundle, quick_ecfg):
    tab = evaluate(ZeroStub(4), tiny_bundle, quick_ecfg)
    assert all(r.nmse_db == 0.0 for r in tab.rows)
    steps = sorted({r.prediction_step for r in tab.rows})
    assert steps == [AVERAGE_STEP, 1, 2, 3, 4]


def test_wild_prediction_clamps_at_ceiling(tiny_bundle, quick_ecfg):
    class HugeStub(ZeroStub):
        name = "huge-stub"

        def predict(self, X, seed=0, horizon=None, indices=None):
            return super().predict(X, seed, horizon, indices) + 1e9

    tab = evaluate(HugeStub(4), tiny_bundle, quick_ecfg)
    assert all(r.nmse_db == NMSE_CEIL_DB for r in tab.rows)


# --- result table and CSV -------------------------------------------------------

def _row(**kw):
    base = dict(model="m", snr_db=0.0, velocity=MIXED_VELOCITY, context_len=6,
                sampling_steps=3, prediction_step=1, nmse_db=-7.123456789,
                n_samples=10)
    base.update(kw)
    return ResultRow(**base)


def test_result_table_rejects_duplicate_keys():
    tab = ResultTable()
    tab.add(_row())
    with pytest.raises(InputError):
        tab.add(_row())
    tab.add(_row(prediction_step=2))
    assert len(tab.rows) == 2


def test_result_table_filter():
    tab = ResultTable()
    tab.add(_row(snr_db=0.0))
    tab.add(_row(snr_db=10.0))
    assert len(tab.filter(snr_db=10.0)) == 1


def test_csv_round_trip_preserves_values(tmp_path):
    tab = ResultTable()
    tab.add(_row())
    tab.add(_row(prediction_step=2, nmse_db=-0.000123456))
    path = tmp_path / "r.csv"
    export_csv(tab, path)
    with open(path) as fh:
        assert next(csv.reader(fh)) == list(CSV_HEADER)
    back = read_csv(path)
    assert len(back.rows) == 2
    for a, b in zip(tab.rows, back.rows):
        assert a == b


def test_read_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("model,snr\nx,1\n")
    with pytest.raises(DataError):
        read_csv(path)


# --- evaluate on a real model ----------------------------------------------------

def test_evaluate_model_row_layout(tiny_ckpt, tiny_bundle, quick_ecfg):
    tab = evaluate(make_predictor(tiny_ckpt, ICFG), tiny_bundle, quick_ecfg)
    assert len(tab.rows) == 2 * 5
    for r in tab.rows:
        assert r.model == "DiU"
        assert r.sampling_steps == 2
        assert r.context_len == 6
        assert r.velocity == MIXED_VELOCITY
        assert r.n_samples == 6
        assert -120.0 <= r.nmse_db <= NMSE_CEIL_DB
    # the average row is the dB of the mean linear ratio across steps
    for snr in (0.0, 20.0):
        sub = tab.filter(snr_db=snr)
        steps = [r for r in sub if r.prediction_step != AVERAGE_STEP]
        avg = [r for r in sub if r.prediction_step == AVERAGE_STEP][0]
        mean_linear = np.mean([10 ** (r.nmse_db / 10) for r in steps])
        assert abs(avg.nmse_db - 10 * math.log10(mean_linear)) < 0.01


def test_evaluate_is_deterministic(tiny_ckpt, tiny_bundle, quick_ecfg):
    a = evaluate(make_predictor(tiny_ckpt, ICFG), tiny_bundle, quick_ecfg)
    b = evaluate(make_predictor(tiny_ckpt, ICFG), tiny_bundle, quick_ecfg)
    assert a.rows == b.rows


def test_evaluate_context_len_trims(tiny_ckpt, tiny_bundle, quick_ecfg):
    tab = evaluate(make_predictor(tiny_ckpt, ICFG), tiny_bundle, quick_ecfg,
                   context_len=3)
    assert all(r.context_len == 3 for r in tab.rows)


def test_evaluate_clean_contexts_at_infinite_snr(tiny_ckpt, tiny_bundle):
    ecfg = EvalConfig(snr_grid_db=(math.inf,), horizon=4, num_test_samples=4,
                      batch_size=4, seed=0)
    tab = evaluate(make_predictor(tiny_ckpt, ICFG), tiny_bundle, ecfg)
    assert len(tab.rows) == 5
    assert all(math.isinf(r.snr_db) for r in tab.rows)


def test_evaluate_horizon_guard(tiny_ckpt, tiny_bundle):
    ecfg = EvalConfig(snr_grid_db=(0.0,), horizon=9, num_test_samples=4,
                      batch_size=4, seed=0)
    with pytest.raises(InputError):
        evaluate(make_predictor(tiny_ckpt, ICFG), tiny_bundle, ecfg)


def test_evaluate_shape_guard(tiny_ckpt, cdl_a):
    from csidiff.chansim import build_dataset, ChannelConfig
    narrow = ChannelConfig(num_tx=4, num_subcarriers_kept=2, num_steps=40)
    other = build_dataset(narrow, cdl_a, 8, n_past=6, n_future=4,
                          split_fracs=(0.5, 0.25, 0.25), seed=0)
    with pytest.raises(ConfigError):
        evaluate(make_predictor(tiny_ckpt, ICFG), other,
                 EvalConfig(snr_grid_db=(0.0,), horizon=4, batch_size=4, seed=0))


# --- sweeps ----------------------------------------------------------------------

def test_sweep_context(tiny_ckpt, tiny_bundle):
    ecfg = EvalConfig(snr_grid_db=(10.0,), context_lengths=(2, 6), horizon=4,
                      num_test_samples=4, batch_size=4, seed=0)
    tab = sweep_context(tiny_ckpt, tiny_bundle, ecfg, ICFG)
    assert sorted({r.context_len for r in tab.rows}) == [2, 6]


def test_sweep_context_rejects_non_ar(tiny_bundle):
    spec = paper_model_spec("GRU", n_past=6, n_future=4, n_tx=4, n_carriers=4,
                            encoder_overrides={"hidden_channels": 8})
    ck = train(spec, tiny_bundle, TrainConfig(epochs=1, batch_size=8, max_steps=2, seed=0))
    ecfg = EvalConfig(snr_grid_db=(10.0,), context_lengths=(2, 6), horizon=4,
                      batch_size=4, seed=0)
    with pytest.raises(ConfigError):
        sweep_context(ck, tiny_bundle, ecfg)


def test_sweep_context_rejects_overlong(tiny_ckpt, tiny_bundle):
    ecfg = EvalConfig(snr_grid_db=(10.0,), context_lengths=(7,), horizon=4,
                      batch_size=4, seed=0)
    with pytest.raises(InputError):
        sweep_context(tiny_ckpt, tiny_bundle, ecfg)


def test_sweep_sampling_steps(tiny_ckpt, tiny_bundle):
    ecfg = EvalConfig(snr_grid_db=(10.0,), sampling_steps_grid=(1, 2), horizon=4,
                      num_test_samples=4, batch_size=4, seed=0)
    tab = sweep_sampling_steps(tiny_ckpt, tiny_bundle, ecfg, ICFG)
    assert sorted({r.sampling_steps for r in tab.rows}) == [1, 2]


def test_sweep_sampling_steps_rejects_direct(tiny_bundle):
    spec = paper_model_spec("GRU", n_past=6, n_future=4, n_tx=4, n_carriers=4,
                            encoder_overrides={"hidden_channels": 8})
    ck = train(spec, tiny_bundle, TrainConfig(epochs=1, batch_size=8, max_steps=2, seed=0))
    with pytest.raises(ConfigError):
        sweep_sampling_steps(ck, tiny_bundle,
                             EvalConfig(snr_grid_db=(10.0,), horizon=4,
                                        batch_size=4, seed=0))


def test_sweep_velocity(tiny_ckpt, tiny_cfg, cdl_a, tiny_bundle):
    ecfg = EvalConfig(snr_grid_db=(10.0,), velocities_kmh=(30.0, 120.0), horizon=4,
                      num_test_samples=4, batch_size=4, seed=0)
    tab = sweep_velocity(tiny_ckpt, tiny_cfg, ecfg, cdl_a,
                         scaler=tiny_bundle.scaler, icfg=ICFG)
    assert sorted({r.velocity for r in tab.rows}) == [30.0, 120.0]


# --- plots and reports -------------------------------------------------------------

def test_emit_plots_writes_figures_and_summary(tiny_bundle, quick_ecfg, tmp_path):
    tab = evaluate(ZeroStub(4), tiny_bundle, quick_ecfg)
    out = emit_plots(tab, tmp_path)
    assert out["status"] == "ok"
    names = {p.name for p in tmp_path.glob("*.png")}
    assert "nmse_vs_snr_first.png" in names
    assert "nmse_vs_snr_last.png" in names
    assert "nmse_vs_snr_average.png" in names
    assert "nmse_vs_step_snr+0dB.png" in names
    assert "nmse_vs_step_snr+20dB.png" in names
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {p.stem for p in tmp_path.glob("*.png")}


def test_emit_plots_empty_table(tmp_path):
    out = emit_plots(ResultTable(), tmp_path)
    assert out["status"] == "empty"
    assert out["figures"] == []
    assert not list(tmp_path.glob("*.png"))


def test_export_heatmap(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    p = t + 0.1
    path = export_heatmap(t, p, tmp_path / "h.png")
    assert path.exists() and path.stat().st_size > 0


def test_complexity_report_fields():
    specs = [
        paper_model_spec("DiU", n_past=6, n_future=4, n_tx=4, n_carriers=4,
                         encoder_overrides=TINY_ENC, backbone_overrides=TINY_BB),
        paper_model_spec("GRU", n_past=6, n_future=4, n_tx=4, n_carriers=4,
                         encoder_overrides={"hidden_channels": 8}),
    ]
    rows = complexity_report(specs)
    assert [r["model"] for r in rows] == ["DiU", "GRU"]
    for r in rows:
        assert isinstance(r["params"], int) and r["params"] > 0
        assert isinstance(r["est_flops"], int) and r["est_flops"] > 0
    # diffusion rollout re-runs the backbone; it must dominate the direct pass
    assert rows[0]["est_flops"] > rows[1]["est_flops"]
