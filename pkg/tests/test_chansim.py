"""Channel generator: closed-form oracles, statistical checks, packaging."""
from __future__ import annotations

import math

import numpy as np
import pytest

from csidiff.chansim import (
    ChannelConfig,
    CsiSequence,
    MinMaxScaler,
    PathGainParams,
    array_response,
    build_dataset,
    corrupt_with_snr,
    generate_channel,
    generate_pairs,
    path_gain,
    read_dataset,
    write_dataset,
)
from csidiff.errors import ConfigError, DataError, InputError
from csidiff.profiles import load_profile


# --- closed-form element oracles -------------------------------------------

def test_array_response_matches_formula():
    phi, n, d = 0.73, 8, 0.5
    got = array_response(phi, n, d)
    k = np.arange(n)
    want = np.exp(1j * 2 * np.pi * d * k * np.sin(phi)) / np.sqrt(n)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)
    assert abs(np.linalg.norm(got) - 1.0) < 1e-12


def test_array_response_validation():
    with pytest.raises(InputError):
        array_response(float("nan"), 4, 0.5)
    with pytest.raises(InputError):
        array_response(0.0, 0, 0.5)


def test_path_gain_matches_formula():
    params = PathGainParams(power_linear=0.25, doppler_cycles_per_step=0.01,
                            init_phase_rad=1.1)
    for n in (0, 1, 17):
        want = math.sqrt(0.25) * np.exp(1j * (2 * np.pi * 0.01 * n + 1.1))
        assert abs(path_gain(params, n) - want) < 1e-14
    assert abs(abs(path_gain(params, 5)) - 0.5) < 1e-14


def test_path_gain_validation():
    with pytest.raises(InputError):
        PathGainParams(power_linear=-1.0, doppler_cycles_per_step=0.0, init_phase_rad=0.0)
    with pytest.raises(InputError):
        PathGainParams(power_linear=1.0, doppler_cycles_per_step=0.0, init_phase_rad=7.0)
    with pytest.raises(InputError):
        path_gain(PathGainParams(1.0, 0.0, 0.0), -1)


# --- channel sequences -------------------------------------------------------

def test_generate_channel_shape_and_determinism(tiny_cfg, cdl_a):
    seq = generate_channel(cdl_a[0], tiny_cfg, velocity_kmh=60.0,
                           delay_spread_ns=100.0, seed=5)
    assert seq.data.shape == (tiny_cfg.num_steps, tiny_cfg.num_tx,
                              tiny_cfg.num_subcarriers_kept)
    assert np.iscomplexobj(seq.data)
    assert np.all(np.isfinite(seq.data))
    again = generate_channel(cdl_a[0], tiny_cfg, velocity_kmh=60.0,
                             delay_spread_ns=100.0, seed=5)
    np.testing.assert_array_equal(seq.data, again.data)
    other = generate_channel(cdl_a[0], tiny_cfg, velocity_kmh=60.0,
                             delay_spread_ns=100.0, seed=6)
    assert not np.array_equal(seq.data, other.data)


def test_zero_velocity_freezes_the_channel(tiny_cfg, cdl_a):
    seq = generate_channel(cdl_a[0], tiny_cfg, velocity_kmh=0.0,
                           delay_spread_ns=100.0, seed=3)
    np.testing.assert_array_equal(seq.data, np.broadcast_to(seq.data[0], seq.data.shape))


def test_higher_velocity_decorrelates_faster(tiny_cfg, cdl_a):
    def lag1(v):
        acc = []
        for seed in range(8):
            h = generate_channel(cdl_a[0], tiny_cfg, velocity_kmh=v,
                                 delay_spread_ns=100.0, seed=seed).data
            a, b = h[:-1].ravel(), h[1:].ravel()
            num = np.abs(np.vdot(a, b))
            acc.append(num / (np.linalg.norm(a) * np.linalg.norm(b)))
        return np.mean(acc)

    assert lag1(500.0) < lag1(10.0)


def test_delay_spread_controls_frequency_selectivity(tiny_cfg, cdl_a):
    def adjacent_subcarrier_corr(ds_ns):
        acc = []
        for seed in range(8):
            h = generate_channel(cdl_a[0], tiny_cfg, velocity_kmh=30.0,
                                 delay_spread_ns=ds_ns, seed=seed).data
            a, b = h[..., :-1].ravel(), h[..., 1:].ravel()
            acc.append(np.abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
        return np.mean(acc)

    assert adjacent_subcarrier_corr(4000.0) < adjacent_subcarrier_corr(20.0)


def test_csi_sequence_pack_round_trip(tiny_cfg, cdl_a):
    seq = generate_channel(cdl_a[0], tiny_cfg, 60.0, 100.0, seed=1)
    packed = seq.packed()
    assert packed.shape == (tiny_cfg.num_steps, 2, tiny_cfg.num_tx,
                            tiny_cfg.num_subcarriers_kept)
    np.testing.assert_array_equal(CsiSequence.unpack(packed), seq.data)


def test_csi_sequence_rejects_non_finite():
    bad = np.full((2, 2, 2), np.nan + 0j)
    with pytest.raises(InputError):
        CsiSequence(data=bad, meta={})


# --- config ------------------------------------------------------------------

def test_kept_subcarrier_indices_stride():
    cfg = ChannelConfig(num_subcarriers_total=300, num_subcarriers_kept=16)
    idx = cfg.kept_subcarrier_indices
    assert idx[0] == 0
    assert len(idx) == 16
    np.testing.assert_array_equal(np.diff(idx), 300 // 16)
    freqs = cfg.subcarrier_freqs_hz
    f_s = 1.0 / cfg.symbol_duration_s
    np.testing.assert_allclose(freqs, idx * f_s / 300)


def test_channel_config_validation():
    with pytest.raises(ConfigError):
        ChannelConfig(num_rx=2)
    with pytest.raises(ConfigError):
        ChannelConfig(num_subcarriers_kept=400)
    with pytest.raises(ConfigError):
        ChannelConfig(velocity_range_kmh=(100.0, 10.0))
    with pytest.raises(ConfigError):
        ChannelConfig(carrier_freq_hz=0.0)


def test_channel_config_dict_round_trip(tiny_cfg):
    assert ChannelConfig.from_dict(tiny_cfg.to_dict()) == tiny_cfg


# --- corruption --------------------------------------------------------------

def test_corrupt_with_snr_hits_requested_ratio():
    # output is sqrt(rho) * X + N, so the embedded signal power is rho * E[X^2]
    # and the noise component is recovered by subtracting the scaled signal
    rng = np.random.default_rng(0)
    X = rng.standard_normal((64, 8, 2, 8, 8)).astype(np.float32)
    X64 = X.astype(np.float64)
    for snr_db in (-10.0, 0.0, 15.0):
        rho = 10.0 ** (snr_db / 10.0)
        noisy = corrupt_with_snr(X, snr_db, np.random.default_rng(42))
        noise = noisy.astype(np.float64) - math.sqrt(rho) * X64
        measured = 10 * np.log10(rho * np.mean(X64 ** 2) / np.mean(noise ** 2))
        assert abs(measured - snr_db) < 0.2
        assert noisy.dtype == X.dtype


def test_corrupt_preserves_float64():
    X = np.random.default_rng(1).standard_normal((4, 4)).astype(np.float64)
    assert corrupt_with_snr(X, 10.0, np.random.default_rng(0)).dtype == np.float64


# --- scaling -----------------------------------------------------------------

def test_minmax_scaler_round_trip():
    rng = np.random.default_rng(0)
    x = (rng.standard_normal((100,)) * 3 - 1).astype(np.float32)
    sc = MinMaxScaler.fit(x)
    y = sc.transform(x)
    assert y.min() == 0.0 and y.max() == 1.0
    np.testing.assert_allclose(sc.inverse_transform(y), x, atol=1e-5)
    assert sc.transform(x).dtype == np.float32


def test_minmax_scaler_validation():
    with pytest.raises(ConfigError):
        MinMaxScaler(min_val=1.0, max_val=1.0)


# --- dataset packaging -------------------------------------------------------

def test_build_dataset_split_sizes_and_shapes(tiny_bundle):
    sizes = {k: v[0].shape[0] for k, v in tiny_bundle.splits.items()}
    assert sizes == {"train": 12, "val": 6, "test": 6}
    X, Y = tiny_bundle.split("train")
    assert X.shape == (12, 6, 2, 4, 4)
    assert Y.shape == (12, 4, 2, 4, 4)
    assert X.dtype == Y.dtype == np.float32


def test_build_dataset_training_split_in_unit_interval(tiny_bundle):
    X, Y = tiny_bundle.split("train")
    lo = min(X.min(), Y.min())
    hi = max(X.max(), Y.max())
    assert 0.0 <= lo and hi <= 1.0
    assert hi == 1.0 and lo == 0.0


def test_build_dataset_deterministic(tiny_cfg, cdl_a):
    kw = dict(n_past=3, n_future=2, split_fracs=(0.5, 0.25, 0.25), seed=9)
    d1 = build_dataset(tiny_cfg, cdl_a, 8, **kw)
    d2 = build_dataset(tiny_cfg, cdl_a, 8, **kw)
    for name in d1.splits:
        np.testing.assert_array_equal(d1.splits[name][0], d2.splits[name][0])
        np.testing.assert_array_equal(d1.splits[name][1], d2.splits[name][1])
    assert d1.scaler == d2.scaler


def test_build_dataset_seed_changes_data(tiny_cfg, cdl_a):
    kw = dict(n_past=3, n_future=2, split_fracs=(0.5, 0.25, 0.25))
    d1 = build_dataset(tiny_cfg, cdl_a, 8, seed=1, **kw)
    d2 = build_dataset(tiny_cfg, cdl_a, 8, seed=2, **kw)
    assert not np.array_equal(d1.splits["train"][0], d2.splits["train"][0])


def test_missing_split_raises(tiny_bundle):
    with pytest.raises(DataError):
        tiny_bundle.split("holdout")


def test_generate_pairs_velocity_override(tiny_cfg, cdl_a):
    X, Y = generate_pairs(tiny_cfg, cdl_a, 4, n_past=3, n_future=2, seed=0,
                          velocity_kmh=0.0)
    # frozen channel: every frame in a window is the same frame
    np.testing.assert_array_equal(X, np.broadcast_to(X[:, :1], X.shape))
    np.testing.assert_array_equal(Y, np.broadcast_to(X[:, :1], Y.shape))


def test_window_needs_enough_steps(cdl_a):
    cfg = ChannelConfig(num_tx=4, num_subcarriers_kept=4, num_steps=5)
    with pytest.raises(ConfigError):
        generate_pairs(cfg, cdl_a, 2, n_past=4, n_future=4, seed=0)


def test_dataset_file_round_trip(tiny_bundle, tmp_path):
    path = tmp_path / "ds.bin"
    write_dataset(tiny_bundle, path)
    back = read_dataset(path)
    assert set(back.splits) == set(tiny_bundle.splits)
    for name in tiny_bundle.splits:
        np.testing.assert_array_equal(back.splits[name][0], tiny_bundle.splits[name][0])
        np.testing.assert_array_equal(back.splits[name][1], tiny_bundle.splits[name][1])
    assert back.scaler == tiny_bundle.scaler
    assert back.provenance["num_samples"] == tiny_bundle.provenance["num_samples"]
