"""Noise schedule, forward process, DDIM stepping, losses, NMSE."""
from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from csidiff.diffusion import (
    LossConfig,
    NMSE_FLOOR_DB,
    SamplerConfig,
    compute_loss,
    cosine_alpha_bar,
    ddim_sigma,
    ddim_step,
    forward_diffuse,
    huber_loss,
    make_cosine_schedule,
    make_substeps,
    nmse_db,
    nmse_linear,
    noise_from_sample,
    sample_from_noise,
)
from csidiff.errors import (
    ConfigError,
    DegenerateStepError,
    InputError,
    MetricError,
)

SCHED = make_cosine_schedule(2000, 1e-4, 2e-2)


# --- schedule ----------------------------------------------------------------

def test_cosine_alpha_bar_matches_closed_form():
    T = 2000
    for t in (0, 1, 500, 1999, 2000):
        s = 0.008
        want = math.cos(((t / T + s) / (1 + s)) * math.pi / 2) ** 2
        assert abs(cosine_alpha_bar(t, T) - want) < 1e-14


def test_schedule_invariants():
    assert SCHED.T == 2000
    assert SCHED.beta.shape == SCHED.alpha.shape == SCHED.alpha_bar.shape == (2000,)
    assert np.all(SCHED.beta >= 1e-4 - 1e-15)
    assert np.all(SCHED.beta <= 2e-2 + 1e-15)
    assert np.all(np.diff(SCHED.alpha_bar) < 0)
    assert 0.0 < SCHED.alpha_bar[-1] < SCHED.alpha_bar[0] < 1.0
    np.testing.assert_allclose(SCHED.alpha, 1.0 - SCHED.beta, rtol=0, atol=0)
    # after clipping, alpha_bar must be the cumulative product of alpha
    np.testing.assert_allclose(SCHED.alpha_bar, np.cumprod(SCHED.alpha),
                               rtol=0, atol=1e-15)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        make_cosine_schedule(0)
    with pytest.raises(ConfigError):
        make_cosine_schedule(100, 2e-2, 1e-4)


# --- forward process ---------------------------------------------------------

def test_forward_diffuse_closed_form():
    rng = np.random.default_rng(0)
    H0 = rng.standard_normal((3, 4))
    eps = rng.standard_normal((3, 4))
    for t in (0, 700, 1999):
        got = forward_diffuse(H0, t, eps, SCHED)
        ab = SCHED.alpha_bar[t]
        np.testing.assert_allclose(got, math.sqrt(ab) * H0 + math.sqrt(1 - ab) * eps,
                                   rtol=0, atol=1e-15)


def test_forward_diffuse_accepts_torch():
    H0 = torch.randn(2, 3)
    eps = torch.randn(2, 3)
    out = forward_diffuse(H0, 100, eps, SCHED)
    assert isinstance(out, torch.Tensor)
    ab = SCHED.alpha_bar[100]
    torch.testing.assert_close(out, math.sqrt(ab) * H0 + math.sqrt(1 - ab) * eps)


def test_forward_diffuse_t_out_of_range():
    H0 = np.zeros((2, 2))
    with pytest.raises(InputError):
        forward_diffuse(H0, 2000, H0, SCHED)
    with pytest.raises(InputError):
        forward_diffuse(H0, -1, H0, SCHED)


def test_noise_sample_inversion_pair():
    rng = np.random.default_rng(1)
    H0 = rng.standard_normal((5, 6))
    eps = rng.standard_normal((5, 6))
    for t in (3, 999, 1999):
        Ht = forward_diffuse(H0, t, eps, SCHED)
        np.testing.assert_allclose(noise_from_sample(Ht, H0, t, SCHED), eps,
                                   rtol=0, atol=1e-10)
        np.testing.assert_allclose(sample_from_noise(Ht, eps, t, SCHED), H0,
                                   rtol=0, atol=1e-10)


def test_degenerate_step_guard():
    # a hand-built schedule whose first alpha_bar is numerically 1
    import dataclasses
    sched = dataclasses.replace(
        SCHED, alpha_bar=np.concatenate([[1.0 - 1e-16], SCHED.alpha_bar[1:]]))
    H = np.ones((2, 2))
    with pytest.raises(DegenerateStepError):
        noise_from_sample(H, H, 0, sched)


# --- DDIM sigma and stepping -------------------------------------------------

def test_sigma_zero_for_deterministic_sampler():
    for t, t_prev in ((1999, 1000), (500, 499), (10, -1)):
        assert ddim_sigma(t, t_prev, 0.0, SCHED) == 0.0


def test_sigma_formula_and_posterior_identity():
    # zeta=1 must reproduce the DDPM posterior width for adjacent steps
    for t in (1, 2, 777, 1999):
        ab_t = SCHED.alpha_bar[t]
        ab_prev = SCHED.alpha_bar[t - 1]
        beta_tilde = (1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev)
        assert abs(ddim_sigma(t, t - 1, 1.0, SCHED) ** 2 - beta_tilde) < 1e-10


def test_sigma_monotone_in_zeta():
    s = [ddim_sigma(1500, 900, z, SCHED) for z in (0.0, 0.5, 1.0)]
    assert s[0] < s[1] < s[2]


def test_ddim_step_full_jump_returns_estimate():
    rng = np.random.default_rng(2)
    H0 = rng.standard_normal((3, 3))
    eps = rng.standard_normal((3, 3))
    t = 1200
    Ht = forward_diffuse(H0, t, eps, SCHED)
    cfg = SamplerConfig(num_sample_steps=1, zeta=0.0)
    out = ddim_step(Ht, H0, t, -1, cfg, SCHED)
    np.testing.assert_allclose(out, H0, rtol=0, atol=1e-12)


def test_ddim_step_deterministic_matches_formula():
    rng = np.random.default_rng(3)
    H0 = rng.standard_normal((2, 2))
    eps = rng.standard_normal((2, 2))
    t, t_prev = 1500, 700
    Ht = forward_diffuse(H0, t, eps, SCHED)
    cfg = SamplerConfig(num_sample_steps=2, zeta=0.0)
    got = ddim_step(Ht, H0, t, t_prev, cfg, SCHED)
    ab_t, ab_prev = SCHED.alpha_bar[t], SCHED.alpha_bar[t_prev]
    eps_hat = (Ht - math.sqrt(ab_t) * H0) / math.sqrt(1 - ab_t)
    want = math.sqrt(ab_prev) * H0 + math.sqrt(1 - ab_prev) * eps_hat
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_ddim_step_zeta_zero_ignores_rng():
    class Boom:
        def standard_normal(self, size=None):
            raise AssertionError("deterministic path drew randomness")

    rng = np.random.default_rng(4)
    H0 = rng.standard_normal((2, 2))
    Ht = forward_diffuse(H0, 900, rng.standard_normal((2, 2)), SCHED)
    cfg = SamplerConfig(num_sample_steps=2, zeta=0.0)
    ddim_step(Ht, H0, 900, 400, cfg, SCHED, rng=Boom())


def test_ddim_step_stochastic_needs_rng_and_uses_it():
    rng = np.random.default_rng(5)
    H0 = rng.standard_normal((2, 2))
    Ht = forward_diffuse(H0, 900, rng.standard_normal((2, 2)), SCHED)
    cfg = SamplerConfig(num_sample_steps=2, zeta=1.0)
    a = ddim_step(Ht, H0, 900, 400, cfg, SCHED, rng=np.random.default_rng(7))
    b = ddim_step(Ht, H0, 900, 400, cfg, SCHED, rng=np.random.default_rng(7))
    c = ddim_step(Ht, H0, 900, 400, cfg, SCHED, rng=np.random.default_rng(8))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_ddim_step_rejects_non_decreasing_t():
    H = np.zeros((2, 2))
    cfg = SamplerConfig(num_sample_steps=2, zeta=0.0)
    with pytest.raises(InputError):
        ddim_step(H, H, 100, 100, cfg, SCHED)
    with pytest.raises(InputError):
        ddim_step(H, H, 100, 200, cfg, SCHED)


def test_make_substeps_properties():
    for T, n in ((2000, 3), (2000, 100), (10, 10), (10, 1)):
        steps = make_substeps(T, n)
        assert len(steps) == n
        assert steps[0][0] == T - 1
        assert steps[-1][1] == -1
        ts = [s[0] for s in steps] + [steps[-1][1]]
        assert all(a > b for a, b in zip(ts, ts[1:]))
        # pairs chain: each step starts where the previous ended
        for (a, b), (c, d) in zip(steps, steps[1:]):
            assert b == c


def test_make_substeps_validation():
    with pytest.raises(InputError):
        make_substeps(2000, 0)
    with pytest.raises(InputError):
        make_substeps(10, 11)


# --- losses ------------------------------------------------------------------

def test_huber_quadratic_and_linear_regions():
    delta = 0.016
    y = np.zeros(2)
    got = huber_loss(y, np.array([0.001, 0.5]), delta)
    want = 0.5 * ((0.5 * 0.001 ** 2) + delta * (0.5 - delta / 2))
    assert abs(got - want) < 1e-15


def test_huber_numpy_torch_agree():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(50)
    yhat = y + rng.standard_normal(50) * 0.02
    a = huber_loss(y, yhat, 0.016)
    b = huber_loss(torch.from_numpy(y), torch.from_numpy(yhat), 0.016).item()
    assert abs(a - b) < 1e-12


def test_compute_loss_dispatch():
    rng = np.random.default_rng(0)
    pred = rng.standard_normal((4, 4))
    target = rng.standard_normal((4, 4))
    eps = rng.standard_normal((4, 4))
    h = compute_loss(pred, target, eps, LossConfig(kind="huber_on_sample", huber_delta=0.016))
    assert abs(h - huber_loss(target, pred, 0.016)) < 1e-15
    m = compute_loss(pred, target, eps, LossConfig(kind="mse_on_sample"))
    assert abs(m - np.mean((pred - target) ** 2)) < 1e-14
    n = compute_loss(pred, target, eps, LossConfig(kind="mse_on_noise"))
    assert abs(n - np.mean((pred - eps) ** 2)) < 1e-14


def test_loss_config_validation():
    with pytest.raises(ConfigError):
        LossConfig(kind="l1_on_sample")
    with pytest.raises(ConfigError):
        LossConfig(huber_delta=0.0)


# --- NMSE --------------------------------------------------------------------

def test_nmse_hand_oracle():
    t = np.array([[1 + 0j, 0], [0, 2 + 0j]])
    p = np.array([[0.5 + 0j, 0], [0, 1 + 0j]])
    assert abs(nmse_linear(t, p) - 0.25) < 1e-15
    assert abs(nmse_db(t, p) - 10 * math.log10(0.25)) < 1e-12


def test_nmse_perfect_prediction_clamps_to_floor():
    t = np.ones((3, 2), dtype=complex)
    assert nmse_db(t, t) == NMSE_FLOOR_DB


def test_nmse_zero_truth_raises():
    with pytest.raises(MetricError):
        nmse_linear(np.zeros((2, 2), dtype=complex), np.ones((2, 2), dtype=complex))


def test_nmse_complex_matches_real_packing():
    rng = np.random.default_rng(0)
    t = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    p = t + 0.1 * (rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3)))
    packed_t = np.stack([t.real, t.imag], axis=-1)
    packed_p = np.stack([p.real, p.imag], axis=-1)
    assert abs(nmse_linear(t, p) - nmse_linear(packed_t, packed_p)) < 1e-12
