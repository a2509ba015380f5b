import math

import numpy as np
import pytest

from seacache import (
    FieldSampler,
    FullCompute,
    MetricKind,
    MetricPolicy,
    OraclePolicy,
    PowerLawPrior,
    SamplerConfig,
    analytic_mmse,
    denoise_mmse,
    forward_noise,
    make_run_inputs,
    psnr,
    radial_power_spectrum,
    run_sampler,
    sample_field,
    series_from_features,
    reverse_step,
)
from seacache.synthetic import PSNR_CAP_DB


def mc_spectrum(grid, prior, draws, seed0=100):
    acc = np.zeros(grid.L)
    for s in range(draws):
        field = sample_field(FieldSampler(grid.shape, 1, prior, seed0 + s), grid)
        acc += radial_power_spectrum(field, grid)
    return acc / draws


class TestSampleField:
    def test_seeded_determinism(self, grid64, prior_beta2):
        sampler = FieldSampler(grid64.shape, 2, prior_beta2, seed=42)
        f1 = sample_field(sampler, grid64)
        f2 = sample_field(sampler, grid64)
        assert f1.tobytes() == f2.tobytes()

    def test_zero_mean(self, grid64, prior_beta2):
        field = sample_field(FieldSampler(grid64.shape, 1, prior_beta2, seed=3), grid64)
        assert abs(field.mean()) < 1e-12 * np.abs(field).max()

    def test_white_field_flat_spectrum(self, grid64):
        # beta = 0: every interior bin within 10% of the flat level over 200 draws
        emp = mc_spectrum(grid64, PowerLawPrior(1.0, 0.0), draws=200)
        interior = slice(1, 23)
        assert np.abs(emp[interior] - 1.0).max() < 0.10

    def test_power_law_spectrum_per_bin(self, grid64, prior_beta2):
        from seacache import prior_spectrum

        emp = mc_spectrum(grid64, prior_beta2, draws=200)
        S = prior_spectrum(grid64, prior_beta2)
        expected = grid64.bin_mean(np.where(np.isfinite(S), S, 0.0))
        interior = slice(1, 23)
        rel = np.abs(emp[interior] - expected[interior]) / expected[interior]
        assert rel.max() < 0.10

    def test_log_log_slope(self, grid64, prior_beta2):
        emp = mc_spectrum(grid64, prior_beta2, draws=200)
        radius = grid64.bin_radius()
        interior = slice(1, 23)
        slope = np.polyfit(np.log(radius[interior]), np.log(emp[interior]), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.2)

    def test_shape_mismatch(self, grid64, grid8, prior_beta2):
        with pytest.raises(ValueError):
            sample_field(FieldSampler(grid8.shape, 1, prior_beta2, seed=0), grid64)


class TestForwardNoise:
    def test_endpoints(self, rf50, grid64, prior_beta2):
        x0, noise = make_run_inputs(0, grid64, 1, prior_beta2)
        assert forward_noise(x0, 0, rf50, noise) is not x0
        assert (forward_noise(x0, 0, rf50, noise) == x0).all()
        assert (forward_noise(x0, 50, rf50, noise) == noise).all()

    def test_midpoint_entrywise(self, rf50, grid64, prior_beta2):
        x0, noise = make_run_inputs(1, grid64, 1, prior_beta2)
        got = forward_noise(x0, 25, rf50, noise)
        assert (got == 0.5 * x0 + 0.5 * noise).all()

    def test_shape_mismatch(self, rf50):
        with pytest.raises(ValueError):
            forward_noise(np.zeros((1, 4, 4)), 10, rf50, np.zeros((1, 8, 8)))


class TestDenoiseMMSE:
    def test_identity_at_clean_step(self, bank64, grid64, prior_beta2):
        x0, _ = make_run_inputs(2, grid64, 1, prior_beta2)
        x0_hat = denoise_mmse(x0, 0, bank64)
        assert np.abs(x0_hat - x0).max() < 1e-9

    def test_empirical_mse_matches_analytic(self, bank64, grid64, prior_beta2, rf50):
        t = 25
        errs = []
        for s in range(100):
            x0 = sample_field(FieldSampler(grid64.shape, 1, prior_beta2, 1000 + s), grid64)
            noise = np.random.default_rng(5000 + s).standard_normal(x0.shape)
            x_t = forward_noise(x0, t, rf50, noise)
            errs.append(np.mean((denoise_mmse(x_t, t, bank64) - x0) ** 2))
        emp = np.mean(errs)
        ana = analytic_mmse(bank64, t)
        assert abs(emp - ana) / ana < 0.02

    def test_scalar_perturbations_increase_mse(self, bank64, grid64, prior_beta2, rf50):
        from seacache import apply_filter

        t = 25
        draws = []
        for s in range(100):
            x0 = sample_field(FieldSampler(grid64.shape, 1, prior_beta2, 1000 + s), grid64)
            noise = np.random.default_rng(5000 + s).standard_normal(x0.shape)
            draws.append((x0, forward_noise(x0, t, rf50, noise)))
        base = np.mean([np.mean((apply_filter(bank64.gains_raw[t], x_t) - x0) ** 2) for x0, x_t in draws])
        for c in (0.8, 0.9, 1.1, 1.25):
            perturbed = np.mean([np.mean((apply_filter(c * bank64.gains_raw[t], x_t) - x0) ** 2) for x0, x_t in draws])
            assert perturbed > base


class TestReverseStep:
    def test_consistent_with_forward_when_estimate_exact(self, rf50, grid64, prior_beta2):
        x0, noise = make_run_inputs(3, grid64, 1, prior_beta2)
        for t in (50, 30, 10, 1):
            x_t = forward_noise(x0, t, rf50, noise)
            stepped = reverse_step(x_t, x0, t, rf50)
            expected = forward_noise(x0, t - 1, rf50, noise)
            assert np.abs(stepped - expected).max() < 1e-9

    def test_final_step_returns_estimate(self, rf50, grid64, prior_beta2):
        x0, noise = make_run_inputs(4, grid64, 1, prior_beta2)
        x_1 = forward_noise(x0, 1, rf50, noise)
        x0_hat = 0.9 * x0
        assert (reverse_step(x_1, x0_hat, 1, rf50) == x0_hat).all()

    def test_t_zero_rejected(self, rf50):
        with pytest.raises(ValueError):
            reverse_step(np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), 0, rf50)

    @pytest.mark.xfail(
        strict=True,
        reason="generating from pure noise cannot beat the pure-noise start against x0: "
        "the final sample depends only on the initial noise draw, so its PSNR to x0 is "
        "bounded by the prior and the claimed +20 dB is unattainable",
    )
    def test_full_run_psnr_gain_over_start(self, rf50, bank64, grid64, prior_beta2):
        x0, noise = make_run_inputs(5, grid64, 1, prior_beta2)
        cfg = SamplerConfig(schedule=rf50, bank=bank64, policy=FullCompute())
        result = run_sampler(cfg, x0, noise)
        x_T = forward_noise(x0, 50, rf50, noise)
        assert psnr(result.final, x0) >= psnr(x_T, x0) + 20.0


class TestPsnr:
    def test_identical_capped(self):
        ref = np.random.default_rng(0).standard_normal((1, 8, 8))
        assert psnr(ref, ref) == PSNR_CAP_DB

    def test_uniform_offset(self):
        ref = np.zeros((1, 10, 10))
        ref[0, 0, 0] = 1.0  # peak = 1
        x = ref + 0.1
        assert psnr(x, ref) == pytest.approx(20.0, abs=1e-6)

    def test_cap_applies_to_near_identical_inputs(self):
        ref = np.random.default_rng(2).standard_normal((1, 16, 16))
        x = ref + 1e-9  # nonzero mse, raw value far above 99 dB
        assert np.mean((x - ref) ** 2) > 0
        assert psnr(x, ref) == PSNR_CAP_DB

    def test_joint_shift_invariance(self):
        rng = np.random.default_rng(1)
        ref = rng.standard_normal((1, 8, 8))
        x = ref + 0.05 * rng.standard_normal((1, 8, 8))
        assert psnr(x + 3.0, ref + 3.0) == pytest.approx(psnr(x, ref), rel=1e-12)

    def test_constant_reference_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.ones((1, 4, 4)), np.ones((1, 4, 4)))


class TestRunSampler:
    def test_full_compute_reference(self, rf50, bank64, grid64, prior_beta2):
        x0, noise = make_run_inputs(6, grid64, 1, prior_beta2)
        cfg = SamplerConfig(schedule=rf50, bank=bank64, policy=FullCompute())
        result = run_sampler(cfg, x0, noise)
        assert result.trace.refresh_ratio == 1.0
        assert len(result.inputs) == 50 and len(result.outputs) == 50
        assert psnr(result.final, result.final) == PSNR_CAP_DB

    def test_giant_delta_single_refresh_and_lower_psnr(self, rf50, bank64, grid64, prior_beta2):
        x0, noise = make_run_inputs(7, grid64, 1, prior_beta2)
        full = run_sampler(SamplerConfig(schedule=rf50, bank=bank64, policy=FullCompute()), x0, noise)
        lazy = run_sampler(
            SamplerConfig(schedule=rf50, bank=bank64, policy=MetricPolicy(kind=MetricKind.sea(), delta=1e18)),
            x0, noise)
        assert lazy.trace.refresh_ratio == 1 / 50
        assert psnr(lazy.final, full.final) < PSNR_CAP_DB

    def test_bitwise_reproducible(self, rf50, bank64, grid64, prior_beta2):
        x0, noise = make_run_inputs(8, grid64, 1, prior_beta2)
        cfg = SamplerConfig(schedule=rf50, bank=bank64,
                            policy=MetricPolicy(kind=MetricKind.sea(), target_ratio=0.5))
        r1 = run_sampler(cfg, x0, noise)
        r2 = run_sampler(cfg, x0, noise)
        assert r1.final.tobytes() == r2.final.tobytes()
        assert r1.trace.decisions == r2.trace.decisions
        assert r1.distances.values.tobytes() == r2.distances.values.tobytes()

    def test_oracle_runs_at_target_ratio(self, rf50, bank64, grid64, prior_beta2):
        x0, noise = make_run_inputs(9, grid64, 1, prior_beta2)
        cfg = SamplerConfig(schedule=rf50, bank=bank64, policy=OraclePolicy(filtered=True, target_ratio=0.5))
        result = run_sampler(cfg, x0, noise)
        assert result.trace.refresh_ratio == 0.5
        assert result.trace.decisions[0].value == "refresh"

    def test_metric_policy_requires_exactly_one_knob(self):
        with pytest.raises(ValueError):
            MetricPolicy(kind=MetricKind.sea())
        with pytest.raises(ValueError):
            MetricPolicy(kind=MetricKind.sea(), delta=0.1, target_ratio=0.5)

    def test_graceful_degradation(self, rf50, bank64, grid64, prior_beta2):
        for seed in (10, 11, 12):
            x0, noise = make_run_inputs(seed, grid64, 1, prior_beta2)
            full = run_sampler(SamplerConfig(schedule=rf50, bank=bank64, policy=FullCompute()), x0, noise)
            values = []
            for ratio in (1.0, 0.7, 0.5, 0.3):
                res = run_sampler(
                    SamplerConfig(schedule=rf50, bank=bank64,
                                  policy=MetricPolicy(kind=MetricKind.sea(), target_ratio=ratio)),
                    x0, noise)
                values.append(psnr(res.final, full.final))
            assert all(a >= b - 0.2 for a, b in zip(values, values[1:])), values

    def test_live_trace_matches_gate_semantics(self, rf50, bank64, grid64, prior_beta2):
        # the gated sampler's trace must be exactly what the gate state
        # machine produces on the distance series it recorded, and satisfy
        # the accumulation bracketing at every refresh
        from seacache import simulate_gate, verify_accumulation_brackets

        x0, noise = make_run_inputs(13, grid64, 1, prior_beta2)
        for target in (0.3, 0.6):
            res = run_sampler(
                SamplerConfig(schedule=rf50, bank=bank64,
                              policy=MetricPolicy(kind=MetricKind.sea(), target_ratio=target)),
                x0, noise)
            resim = simulate_gate(res.distances, res.delta, force_first=True)
            assert resim.decisions == res.trace.decisions
            assert (resim.accumulator_after == res.trace.accumulator_after).all()
            verify_accumulation_brackets(res.distances, res.delta, res.trace)

    def test_proxy_alignment_sample(self, rf50, bank64, grid64, prior_beta2):
        wins = 0
        for seed in (20, 21, 22):
            x0, noise = make_run_inputs(seed, grid64, 1, prior_beta2)
            full = run_sampler(SamplerConfig(schedule=rf50, bank=bank64, policy=FullCompute()), x0, noise)
            sea_in = series_from_features(full.inputs, bank64, MetricKind.sea()).values
            raw_in = series_from_features(full.inputs, bank64, MetricKind.raw()).values
            sea_out = series_from_features(full.outputs, bank64, MetricKind.sea()).values
            wins += np.corrcoef(sea_in, sea_out)[0, 1] > np.corrcoef(raw_in, sea_out)[0, 1]
        assert wins == 3
