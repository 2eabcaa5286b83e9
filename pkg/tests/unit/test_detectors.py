"""
GAMP detectors: scalar nonlinearities, the iteration and direct baselines.
"""

import math

import numpy as np
import pytest
from scipy import stats

from src.models import (
    AdcBank,
    AdcSpec,
    Constellation,
    DetectorKind,
    GampConfig,
    OutputChannel,
    OutputKind,
    SystemConfig,
)
from src.services.channel import received_signal, sample_channel, sample_symbols
from src.services.detectors import (
    DequantizedOutput,
    DiscreteInput,
    GaussianInput,
    PseudoQuantizedOutput,
    build_detector,
    discrete_denoiser,
    dq_nonlinearity,
    gamp_run,
    gaussian_denoiser,
    hard_decision,
    hard_decision_indices,
    linear_mmse_direct,
    mrc_direct,
    pdq_nonlinearity,
)
from src.services.quantizer import quantize_vector
from src.utils.exceptions import ConfigError, DimensionError

QPSK_POINTS = Constellation.qpsk().symbols


def _enumerated_posterior(s, v_s, points, probs):
    weights = probs * np.exp(-np.abs(s - points) ** 2 / v_s)
    weights = weights / weights.sum()
    mean = np.sum(weights * points)
    return mean, float(np.sum(weights * np.abs(points - mean) ** 2))


class TestOutputNonlinearities:
    def test_pdq_closed_form(self):
        g, g_prime = pdq_nonlinearity(1.0 + 0.5j, 0.2 - 0.1j, 0.3, 0.2)
        assert g == pytest.approx((0.8 + 0.6j) / 0.5)
        assert g_prime == pytest.approx(2.0)

    def test_pdq_rejects_nonpositive_variances(self):
        with pytest.raises(ValueError):
            pdq_nonlinearity(0.0, 0.0, 0.0, 0.1)
        with pytest.raises(ValueError):
            pdq_nonlinearity(0.0, 0.0, 0.1, 0.0)

    def test_dq_full_precision_is_gaussian(self):
        g, g_prime = dq_nonlinearity(0.4 - 1.0j, 0.1, 0.5, AdcSpec.infinite(), 0.25)
        assert g == pytest.approx((0.3 - 1.0j) / 0.75)
        assert g_prime == pytest.approx(1.0 / 0.75)

    def test_dq_matches_truncated_gaussian_moments(self):
        spec = AdcSpec.uniform(2, 0.5)
        r, p, v_p, noise = 0.25 - 0.75j, 0.1 + 0.2j, 0.4, 0.1
        total = v_p + noise
        scale = math.sqrt(total / 2.0)
        real = stats.truncnorm(
            (0.0 - p.real) / scale, (0.5 - p.real) / scale, loc=p.real, scale=scale
        )
        imag = stats.truncnorm(
            -np.inf, (-0.5 - p.imag) / scale, loc=p.imag, scale=scale
        )
        expected_g = ((real.mean() - p.real) + 1j * (imag.mean() - p.imag)) / total
        expected_gp = (1.0 - (real.var() + imag.var()) / total) / total

        g, g_prime = dq_nonlinearity(r, p, v_p, spec, noise)
        assert g == pytest.approx(expected_g, rel=1e-9)
        assert g_prime == pytest.approx(expected_gp, rel=1e-9)
        assert 0.0 < g_prime <= 1.0 / total

    def test_one_bit_dq_ignores_the_step(self):
        p, v_p, noise = 0.3 - 0.2j, 0.6, 0.2
        results = [
            dq_nonlinearity(
                complex(step / 2, -step / 2), p, v_p, AdcSpec.uniform(1, step), noise
            )
            for step in (0.25, 1.0, 4.0)
        ]
        for g, g_prime in results[1:]:
            assert g == pytest.approx(results[0][0], rel=1e-14)
            assert g_prime == pytest.approx(results[0][1], rel=1e-14)

    def test_dq_rejects_nonpositive_prior_variance(self):
        with pytest.raises(ValueError):
            dq_nonlinearity(0.25, 0.0, 0.0, AdcSpec.uniform(1, 0.5), 0.1)


class TestInputDenoisers:
    @pytest.mark.parametrize(
        "constellation",
        [Constellation.qpsk(), Constellation.discrete(list(QPSK_POINTS))],
        ids=["tanh", "softmax"],
    )
    def test_qpsk_posterior_matches_enumeration(self, rng, constellation):
        for _ in range(50):
            s = complex(*rng.normal(scale=1.5, size=2))
            v_s = float(rng.uniform(0.05, 3.0))
            mean, var = discrete_denoiser(s, v_s, constellation)
            ref_mean, ref_var = _enumerated_posterior(
                s, v_s, QPSK_POINTS, np.full(4, 0.25)
            )
            assert abs(mean - ref_mean) < 1e-12
            assert var == pytest.approx(ref_var, abs=1e-12)

    def test_skewed_prior_matches_enumeration(self):
        points = np.array([1.0, -1.0, 1j * math.sqrt(2.0)])
        probs = np.array([0.4, 0.4, 0.2])
        power = float(np.sum(probs * np.abs(points) ** 2))
        points = points / math.sqrt(power)
        constellation = Constellation.discrete(list(points), list(probs))
        mean, var = discrete_denoiser(0.3 + 0.4j, 0.7, constellation)
        ref_mean, ref_var = _enumerated_posterior(0.3 + 0.4j, 0.7, points, probs)
        assert abs(mean - ref_mean) < 1e-12
        assert var == pytest.approx(ref_var, abs=1e-12)

    def test_gaussian_denoiser(self):
        mean, var = gaussian_denoiser(1.0 - 2.0j, 0.5)
        assert mean == pytest.approx((1.0 - 2.0j) / 1.5)
        assert var == pytest.approx(1.0 / 3.0)

    def test_vanishing_noise_recovers_the_point(self):
        point = QPSK_POINTS[2]
        mean, var = discrete_denoiser(point + 0.01, 1e-4, Constellation.qpsk())
        assert abs(mean - point) < 1e-12
        assert var < 1e-12

    def test_denoisers_reject_nonpositive_variance(self):
        with pytest.raises(ValueError):
            gaussian_denoiser(0.0, 0.0)
        with pytest.raises(ValueError):
            discrete_denoiser(0.0, -1.0, Constellation.qpsk())


class TestBuildDetector:
    def test_component_choice(self, qpsk, two_bit_bank):
        output, denoiser = build_detector(DetectorKind.DQ, qpsk, two_bit_bank, 0.1)
        assert isinstance(output, DequantizedOutput)
        assert isinstance(denoiser, DiscreteInput)

        output, denoiser = build_detector(DetectorKind.PDQ, qpsk, two_bit_bank, 0.1)
        assert isinstance(output, PseudoQuantizedOutput)
        assert isinstance(denoiser, DiscreteInput)

        output, denoiser = build_detector(
            DetectorKind.LINEAR, qpsk, two_bit_bank, 0.1
        )
        assert isinstance(output, PseudoQuantizedOutput)
        assert isinstance(denoiser, GaussianInput)

    def test_pqn_defaults_and_override(self, qpsk):
        bank = AdcBank.from_groups(
            [(AdcSpec.uniform(2, 0.6), 2), (AdcSpec.infinite(), 1)]
        )
        output, _ = build_detector(DetectorKind.PDQ, qpsk, bank, 0.1)
        np.testing.assert_allclose(output.gammas, [0.13, 0.13, 0.1])
        output, _ = build_detector(
            DetectorKind.PDQ, qpsk, bank, 0.1, pqn_variance=0.05
        )
        np.testing.assert_allclose(output.gammas, [0.15, 0.15, 0.1])

    def test_gaussian_input_uses_gaussian_prior(self, gaussian, two_bit_bank):
        _, denoiser = build_detector(DetectorKind.PDQ, gaussian, two_bit_bank, 0.1)
        assert isinstance(denoiser, GaussianInput)

    def test_output_channel_gamma(self):
        channel = OutputChannel(kind=OutputKind.PDQ, noise_variance=0.2)
        assert channel.gamma(AdcSpec.uniform(1, 1.2)) == pytest.approx(0.32)
        assert channel.gamma(AdcSpec.infinite()) == pytest.approx(0.2)
        assert channel.with_noise(0.5).gamma(AdcSpec.infinite()) == 0.5


def _problem(num_users, bank, noise_variance, seed, constellation=None):
    constellation = constellation or Constellation.qpsk()
    system = SystemConfig(
        num_users=num_users, num_antennas=len(bank), constellation=constellation
    )
    channel = sample_channel(system, seed)
    x = sample_symbols(constellation, num_users, seed + 1)
    y = received_signal(channel, x, noise_variance, seed + 2)
    return channel, x, quantize_vector(y, bank)


class TestGamp:
    @pytest.mark.parametrize("num_users", [8, 16])
    def test_linear_detector_reaches_the_lmmse_solution(self, num_users):
        spec = AdcSpec.uniform(1, 0.5)
        bank = AdcBank.uniform(spec, 4 * num_users)
        channel, _, r = _problem(num_users, bank, 0.1, seed=num_users)
        output, denoiser = build_detector(
            DetectorKind.LINEAR, Constellation.qpsk(), bank, 0.1
        )
        config = GampConfig(max_iterations=400, damping=0.3)
        result = gamp_run(channel, r, output, denoiser, config)

        direct = linear_mmse_direct(channel, r, 0.1 + 0.5**2 / 12.0)
        error = np.linalg.norm(result.estimate - direct) / np.linalg.norm(direct)
        assert error < 1e-6

    def test_mixed_bank_reaches_the_weighted_lmmse_solution(self):
        num_users = 12
        bank = AdcBank.from_groups(
            [
                (AdcSpec.uniform(2, 0.5), 2 * num_users),
                (AdcSpec.infinite(), 2 * num_users),
            ]
        )
        channel, _, r = _problem(num_users, bank, 0.05, seed=99)
        output, denoiser = build_detector(
            DetectorKind.LINEAR, Constellation.qpsk(), bank, 0.05
        )
        result = gamp_run(
            channel, r, output, denoiser, GampConfig(max_iterations=400, damping=0.3)
        )
        direct = linear_mmse_direct(channel, r, output.gammas)
        error = np.linalg.norm(result.estimate - direct) / np.linalg.norm(direct)
        assert error < 1e-6

    def test_dq_detects_qpsk_at_high_snr(self):
        bank = AdcBank.uniform(AdcSpec.infinite(), 64)
        channel, x, r = _problem(8, bank, 1e-3, seed=5)
        qpsk = Constellation.qpsk()
        output, denoiser = build_detector(DetectorKind.DQ, qpsk, bank, 1e-3)
        result = gamp_run(channel, r, output, denoiser, GampConfig(), x_true=x)
        np.testing.assert_array_equal(hard_decision(result.estimate, qpsk), x)
        assert result.mse_trajectory()[-1] < 1e-3

    def test_trace_runs_every_iteration_without_tolerance(self, two_bit_bank):
        channel, x, r = _problem(8, two_bit_bank, 0.1, seed=3)
        output, denoiser = build_detector(
            DetectorKind.PDQ, Constellation.qpsk(), two_bit_bank, 0.1
        )
        result = gamp_run(
            channel, r, output, denoiser, GampConfig(max_iterations=7), x_true=x
        )
        assert result.iterations == 7
        assert result.converged
        assert len(result.mse_trajectory()) == 7
        assert [state.iteration for state in result.trace] == list(range(1, 8))

    @pytest.mark.parametrize("kind", [DetectorKind.DQ, DetectorKind.PDQ])
    def test_first_iteration_correction(self, two_bit_bank, kind):
        channel, _, r = _problem(8, two_bit_bank, 0.1, seed=3)
        output, denoiser = build_detector(kind, Constellation.qpsk(), two_bit_bank, 0.1)
        plain = gamp_run(channel, r, output, denoiser, GampConfig(max_iterations=1))
        np.testing.assert_array_equal(plain.trace[0].p, 0.0)

        config = GampConfig(max_iterations=1, onsager_from_start=True)
        corrected = gamp_run(channel, r, output, denoiser, config)
        first = corrected.trace[0]
        g_start, _ = output.evaluate(r, np.zeros_like(r), first.v_p)
        assert np.any(np.abs(g_start) > 0.0)
        np.testing.assert_allclose(first.p, -first.v_p * g_start, rtol=1e-12)

    def test_first_iteration_correction_keeps_the_fixed_point(self):
        num_users = 8
        bank = AdcBank.uniform(AdcSpec.uniform(1, 0.5), 4 * num_users)
        channel, _, r = _problem(num_users, bank, 0.1, seed=num_users)
        output, denoiser = build_detector(
            DetectorKind.LINEAR, Constellation.qpsk(), bank, 0.1
        )
        config = GampConfig(max_iterations=400, damping=0.3, onsager_from_start=True)
        result = gamp_run(channel, r, output, denoiser, config)
        direct = linear_mmse_direct(channel, r, 0.1 + 0.5**2 / 12.0)
        error = np.linalg.norm(result.estimate - direct) / np.linalg.norm(direct)
        assert error < 1e-6

    def test_tolerance_stops_early(self, two_bit_bank):
        channel, _, r = _problem(8, two_bit_bank, 0.1, seed=3)
        output, denoiser = build_detector(
            DetectorKind.LINEAR, Constellation.qpsk(), two_bit_bank, 0.1
        )
        config = GampConfig(max_iterations=500, damping=0.3, convergence_tol=1e-10)
        result = gamp_run(channel, r, output, denoiser, config)
        assert result.converged
        assert result.iterations < 500

    def test_off_alphabet_observation(self, two_bit_bank):
        channel, _, r = _problem(8, two_bit_bank, 0.1, seed=3)
        r = r.copy()
        r[4] = 0.3 + 0.25j
        output, denoiser = build_detector(
            DetectorKind.DQ, Constellation.qpsk(), two_bit_bank, 0.1
        )
        with pytest.raises(ConfigError):
            gamp_run(channel, r, output, denoiser, GampConfig())

    def test_observation_shape_mismatch(self, two_bit_bank):
        channel, _, r = _problem(8, two_bit_bank, 0.1, seed=3)
        output, denoiser = build_detector(
            DetectorKind.PDQ, Constellation.qpsk(), two_bit_bank, 0.1
        )
        with pytest.raises(DimensionError):
            gamp_run(channel, r[:-1], output, denoiser, GampConfig())


class TestDirectBaselines:
    def test_unregularized_noiseless_solve_inverts_the_channel(self, small_system):
        channel = sample_channel(small_system, 4)
        x = sample_symbols(small_system.constellation, 8, 5)
        estimate = linear_mmse_direct(channel, channel.matrix @ x, 0.0)
        np.testing.assert_allclose(estimate, x, rtol=1e-9, atol=1e-10)

    def test_scalar_and_constant_vector_gamma_agree(self, small_system):
        channel = sample_channel(small_system, 4)
        r = channel.matrix @ sample_symbols(small_system.constellation, 8, 5)
        scalar = linear_mmse_direct(channel, r, 0.3)
        vector = linear_mmse_direct(channel, r, np.full(32, 0.3))
        np.testing.assert_allclose(scalar, vector, rtol=1e-10)

    def test_mrc_is_the_matched_filter(self, small_system):
        channel = sample_channel(small_system, 4)
        r = np.ones(32, dtype=complex)
        np.testing.assert_allclose(mrc_direct(channel, r), channel.matrix.conj().T @ r)

    def test_shape_checks(self, small_system):
        channel = sample_channel(small_system, 4)
        with pytest.raises(DimensionError):
            linear_mmse_direct(channel, np.ones(5, dtype=complex), 0.1)
        with pytest.raises(ValueError):
            linear_mmse_direct(channel, np.ones(32, dtype=complex), -0.1)


class TestHardDecision:
    def test_nearest_point(self, qpsk):
        estimate = np.array([0.9 + 0.2j, -0.1 - 3.0j, -2.0 + 0.01j])
        np.testing.assert_array_equal(
            hard_decision(estimate, qpsk), QPSK_POINTS[[0, 2, 1]]
        )

    def test_ties_go_to_the_first_canonical_point(self, qpsk):
        assert hard_decision_indices(np.array([0.0 + 0.0j]), qpsk).tolist() == [0]

    def test_gaussian_inputs_have_no_decision(self, gaussian):
        with pytest.raises(ValueError):
            hard_decision(np.zeros(2, dtype=complex), gaussian)
