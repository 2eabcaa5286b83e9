"""
Step-size search, normalized steps and the design sweeps.
"""

import math

import numpy as np
import pytest

from src.models import (
    AdcSpec,
    ConstellationKind,
    DetectorKind,
    Metric,
    MixedProfile,
    SeConfig,
    TuneObjective,
)
from src.services import tuning
from src.services.state_evolution import mse_from_se, predict
from src.services.tuning import (
    average_normalized_step,
    constellation_for,
    evaluate_step,
    gap_db,
    is_unimodal,
    normalize_step,
    optimize_step_size,
    snr_at_target,
    sweep_lambda,
    sweep_mixed_profile,
    sweep_sigma_q,
    sweep_step_size,
)
from src.utils.exceptions import ConfigError, NonConvergenceError, NumericalError


def _objective(detector=DetectorKind.PDQ, bits=2, **overrides) -> TuneObjective:
    fields = dict(
        metric=Metric.BER,
        detector=detector,
        load=4.0,
        noise_variance=10 ** (-0.5),
        bits=bits,
    )
    fields.update(overrides)
    return TuneObjective(**fields)


class TestHelpers:
    @pytest.mark.parametrize(
        "step,noise,expected",
        [(1.0, 1.0, 1.0), (0.5, 0.0, math.sqrt(2.0) / 2.0), (2.0, 3.0, math.sqrt(2.0))],
    )
    def test_normalize_step(self, step, noise, expected):
        assert normalize_step(step, noise) == pytest.approx(expected)

    def test_normalize_step_rejects_bad_input(self):
        with pytest.raises(ValueError):
            normalize_step(0.0, 1.0)
        with pytest.raises(ValueError):
            normalize_step(1.0, -0.1)

    def test_gap_db(self):
        assert gap_db(2.0, 1.0) == pytest.approx(3.0103, abs=1e-4)
        assert gap_db(1.0, 1.0) == 0.0
        with pytest.raises(ValueError):
            gap_db(0.0, 1.0)

    @pytest.mark.parametrize(
        "values,expected",
        [
            ([3.0, 2.0, 1.0, 2.0, 3.0], True),
            ([1.0, 1.0, 1.0], True),
            ([1.0, 2.0, 3.0], True),
            ([1.0, 3.0, 1.0, 3.0], False),
            ([3.0, 1.0, 2.0, 1.5], False),
            ([math.inf, 2.0, 1.0, 2.0], True),
        ],
    )
    def test_is_unimodal(self, values, expected):
        assert is_unimodal(values) is expected

    def test_snr_at_target_interpolates_in_log_domain(self):
        assert snr_at_target([0.0, 10.0], [1e-1, 1e-3], 1e-2) == pytest.approx(5.0)
        assert snr_at_target([10.0, 0.0], [1e-3, 1e-1], 1e-2) == pytest.approx(5.0)

    def test_snr_at_target_without_crossing(self):
        assert math.isnan(snr_at_target([0.0, 5.0], [0.3, 0.2], 1e-3))

    def test_snr_at_target_argument_checks(self):
        with pytest.raises(ValueError):
            snr_at_target([0.0, 1.0], [0.1, 0.01], 0.0)
        with pytest.raises(ValueError):
            snr_at_target([0.0], [0.1], 0.01)

    def test_constellation_for(self):
        assert constellation_for(ConstellationKind.QPSK).kind is ConstellationKind.QPSK
        with pytest.raises(ConfigError):
            constellation_for(ConstellationKind.DISCRETE)

    def test_ber_objective_needs_qpsk(self):
        with pytest.raises(ValueError):
            _objective(constellation_kind=ConstellationKind.GAUSSIAN)


class TestOptimizeStepSize:
    def test_quadratic_objective(self, monkeypatch, se_cfg):
        monkeypatch.setattr(
            tuning, "evaluate_step", lambda obj, step, cfg: (step - 1.3) ** 2 + 0.1
        )
        optimum = optimize_step_size(_objective(), se_cfg, tol=1e-6)
        assert optimum.step == pytest.approx(1.3, abs=1e-4)
        assert optimum.metric == pytest.approx(0.1, abs=1e-8)
        assert not optimum.fallback and not optimum.irrelevant
        assert optimum.evaluations > 25

    def test_multimodal_coarse_grid_uses_the_dense_grid(self, monkeypatch, se_cfg):
        def bumpy(obj, step, cfg):
            return math.cos(3.0 * step) + 0.05 * step

        monkeypatch.setattr(tuning, "evaluate_step", bumpy)
        optimum = optimize_step_size(_objective(), se_cfg)
        dense = np.linspace(0.01, 8.0, 400)
        values = np.cos(3.0 * dense) + 0.05 * dense
        assert optimum.fallback
        assert optimum.step == pytest.approx(dense[np.argmin(values)])
        assert optimum.metric == pytest.approx(values.min())

    def test_failed_evaluations_count_as_infinite(self, monkeypatch, se_cfg):
        def fragile(obj, step, cfg):
            if step < 0.5:
                raise NumericalError("diverged")
            return (step - 2.0) ** 2

        monkeypatch.setattr(tuning, "evaluate_step", fragile)
        optimum = optimize_step_size(_objective(), se_cfg)
        assert optimum.step == pytest.approx(2.0, abs=1e-2)

    def test_every_coarse_step_failing_is_an_error(self, monkeypatch, se_cfg):
        def broken(obj, step, cfg):
            raise NumericalError("diverged")

        monkeypatch.setattr(tuning, "evaluate_step", broken)
        with pytest.raises(NumericalError):
            optimize_step_size(_objective(), se_cfg)

    def test_nonconverged_steps_are_avoided_and_counted(self, monkeypatch, se_cfg):
        def unsettled(obj, step, cfg):
            if step > 3.0:
                raise NonConvergenceError("no fixed point", value=0.0)
            return (step - 1.5) ** 2 + 0.2

        monkeypatch.setattr(tuning, "evaluate_step", unsettled)
        optimum = optimize_step_size(_objective(), se_cfg)
        assert optimum.step == pytest.approx(1.5, abs=1e-2)
        assert optimum.metric == pytest.approx(0.2, abs=1e-4)
        assert optimum.nonconverged > 0
        assert not optimum.converged

    def test_every_coarse_step_nonconverged_is_reported(self, monkeypatch, se_cfg):
        def unsettled(obj, step, cfg):
            raise NonConvergenceError("no fixed point", value=0.1)

        monkeypatch.setattr(tuning, "evaluate_step", unsettled)
        with pytest.raises(NonConvergenceError):
            optimize_step_size(_objective(), se_cfg)

    def test_converged_search_reports_no_failures(self, monkeypatch, se_cfg):
        monkeypatch.setattr(
            tuning, "evaluate_step", lambda obj, step, cfg: (step - 0.7) ** 2
        )
        optimum = optimize_step_size(_objective(), se_cfg)
        assert optimum.nonconverged == 0
        assert optimum.converged

    def test_metric_value_refuses_an_unsettled_fixed_point(self, qpsk):
        profile = MixedProfile.single(AdcSpec.uniform(2, 0.5), 4.0)
        with pytest.raises(NonConvergenceError) as info:
            tuning.metric_value(
                Metric.BER,
                DetectorKind.PDQ,
                qpsk,
                profile,
                0.1,
                SeConfig(max_iterations=2),
            )
        assert 0.0 < info.value.value < 0.5
        assert info.value.exit_code == 4

    def test_one_bit_dq_is_step_irrelevant(self, se_cfg):
        optimum = optimize_step_size(_objective(DetectorKind.DQ, bits=1), se_cfg)
        assert optimum.step is None
        assert optimum.irrelevant
        assert 0.0 < optimum.metric < 0.5

    def test_all_full_precision_is_step_irrelevant(self, se_cfg):
        objective = _objective(high_resolution_fraction=1.0)
        assert optimize_step_size(objective, se_cfg).irrelevant

    def test_one_bit_dq_metric_is_flat(self, se_cfg):
        objective = _objective(DetectorKind.DQ, bits=1)
        values = [evaluate_step(objective, step, se_cfg) for step in (0.1, 1.0, 5.0)]
        assert max(values) - min(values) < 1e-10

    def test_bracket_and_tolerance_are_validated(self, se_cfg):
        with pytest.raises(ConfigError):
            optimize_step_size(_objective(), se_cfg, bracket=(1.0, 0.5))
        with pytest.raises(ConfigError):
            optimize_step_size(_objective(), se_cfg, tol=0.0)

    def test_real_search_beats_its_neighbours(self, se_cfg):
        objective = _objective(DetectorKind.PDQ, bits=2)
        optimum = optimize_step_size(objective, se_cfg)
        assert optimum.step is not None
        for factor in (0.8, 1.25):
            neighbour = evaluate_step(objective, optimum.step * factor, se_cfg)
            assert optimum.metric <= neighbour + 1e-12

    def test_average_normalized_step_rejects_one_bit_dq(self, se_cfg):
        with pytest.raises(ConfigError):
            average_normalized_step(1, DetectorKind.DQ, se_cfg)

    def test_average_normalized_step(self, monkeypatch, se_cfg):
        monkeypatch.setattr(
            tuning, "evaluate_step", lambda obj, step, cfg: (step - 1.0) ** 2
        )
        value = average_normalized_step(
            3, DetectorKind.PDQ, se_cfg, snr_grid_db=[0.0, 10.0]
        )
        expected = np.mean([normalize_step(1.0, 1.0), normalize_step(1.0, 0.1)])
        assert value == pytest.approx(expected, rel=1e-3)


class TestSweeps:
    def test_step_sweep_sorts_the_grid(self, monkeypatch, se_cfg):
        monkeypatch.setattr(
            tuning, "evaluate_step", lambda obj, step, cfg: abs(step - 1.0)
        )
        result = sweep_step_size(_objective(), [2.0, 0.5, 1.0], se_cfg, threads=2)
        assert result.values == (0.5, 1.0, 2.0)
        assert result.optimum == (1.0, 0.0)

    def test_step_sweep_keeps_nonconverged_values(self, monkeypatch, se_cfg):
        def unsettled(obj, step, cfg):
            if step == 2.0:
                raise NonConvergenceError("no fixed point", value=0.4)
            return step

        monkeypatch.setattr(tuning, "evaluate_step", unsettled)
        result = sweep_step_size(_objective(), [1.0, 2.0, 3.0], se_cfg)
        assert result.metrics == (1.0, 0.4, 3.0)
        assert result.nonconverged == 1

    def test_step_sweep_rejects_bad_grids(self, se_cfg):
        with pytest.raises(ConfigError):
            sweep_step_size(_objective(), [], se_cfg)
        with pytest.raises(ConfigError):
            sweep_step_size(_objective(), [0.0, 1.0], se_cfg)

    def test_sigma_q_extremes(self, se_cfg):
        spec = AdcSpec.uniform(2, 1.0)
        result = sweep_sigma_q([1e6, 0.0, 1.0 / 12.0], spec, 4.0, 0.1, se_cfg)
        assert result.values == (0.0, 1.0 / 12.0, 1e6)
        assert result.metrics[-1] > 0.99
        assert result.reference is not None
        assert result.reference[0] == pytest.approx(1.0 / 12.0)
        assert result.reference[1] == pytest.approx(result.metrics[1])

    def test_sigma_q_zero_on_full_precision_is_lmmse(self, gaussian, se_cfg):
        result = sweep_sigma_q([0.0], AdcSpec.infinite(), 4.0, 0.1, se_cfg)
        profile = MixedProfile.single(AdcSpec.infinite(), 4.0)
        solution = predict(DetectorKind.LINEAR, gaussian, profile, 0.1, se_cfg)
        assert result.metrics[0] == pytest.approx(mse_from_se(solution.moments))

    def test_mixed_sweep_with_fixed_step(self, se_cfg):
        sweep = sweep_mixed_profile(
            [1.0, 0.0, 0.2], bits=1, load=4.0, noise_variance=0.1, cfg=se_cfg, step=1.0
        )
        assert sweep.fractions == (0.0, 0.2, 1.0)
        assert sweep.dq_steps == (1.0, 1.0, 1.0)
        assert sweep.gap_db[-1] == pytest.approx(0.0, abs=1e-6)
        assert sweep.gap_db[0] > 0.0
        dq = sweep.dq.metrics
        assert dq[0] >= dq[1] >= dq[2]

    def test_mixed_sweep_optimizes_per_fraction(self, se_cfg):
        sweep = sweep_mixed_profile(
            [1.0], bits=1, load=4.0, noise_variance=0.1, cfg=se_cfg
        )
        assert sweep.dq_steps == (None,)
        assert sweep.pdq_steps == (None,)
        assert sweep.gap_db == (pytest.approx(0.0, abs=1e-6),)

    def test_mixed_sweep_counts_unsettled_points(self):
        sweep = sweep_mixed_profile(
            [0.0, 0.5], 2, 4.0, 0.1, SeConfig(max_iterations=2), step=0.5
        )
        assert sweep.dq.nonconverged == 2
        assert sweep.pdq.nonconverged == 2
        assert sweep.nonconverged == 4
        assert all(math.isfinite(value) for value in sweep.dq.metrics)

    def test_mixed_sweep_rejects_bad_fractions(self, se_cfg):
        with pytest.raises(ConfigError):
            sweep_mixed_profile([1.2], 1, 4.0, 0.1, se_cfg, step=1.0)
        with pytest.raises(ConfigError):
            sweep_mixed_profile([], 1, 4.0, 0.1, se_cfg, step=1.0)

    def test_lambda_sweep_improves_with_more_antennas(self, se_cfg):
        result = sweep_lambda(
            [8.0, 2.0, 4.0], DetectorKind.DQ, AdcSpec.uniform(1, 1.0), 0.1, se_cfg
        )
        assert result.values == (2.0, 4.0, 8.0)
        mse = result.metrics
        assert mse[0] > mse[1] > mse[2]
        assert result.optimum == (8.0, mse[2])

    def test_lambda_sweep_checks(self, se_cfg, gaussian):
        spec = AdcSpec.uniform(1, 1.0)
        with pytest.raises(ConfigError):
            sweep_lambda([0.0], DetectorKind.DQ, spec, 0.1, se_cfg)
        with pytest.raises(ConfigError):
            sweep_lambda(
                [2.0], DetectorKind.DQ, spec, 0.1, se_cfg, gaussian, metric=Metric.BER
            )
