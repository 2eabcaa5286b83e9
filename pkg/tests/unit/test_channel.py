"""
Channel, symbol and noise sampling.
"""

import numpy as np
import pytest

from src.models import ChannelRealization, Constellation, SystemConfig
from src.services.channel import received_signal, sample_channel, sample_symbols
from src.utils.exceptions import DimensionError


def test_channel_is_a_pure_function_of_the_seed(small_system):
    first = sample_channel(small_system, 7).matrix
    again = sample_channel(small_system, 7).matrix
    other = sample_channel(small_system, 8).matrix
    assert first.shape == (32, 8)
    np.testing.assert_array_equal(first, again)
    assert not np.allclose(first, other)


def test_channel_entries_have_power_one_over_k():
    system = SystemConfig(num_users=50, num_antennas=400)
    power = sample_channel(system, 3).power
    assert power.mean() == pytest.approx(1.0 / 50, rel=0.05)


def test_qpsk_symbols_come_from_the_constellation(qpsk):
    x = sample_symbols(qpsk, 500, 11)
    assert x.shape == (500,)
    assert np.all(np.isin(x, qpsk.symbols))
    np.testing.assert_allclose(np.abs(x), 1.0)


def test_discrete_symbols_respect_probabilities():
    bpsk = Constellation.discrete([1.0, -1.0], [0.9, 0.1])
    x = sample_symbols(bpsk, 20_000, 5)
    assert np.mean(x.real > 0) == pytest.approx(0.9, abs=0.01)


def test_gaussian_symbols_have_unit_power(gaussian):
    x = sample_symbols(gaussian, 20_000, 2)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, rel=0.03)


def test_symbol_count_must_be_positive(qpsk):
    with pytest.raises(ValueError):
        sample_symbols(qpsk, 0, 1)


class TestReceivedSignal:
    def test_noiseless_is_exact(self, small_system, qpsk):
        channel = sample_channel(small_system, 1)
        x = sample_symbols(qpsk, small_system.num_users, 2)
        np.testing.assert_array_equal(
            received_signal(channel, x, 0.0, 3), channel.matrix @ x
        )

    def test_noise_has_the_requested_variance(self):
        channel = ChannelRealization(matrix=np.zeros((20_000, 1), dtype=complex))
        y = received_signal(channel, np.ones(1, dtype=complex), 0.25, 9)
        assert np.mean(np.abs(y) ** 2) == pytest.approx(0.25, rel=0.03)
        assert np.var(y.real) == pytest.approx(0.125, rel=0.05)

    def test_shape_mismatch(self, small_system):
        channel = sample_channel(small_system, 1)
        with pytest.raises(DimensionError):
            received_signal(channel, np.ones(3, dtype=complex), 0.1, 3)

    def test_negative_noise(self, small_system):
        channel = sample_channel(small_system, 1)
        with pytest.raises(ValueError):
            received_signal(channel, np.ones(8, dtype=complex), -0.1, 3)
