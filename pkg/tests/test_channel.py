import numpy as np
import pytest

from channelcomp.channel import (
    ChannelConfig,
    GainBelowFloor,
    complex_noise,
    draw_fading,
    mac_transmit,
    power_control,
    sigma_from_snr,
    trial_rng,
)


@pytest.mark.parametrize("snr,norm,sigma", [(0, 1, 1), (20, 1, 0.1), (6.0206, 2, 1.0)])
def test_sigma_from_snr(snr, norm, sigma):
    assert sigma_from_snr(snr, norm) == pytest.approx(sigma, abs=1e-4)


def test_sigma_infinite_snr():
    assert sigma_from_snr(np.inf, 3.0) == 0.0


def test_fading():
    np.testing.assert_array_equal(draw_fading(4, ChannelConfig(), np.random.default_rng(0)), np.ones(4))
    cfg = ChannelConfig(fading="rayleigh", gain_floor=0.1)
    a = draw_fading(1000, cfg, np.random.default_rng(5))
    b = draw_fading(1000, cfg, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a) >= 0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(sigma_z=-1)
    with pytest.raises(ValueError):
        ChannelConfig(fading="rician")


@pytest.mark.parametrize("h,p", [(1, 1), (0.5 * np.exp(1j * np.pi / 4), 2 * np.exp(-1j * np.pi / 4)), (1j, -1j)])
def test_power_control(h, p):
    assert power_control(h) == pytest.approx(p)
    assert h * power_control(h) == pytest.approx(1)


def test_power_control_floor():
    with pytest.raises(GainBelowFloor):
        power_control(np.array([1.0, 0.01]), gain_floor=0.05)


def test_mac_noiseless():
    assert mac_transmit([1, 1], 1, 1, 0.0) == 2
    rng = np.random.default_rng(1)
    h = (rng.standard_normal(5) + 1j * rng.standard_normal(5))
    s = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert mac_transmit(s, h, power_control(h), 0.0) == pytest.approx(s.sum())


def test_mac_reproducible():
    a = mac_transmit([1, -1, 1], 1, 1, 0.3, np.random.default_rng(9))
    b = mac_transmit([1, -1, 1], 1, 1, 0.3, np.random.default_rng(9))
    assert a == b


def test_noise_variance():
    z = complex_noise(0.7, np.random.default_rng(0), 100_000)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(0.49, rel=0.02)
    assert np.var(z.real) == pytest.approx(0.245, rel=0.02)
    assert np.var(z.imag) == pytest.approx(0.245, rel=0.02)


def test_trial_streams():
    a = trial_rng(42, "channelcomp-sum", 3, 7).standard_normal(4)
    b = trial_rng(42, "channelcomp-sum", 3, 7).standard_normal(4)
    c = trial_rng(42, "channelcomp-sum", 3, 8).standard_normal(4)
    d = trial_rng(42, "ofdma-sum", 3, 7).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
