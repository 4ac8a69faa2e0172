import numpy as np
import pytest

from ristrack.channel import (
    bs_ris_channel,
    direct_channel,
    noise_power,
    ris_ue_channel,
    ris_ue_channel_los,
)
from ristrack.geometry import ArraySpec, RadiationPattern

LAM = 299792458.0 / 28e9


def _single_element(position):
    return ArraySpec("ULA", 1, 1, LAM / 2, np.asarray(position, dtype=float),
                     np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))


FLAT = RadiationPattern(exponent=0.0)  # F = 1 in front of the plane


def test_noise_power_definition():
    assert noise_power(-174.0, 0.0, 1.0) == pytest.approx(10 ** (-20.4))


def test_noise_power_hand_evaluated():
    # independent evaluation of npd + nf + 10 log10 B - 30 in dB
    expected_dbm = -174.0 + 7.0 + 10 * np.log10(120e3)
    expected = 10 ** ((expected_dbm - 30.0) / 10.0)
    value = noise_power(-174.0, 7.0, 120e3)
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(2.398e-15, rel=1e-3)


def test_noise_power_linear_in_bandwidth():
    assert noise_power(-174.0, 7.0, 240e3) == pytest.approx(
        2 * noise_power(-174.0, 7.0, 120e3), rel=1e-12)


def test_bs_ris_amplitude_single_path():
    bs = _single_element([1.0, 0.0, 0.0])
    ris = _single_element([0.0, 0.0, 0.0])  # normal +x, BS on boresight at 1 m
    g = bs_ris_channel(bs, ris, FLAT, LAM)
    assert g.shape == (1, 1)
    assert abs(g[0, 0]) == pytest.approx(LAM / (4 * np.pi), rel=1e-12)
    assert np.angle(g[0, 0]) == pytest.approx(
        np.angle(np.exp(-2j * np.pi * 1.0 / LAM)), abs=1e-9)


def test_bs_ris_amplitude_inverse_distance():
    ris = _single_element([0.0, 0.0, 0.0])
    g1 = bs_ris_channel(_single_element([2.0, 0, 0]), ris, FLAT, LAM)
    g2 = bs_ris_channel(_single_element([4.0, 0, 0]), ris, FLAT, LAM)
    assert abs(g2[0, 0]) == pytest.approx(abs(g1[0, 0]) / 2, rel=1e-12)


def test_ris_ue_rician_limits():
    ris = _single_element([0.0, 0.0, 0.0])
    ue_pts = np.array([[3.0, 0.0, 0.0]])
    rng = np.random.default_rng(0)
    b_inf, los = ris_ue_channel(ris, ue_pts, ue_pts[0], FLAT, LAM, np.inf, rng)
    np.testing.assert_allclose(b_inf, los)
    # kappa = 0: zero-mean with E|b|^2 = rho^2
    rho = np.abs(los[0, 0])
    draws = np.array([ris_ue_channel(ris, ue_pts, ue_pts[0], FLAT, LAM, 0.0,
                                     np.random.default_rng(seed))[0][0, 0]
                      for seed in range(4000)])
    assert abs(draws.mean()) < 4 * rho / np.sqrt(4000)
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(rho ** 2, rel=0.1)


def test_ris_ue_second_moment_any_kappa():
    # Monte Carlo moment check: E|b|^2 = rho^2 and |E b| = sqrt(k/(k+1)) rho
    ris = _single_element([0.0, 0.0, 0.0])
    ue_pts = np.array([[2.0, 1.0, 0.5]])
    kappa = 3.7
    rng = np.random.default_rng(7)
    los = ris_ue_channel_los(ris, ue_pts, ue_pts[0], FLAT, LAM)
    rho = np.abs(los[0, 0])
    n = 100_000
    draws = np.empty(n, dtype=complex)
    for i in range(n):
        draws[i] = ris_ue_channel(ris, ue_pts, ue_pts[0], FLAT, LAM, kappa, rng)[0][0, 0]
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(rho ** 2, rel=0.02)
    assert abs(draws.mean()) == pytest.approx(np.sqrt(kappa / (kappa + 1)) * rho, rel=0.02)


def test_direct_channel_kappa_zero_is_zero_mean():
    bs = _single_element([5.0, 0.0, 0.0])
    ue_pts = np.array([[0.0, 0.0, 0.0]])
    rng = np.random.default_rng(1)
    draws = np.array([direct_channel(bs, ue_pts, ue_pts[0], FLAT, LAM, 0.0, rng)[0, 0]
                      for _ in range(2000)])
    gamma = LAM / (4 * np.pi * 5.0)
    assert abs(draws.mean()) < 4 * gamma / np.sqrt(2000)
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(gamma ** 2, rel=0.15)


def test_channel_bit_reproducibility():
    ris = ArraySpec("URA", 2, 3, LAM / 2, np.zeros(3),
                    np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    ue_pts = np.array([[2.0, 0.3, 0.1], [2.0, 0.4, 0.1]])
    b1, _ = ris_ue_channel(ris, ue_pts, ue_pts[0], FLAT, LAM, 5.0, np.random.default_rng(99))
    b2, _ = ris_ue_channel(ris, ue_pts, ue_pts[0], FLAT, LAM, 5.0, np.random.default_rng(99))
    assert np.array_equal(b1, b2)


def test_amplitude_inverse_distance_sweep():
    # LOS magnitudes scale as 1/d along a boresight sweep
    ris = _single_element([0.0, 0.0, 0.0])
    dists = np.array([1.0, 2.0, 4.0, 8.0])
    mags = []
    for d in dists:
        ue = np.array([[d, 0.0, 0.0]])
        mags.append(np.abs(ris_ue_channel_los(ris, ue, ue[0], FLAT, LAM)[0, 0]))
    np.testing.assert_allclose(np.array(mags) * dists, mags[0] * dists[0], rtol=1e-12)
