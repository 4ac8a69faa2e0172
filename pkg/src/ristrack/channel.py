"""Synthesis of the direct, BS-RIS, and RIS-user channel matrices.

Every hop carries a free-space amplitude lam/(4*pi*d_ref) referenced to the
center-to-center distance of the link, a per-element unit-cell pattern factor,
and a spherical-wavefront phase exp(-j*2*pi*d/lam) at the exact element-pair
distance.  The BS-RIS hop is deterministic line of sight; the RIS-user and
direct hops are Rician with per-entry fading variance equal to the squared
line-of-sight amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ristrack.geometry import (
    ArraySpec,
    RadiationPattern,
    element_positions,
    local_cos_angle,
)

__all__ = [
    "ChannelSet",
    "RfConfig",
    "SPEED_OF_LIGHT",
    "bs_ris_channel",
    "direct_channel",
    "direct_channel_los",
    "noise_power",
    "ris_ue_amplitudes",
    "ris_ue_channel",
    "ris_ue_channel_los",
]

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class RfConfig:
    """Carrier, noise, pilot, and fading parameters of the link."""

    carrier_hz: float
    bandwidth_hz: float
    noise_density_dbm_hz: float
    noise_figure_db: float
    pilot_power_w: float
    pilot_length: int
    rice_factor_ris_ue: float = 5.0
    rice_factor_direct: float = 0.0

    def __post_init__(self) -> None:
        if self.carrier_hz <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("carrier and bandwidth must be > 0")
        if self.pilot_power_w <= 0:
            raise ValueError("pilot power must be > 0")
        if self.pilot_length < 1:
            raise ValueError("pilot length must be >= 1")
        if self.rice_factor_ris_ue < 0 or self.rice_factor_direct < 0:
            raise ValueError("Rice factors must be >= 0")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power_w(self) -> float:
        return noise_power(self.noise_density_dbm_hz, self.noise_figure_db, self.bandwidth_hz)


@dataclass
class ChannelSet:
    """Realized channel matrices for one user position and fading draw.

    ``direct`` is N_RX x N_TX, ``bs_ris[k]`` is P x N_TX, ``ris_ue[k]`` is
    N_RX x P.  ``ris_ue_los`` holds the unfaded line-of-sight component of
    ``ris_ue`` (used by the tracking model and the optimizers).
    """

    direct: np.ndarray
    bs_ris: list[np.ndarray]
    ris_ue: list[np.ndarray]
    ris_ue_los: list[np.ndarray]

    @property
    def n_ris(self) -> int:
        return len(self.bs_ris)


def noise_power(npd_dbm_hz: float, nf_db: float, bandwidth_hz: float) -> float:
    """Thermal noise power in watts over ``bandwidth_hz``."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be > 0")
    return 10.0 ** ((npd_dbm_hz + nf_db + 10.0 * np.log10(bandwidth_hz) - 30.0) / 10.0)


def _los_hop(tx_points: np.ndarray, rx_points: np.ndarray, amplitudes: np.ndarray,
             wavelength: float) -> np.ndarray:
    """LOS matrix with rows over ``rx_points``: amp * exp(-j*2*pi*d/lam)."""
    d = np.linalg.norm(rx_points[:, None, :] - tx_points[None, :, :], axis=2)
    return amplitudes * np.exp(-2j * np.pi * d / wavelength)


def bs_ris_channel(bs: ArraySpec, ris: ArraySpec, pattern: RadiationPattern,
                   wavelength: float) -> np.ndarray:
    """Deterministic LOS channel from the BS to one RIS, shape (P, N_TX).

    Amplitude per entry: lam/(4*pi*d_center) * sqrt(G_tx * G_c * F(angle at the
    cell toward the BS antenna)); phase from the exact element-pair distance.
    """
    bs_pts = element_positions(bs)
    cells = element_positions(ris)
    d_center = float(np.linalg.norm(ris.reference_position - bs.reference_position))
    cos_in = local_cos_angle(cells[:, None, :], bs_pts[None, :, :], ris.normal)
    f_in = np.where(cos_in > 0, cos_in ** pattern.exponent, 0.0)
    amp = (wavelength / (4 * np.pi)) * np.sqrt(pattern.tx_gain * pattern.cell_gain * f_in) / d_center
    return _los_hop(bs_pts, cells, amp, wavelength)


def ris_ue_amplitudes(ris: ArraySpec, ue_points: np.ndarray, ue_center: np.ndarray,
                      pattern: RadiationPattern, wavelength: float) -> np.ndarray:
    """LOS amplitudes rho of the RIS-to-user hop, shape (N_RX, P)."""
    cells = element_positions(ris)
    d_center = float(np.linalg.norm(np.asarray(ue_center, dtype=float) - ris.reference_position))
    cos_out = local_cos_angle(cells[None, :, :], ue_points[:, None, :], ris.normal)
    f_out = np.where(cos_out > 0, cos_out ** pattern.exponent, 0.0)
    return (wavelength / (4 * np.pi)) * np.sqrt(pattern.rx_gain * pattern.cell_gain * f_out) / d_center


def ris_ue_channel_los(ris: ArraySpec, ue_points: np.ndarray, ue_center: np.ndarray,
                       pattern: RadiationPattern, wavelength: float) -> np.ndarray:
    """Unfaded LOS component of the RIS-to-user channel, shape (N_RX, P)."""
    cells = element_positions(ris)
    amp = ris_ue_amplitudes(ris, ue_points, ue_center, pattern, wavelength)
    d = np.linalg.norm(ue_points[:, None, :] - cells[None, :, :], axis=2)
    return amp * np.exp(-2j * np.pi * d / wavelength)


def ris_ue_channel(ris: ArraySpec, ue_points: np.ndarray, ue_center: np.ndarray,
                   pattern: RadiationPattern, wavelength: float, rice_factor: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Rician RIS-to-user channel and its LOS component, each (N_RX, P).

    Entry = sqrt(k/(k+1)) * LOS + sqrt(1/(k+1)) * CN(0, rho^2).  An infinite
    Rice factor returns the pure LOS matrix.
    """
    los = ris_ue_channel_los(ris, ue_points, ue_center, pattern, wavelength)
    if np.isinf(rice_factor):
        return los.copy(), los
    amp = np.abs(los)
    shape = los.shape
    fading = amp * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    k = rice_factor
    return np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * fading, los


def direct_channel_los(bs: ArraySpec, ue_points: np.ndarray, ue_center: np.ndarray,
                       pattern: RadiationPattern, wavelength: float) -> np.ndarray:
    """Unfaded LOS component of the direct BS-to-user channel, (N_RX, N_TX)."""
    bs_pts = element_positions(bs)
    d_center = float(np.linalg.norm(np.asarray(ue_center, dtype=float) - bs.reference_position))
    gamma = (wavelength / (4 * np.pi)) * np.sqrt(pattern.tx_gain * pattern.rx_gain) / d_center
    d = np.linalg.norm(ue_points[:, None, :] - bs_pts[None, :, :], axis=2)
    return gamma * np.exp(-2j * np.pi * d / wavelength)


def direct_channel(bs: ArraySpec, ue_points: np.ndarray, ue_center: np.ndarray,
                   pattern: RadiationPattern, wavelength: float, rice_factor: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Rician direct channel; the default zero Rice factor is pure NLOS."""
    los = direct_channel_los(bs, ue_points, ue_center, pattern, wavelength)
    if np.isinf(rice_factor):
        return los
    amp = np.abs(los)
    fading = amp * (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2.0)
    k = rice_factor
    return np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * fading
