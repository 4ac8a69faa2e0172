"""Per-step transmit power splitting across RISs.

The split minimizes sum_k gamma_k / beta_k^2 under sum_k beta_k^2 = P_tx,
where gamma_k combines a fixed-gain sensitivity weight xi_k (how much the
filter listens to RIS k) with the expected inverse power pi_k over the
position uncertainty.  The optimum is closed form from the KKT conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ristrack.ris_opt import DELTA_MARGIN, mean_inverse_power, received_power

__all__ = [
    "AllocationResult",
    "allocate_power",
    "breve_noise_estimate",
    "expand_blocks",
    "fixed_kalman_gain",
    "pi_saturation_power",
    "pi_value",
    "xi_weights",
]


@dataclass(frozen=True)
class AllocationResult:
    """Optimal sqrt-watt weights with the multiplier and diagnostics."""

    beta: np.ndarray
    lagrange_multiplier: float
    xi: np.ndarray
    pi: np.ndarray
    gamma: np.ndarray


def breve_noise_estimate(y_norm_sq: np.ndarray, beta_prev: np.ndarray,
                         power_budget: float, alpha: float, noise_power_w: float,
                         n_rx: int, pilot_length: int,
                         use_projected_noise: bool = False) -> np.ndarray:
    """Per-RIS noise-estimate block values normalized to an equal power split.

    Value for RIS k: (beta_k^2 / (P_tx / K)) * sigma^2 (1+alpha) / (||y_k||^2 / N_RX),
    which removes the previous allocation from the measured powers.
    """
    y_norm_sq = np.asarray(y_norm_sq, dtype=float)
    beta_prev = np.asarray(beta_prev, dtype=float)
    if np.any(beta_prev == 0.0):
        raise ValueError("previous beta must be nonzero")
    if np.any(y_norm_sq <= 0.0):
        raise ValueError("zero received power; noise estimate undefined")
    n_ris = beta_prev.shape[0]
    numerator = noise_power_w * (1.0 + alpha)
    if use_projected_noise:
        numerator /= pilot_length
    equal_share = power_budget / n_ris
    return (beta_prev ** 2 / equal_share) * numerator / (y_norm_sq / n_rx)


def expand_blocks(block_values: np.ndarray, n_pairs: int) -> np.ndarray:
    """Expand per-RIS block values to the full observation diagonal."""
    half = np.repeat(np.asarray(block_values, dtype=float), n_pairs)
    return np.concatenate([half, half])


def fixed_kalman_gain(cov_pred: np.ndarray, jac: np.ndarray,
                      noise_diag: np.ndarray) -> np.ndarray:
    """Gain Sigma J^T (J Sigma J^T + R)^-1 with a frozen noise estimate."""
    s = jac @ cov_pred @ jac.T + np.diag(noise_diag)
    return np.linalg.solve(s, jac @ cov_pred).T


def xi_weights(gain: np.ndarray, index_sets: list[np.ndarray], alpha: float,
               noise_power_w: float) -> np.ndarray:
    """Sensitivity weight per RIS: sigma^2 (1+alpha) * sum of its column norms^2."""
    col_norms_sq = np.sum(gain ** 2, axis=0)
    return np.array([noise_power_w * (1.0 + alpha) * float(col_norms_sq[idx].sum())
                     for idx in index_sets])


def pi_value(profile: np.ndarray, cascade_rows: np.ndarray,
             margin: float = DELTA_MARGIN, saturation: float = 0.0) -> float:
    """Expected inverse received power of one RIS over density samples.

    ``saturation`` floors each sampled power before inversion.  The inverse
    power enters the cost as the observation-noise variance of a normalized
    phase gradient, which physically saturates near 1/2 once the signal drops
    below the noise; without the floor a single dark sample in the tail of
    the density dominates the Monte Carlo mean and the power split collapses
    onto whichever RIS has the darkest corner.  Zero-power samples are
    otherwise floored at min-positive / margin, matching the optimizer.
    """
    powers = received_power(profile, cascade_rows)
    if saturation > 0.0:
        return float(np.mean(1.0 / np.maximum(powers, saturation)))
    return mean_inverse_power(powers, margin)


def pi_saturation_power(noise_power_w: float, alpha: float, pilot_length: int,
                        power_budget: float, n_ris: int,
                        use_projected_noise: bool = False) -> float:
    """Unit-power received power at which the noise model saturates.

    Solves sigma_model^2 / (beta_nom^2 P0) = 1/2 for P0 at the nominal equal
    power split: below this the linearized variance of a unit-modulus phase
    gradient is no longer meaningful.
    """
    numerator = noise_power_w * (1.0 + alpha)
    if use_projected_noise:
        numerator /= pilot_length
    return 2.0 * numerator * n_ris / power_budget


def allocate_power(gamma: np.ndarray, power_budget: float,
                   xi: np.ndarray | None = None, pi: np.ndarray | None = None,
                   floor_fraction: float = 0.0) -> AllocationResult:
    """Closed-form KKT allocation: beta_k^2 = sqrt(gamma_k) P_tx / sum sqrt(gamma).

    The budget constraint holds with equality.  ``floor_fraction`` optionally
    lower-bounds each share at that fraction of the equal split
    (beta_k^2 >= floor_fraction * P_tx / K): it keeps a low-weight RIS from
    being starved below the SNR where its phase observations stop carrying
    information, a regime the linearized cost cannot see.  Floored shares are
    clipped and the closed form re-solved exactly on the rest.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0.0) or not np.all(np.isfinite(gamma)):
        raise ValueError("gamma weights must be positive and finite")
    n_ris = gamma.shape[0]
    roots = np.sqrt(gamma)
    floor = floor_fraction * power_budget / n_ris
    if floor * n_ris > power_budget * (1 + 1e-12):
        raise ValueError("floor_fraction leaves no feasible allocation")
    clipped = np.zeros(n_ris, dtype=bool)
    beta_sq = np.empty(n_ris)
    while True:
        free = ~clipped
        remaining = power_budget - floor * clipped.sum()
        beta_sq[free] = roots[free] * remaining / roots[free].sum()
        beta_sq[clipped] = floor
        newly = free & (beta_sq < floor * (1 - 1e-12))
        if not newly.any():
            break
        clipped |= newly
        if clipped.all():
            beta_sq[:] = power_budget / n_ris
            break
    multiplier = float(roots.sum() ** 2 / power_budget ** 2)
    return AllocationResult(
        beta=np.sqrt(beta_sq),
        lagrange_multiplier=multiplier,
        xi=np.asarray(xi, dtype=float) if xi is not None else np.full(n_ris, np.nan),
        pi=np.asarray(pi, dtype=float) if pi is not None else np.full(n_ris, np.nan),
        gamma=gamma,
    )
