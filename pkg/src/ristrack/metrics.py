"""Localization-error statistics, achievable rate, error bound, power maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ristrack.channel import ChannelSet
from ristrack.tracker import MotionModel

__all__ = [
    "ErrorStats",
    "PebTrace",
    "achievable_rate",
    "error_stats",
    "posterior_peb",
    "power_map",
    "waterfill",
]

# Relative eigenvalue cutoff for pseudo-inverses of pinned state directions.
PINV_RTOL = 1e-12


@dataclass(frozen=True)
class ErrorStats:
    """Pooled localization-error summary with the complementary CDF."""

    errors: np.ndarray
    mean: float
    q90: float
    q99: float
    ccdf_thresholds: np.ndarray
    ccdf: np.ndarray


def _pooled_errors(traces: Iterable) -> np.ndarray:
    chunks = []
    for item in traces:
        err = getattr(item, "position_error", item)
        chunks.append(np.asarray(err, dtype=float).ravel())
    if not chunks:
        raise ValueError("need at least one trace")
    return np.concatenate(chunks)


def error_stats(traces: Iterable) -> ErrorStats:
    """Summary statistics over per-step position errors of many episodes.

    Quantiles use the inverted-CDF convention (smallest sample with CDF >= q).
    The complementary CDF is evaluated at every distinct error value:
    ccdf(tau) = P(error > tau).
    """
    errors = _pooled_errors(traces)
    thresholds = np.unique(errors)
    counts = np.searchsorted(np.sort(errors), thresholds, side="right")
    ccdf = 1.0 - counts / errors.size
    return ErrorStats(
        errors=errors,
        mean=float(errors.mean()),
        q90=float(np.quantile(errors, 0.9, method="inverted_cdf")),
        q99=float(np.quantile(errors, 0.99, method="inverted_cdf")),
        ccdf_thresholds=thresholds,
        ccdf=ccdf,
    )


def waterfill(gains: np.ndarray, total_power: float) -> tuple[np.ndarray, float]:
    """Waterfilling over channels with SNR-per-watt ``gains``.

    Maximizes sum log2(1 + p_i g_i) under sum p_i = total_power, p_i >= 0.
    Returns the per-channel powers and the water level.
    """
    gains = np.asarray(gains, dtype=float)
    active = np.flatnonzero(gains > 0)
    if active.size == 0 or total_power <= 0:
        return np.zeros_like(gains), 0.0
    order = active[np.argsort(gains[active])[::-1]]
    inv = 1.0 / gains[order]
    level = 0.0
    n_active = 0
    for m in range(order.size, 0, -1):
        level = (total_power + inv[:m].sum()) / m
        if level > inv[m - 1]:
            n_active = m
            break
    powers = np.zeros_like(gains)
    powers[order[:n_active]] = level - inv[:n_active]
    return powers, level


def achievable_rate(channels: ChannelSet, ris_profiles: Sequence[np.ndarray],
                    noise_power_w: float, total_power_w: float) -> float:
    """Shannon rate (bits/s/Hz) of the equivalent RIS-cascade MIMO channel.

    The equivalent matrix is sum_k B_k diag(c_k) G_k; capacity follows from
    its singular values by waterfilling the transmit power.
    """
    h_eq = np.zeros((channels.ris_ue[0].shape[0], channels.bs_ris[0].shape[1]), dtype=complex)
    for k in range(channels.n_ris):
        h_eq += (channels.ris_ue[k] * np.asarray(ris_profiles[k])[None, :]) @ channels.bs_ris[k]
    sv = np.linalg.svd(h_eq, compute_uv=False)
    gains = sv ** 2 / noise_power_w
    powers, _ = waterfill(gains, total_power_w)
    return float(np.sum(np.log2(1.0 + powers * gains)))


@dataclass(frozen=True)
class PebTrace:
    """Posterior position-error-bound recursion output."""

    peb: np.ndarray        # (T,)
    posterior_cov: np.ndarray  # (T, 6, 6)

    def fisher_information(self, t: int) -> np.ndarray:
        """Posterior information at step t (pseudo-inverse on pinned axes)."""
        return np.linalg.pinv(self.posterior_cov[t], rcond=PINV_RTOL, hermitian=True)


def posterior_peb(jacobians: np.ndarray, noise_diags: np.ndarray,
                  model: MotionModel, initial_cov: np.ndarray | None = None) -> PebTrace:
    """Posterior error-bound recursion along one episode.

    Runs the linear-Gaussian covariance recursion with the genie Jacobians:
    predict with (T, P), then condition on the step's observation.  This is
    algebraically the information recursion
    Phi_{t+1} = (P + T Phi_t^-1 T^T)^-1 + J^T R^-1 J with pseudo-inverses on
    the pinned (zero process noise) directions, but stays well defined when
    the covariance is singular.  The bound starts from the filter's own
    initialization (one step of process noise) for an apples-to-apples
    comparison with the tracking RMSE.
    """
    jacobians = np.asarray(jacobians, dtype=float)
    noise_diags = np.asarray(noise_diags, dtype=float)
    n_steps = jacobians.shape[0]
    transition = model.transition
    process = model.process_noise
    cov = process.copy() if initial_cov is None else np.asarray(initial_cov, dtype=float).copy()
    peb = np.empty(n_steps)
    post = np.empty((n_steps, 6, 6))
    for t in range(n_steps):
        if t > 0:
            cov = transition @ cov @ transition.T + process
        jac = jacobians[t]
        s = jac @ cov @ jac.T + np.diag(noise_diags[t])
        gain = np.linalg.solve(s, jac @ cov).T
        cov = cov - gain @ s @ gain.T
        cov = (cov + cov.T) / 2.0
        post[t] = cov
        peb[t] = np.sqrt(max(np.trace(cov[:3, :3]), 0.0))
    return PebTrace(peb, post)


def power_map(scenario, ris_profiles: Sequence[np.ndarray], precoders,
              x: np.ndarray, y: np.ndarray, beta: np.ndarray | None = None) -> np.ndarray:
    """Total reflected power (watts) on an (x, y) grid at the user height.

    Entry [i, j] is sum_k beta_k^2 * P0_k([x_i, y_j, z], c_k), the unit-power
    cascaded power of each RIS scaled by its power weight.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if beta is None:
        beta = precoders.beta
    xx, yy = np.meshgrid(x, y, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel(),
                              np.full(xx.size, scenario.ue_height_m)])
    total = np.zeros(points.shape[0])
    for k in range(scenario.n_ris):
        rows = scenario.cascade_row_builder(k, precoders.beamformers[:, k])(points)
        total += beta[k] ** 2 * np.abs(rows @ np.asarray(ris_profiles[k])) ** 2
    return total.reshape(x.size, y.size)
