"""State-space model, phase-gradient observations, and the EKF recursion.

Observations are products of normalized pilot returns at adjacent user
antennas, ybar[2r+1] * conj(ybar[2r]), stacked real parts first and imaginary
parts second.  They are immune to received power and to any common phase
(clock offset) per RIS, so the filter consumes wavefront shape only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ristrack.channel import ris_ue_channel_los

if TYPE_CHECKING:  # pragma: no cover
    from ristrack.precoding import PrecoderSet
    from ristrack.scenario import Scenario

__all__ = [
    "MotionModel",
    "NumericDegenerateError",
    "Observation",
    "SingularInnovationError",
    "TrackState",
    "build_observation",
    "diffuse_phase_variance",
    "ekf_update",
    "jacobian",
    "noise_cov_estimate",
    "observation_fn",
    "observation_index_sets",
    "predict",
]


class NumericDegenerateError(RuntimeError):
    """A normalization or noise estimate hit a zero-magnitude signal."""


class SingularInnovationError(RuntimeError):
    """Innovation covariance could not be inverted."""


@dataclass(frozen=True)
class MotionModel:
    """Second-order kinematic model on state [position, velocity].

    ``transition`` is the block matrix [[I, dt I], [0, I]]; ``process_noise``
    the matching white-acceleration covariance with per-axis acceleration
    variances (m^2/s^3).  A zero variance pins that axis.
    """

    dt: float
    accel_var: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        av = np.asarray(self.accel_var, dtype=float)
        if av.shape != (3,) or np.any(av < 0):
            raise ValueError("accel_var must be three non-negative variances")
        object.__setattr__(self, "accel_var", av)

    @property
    def transition(self) -> np.ndarray:
        t = np.eye(6)
        t[:3, 3:] = self.dt * np.eye(3)
        return t

    @property
    def process_noise(self) -> np.ndarray:
        pa = np.diag(self.accel_var)
        dt = self.dt
        top = np.hstack([dt ** 3 / 3.0 * pa, dt ** 2 / 2.0 * pa])
        bot = np.hstack([dt ** 2 / 2.0 * pa, dt * pa])
        return np.vstack([top, bot])


@dataclass
class TrackState:
    """Gaussian track state: mean [x, y, z, vx, vy, vz] and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.mean.shape != (6,) or self.cov.shape != (6, 6):
            raise ValueError("state is a 6-vector with a 6x6 covariance")

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]


@dataclass
class Observation:
    """Measured phase-gradient vector with its block noise estimate."""

    values: np.ndarray           # (2*K*Z,)
    index_sets: list[np.ndarray]  # per RIS, indices into values
    noise_diag: np.ndarray       # (2*K*Z,) diagonal of R


def predict(state: TrackState, model: MotionModel) -> TrackState:
    """Time update: propagate mean and covariance one step."""
    t = model.transition
    return TrackState(t @ state.mean, t @ state.cov @ t.T + model.process_noise)


def observation_index_sets(n_ris: int, n_pairs: int) -> list[np.ndarray]:
    """Indices of observation entries belonging to each RIS (real and imag)."""
    total = n_ris * n_pairs
    return [np.concatenate([np.arange(k * n_pairs, (k + 1) * n_pairs),
                            total + np.arange(k * n_pairs, (k + 1) * n_pairs)])
            for k in range(n_ris)]


def _phase_gradients(samples: np.ndarray) -> np.ndarray:
    """Unit-modulus products ybar[2r+1] * conj(ybar[2r]) for disjoint pairs."""
    mags = np.abs(samples)
    if np.any(mags == 0.0):
        raise NumericDegenerateError("zero-magnitude sample cannot be normalized")
    ybar = samples / mags
    n_pairs = samples.shape[0] // 2
    return ybar[1: 2 * n_pairs: 2] * ybar[0: 2 * n_pairs: 2].conj()


def build_observation(ys: list[np.ndarray]) -> np.ndarray:
    """Observation vector from the per-RIS pilot projections.

    Layout: [Re(rho_1), ..., Re(rho_K), Im(rho_1), ..., Im(rho_K)].
    """
    rhos = [_phase_gradients(y) for y in ys]
    return np.concatenate([np.concatenate([r.real for r in rhos]),
                           np.concatenate([r.imag for r in rhos])])


def noise_cov_estimate(ys: list[np.ndarray], alpha: float, noise_power_w: float,
                       pilot_length: int, use_projected_noise: bool = False) -> np.ndarray:
    """Diagonal of the observation-noise estimate, one value per RIS block.

    Block value: sigma^2 (1 + alpha) / (||y_k||^2 / N_RX).  With
    ``use_projected_noise`` the numerator uses the post-correlation AWGN floor
    sigma^2 / L instead of the raw sigma^2.
    """
    n_rx = ys[0].shape[0]
    n_pairs = n_rx // 2
    numerator = noise_power_w * (1.0 + alpha)
    if use_projected_noise:
        numerator /= pilot_length
    blocks = []
    for y in ys:
        avg_power = float(np.sum(np.abs(y) ** 2)) / n_rx
        if avg_power == 0.0:
            raise NumericDegenerateError("zero received power; noise estimate undefined")
        blocks.append(numerator / avg_power)
    half = np.repeat(np.asarray(blocks), n_pairs)
    return np.concatenate([half, half])


def _ris_cascade(position: np.ndarray, scenario: "Scenario", profile: np.ndarray,
                 beam: np.ndarray, k: int):
    """Noiseless LOS pilot return per user antenna and its per-cell terms.

    Returns (a, weights, unit_delta, dist): a[r] is the cascaded sample at
    antenna r, weights[r, p] its per-cell summand, unit_delta[r, p, :] the
    unit vector from cell p to antenna r (the range gradient), dist[r, p]
    the separation.
    """
    ue_pts = scenario.ue_points_at(position)
    ris = scenario.ris[k]
    b_los = ris_ue_channel_los(ris, ue_pts, position, scenario.pattern, scenario.wavelength)
    incident = scenario.bs_ris_cached(k) @ beam
    weights = b_los * (profile * incident)[None, :]
    delta = ue_pts[:, None, :] - scenario.ris_cells(k)[None, :, :]
    dist = np.linalg.norm(delta, axis=2)
    return weights.sum(axis=1), weights, delta / dist[:, :, None], dist


def observation_fn(position: np.ndarray, scenario: "Scenario",
                   ris_profiles: list[np.ndarray], precoders: "PrecoderSet") -> np.ndarray:
    """Model observation: phase gradients of the noiseless LOS cascade.

    A RIS whose cascade vanishes at this position (the point is behind its
    panel) contributes zero entries; the matching Jacobian rows are zero as
    well, so the filter simply ignores that block.
    """
    rhos = []
    for k in range(len(scenario.ris)):
        a, _, _, _ = _ris_cascade(position, scenario, ris_profiles[k], precoders.column(k), k)
        if np.any(np.abs(a) == 0.0):
            rhos.append(np.zeros(a.shape[0] // 2, dtype=complex))
        else:
            rhos.append(_phase_gradients(a))
    return np.concatenate([np.concatenate([r.real for r in rhos]),
                           np.concatenate([r.imag for r in rhos])])


def diffuse_phase_variance(position: np.ndarray, scenario: "Scenario",
                           ris_profiles: list[np.ndarray], precoders: "PrecoderSet",
                           rice_factor: float) -> np.ndarray:
    """Per-RIS phase-gradient variance caused by the Rician diffuse field.

    The scattered component carries 1/kappa of the coherent power times the
    inverse beamforming coherence sum|w_p|^2 / |sum w_p|^2, and unlike AWGN it
    does not shrink with transmit power or pilot length.  Returns one value
    per RIS (the per-pair variance, two antennas' worth); infinite Rice factor
    gives zeros.
    """
    n_ris = len(scenario.ris)
    if np.isinf(rice_factor):
        return np.zeros(n_ris)
    out = np.empty(n_ris)
    for k in range(n_ris):
        a, weights, _, _ = _ris_cascade(position, scenario, ris_profiles[k],
                                        precoders.column(k), k)
        power = np.abs(a) ** 2
        if np.any(power == 0.0):
            out[k] = np.inf
            continue
        per_antenna = np.sum(np.abs(weights) ** 2, axis=1) / power
        out[k] = 2.0 * float(np.mean(per_antenna)) / rice_factor
    return out


def jacobian(position: np.ndarray, scenario: "Scenario", ris_profiles: list[np.ndarray],
             precoders: "PrecoderSet") -> np.ndarray:
    """Jacobian of the observation function w.r.t. the state, (2KZ, 6).

    Each antenna phase derivative is d psi_r = Im{ d a_r / a_r } with the
    full per-cell derivative: the wavefront term -j 2 pi / lam grad d and the
    unit-cell pattern term (q/2) grad ln cos(angle).  Observation entries are
    products of adjacent-antenna phasors, so their position sensitivity is a
    difference of nearly equal per-antenna derivatives; dropping the pattern
    term leaves relative errors well above 1e-4 after that cancellation.
    Common per-antenna amplitude factors (the 1/d_center spreading law) have
    exactly no phase effect and are omitted.  Velocity columns are
    identically zero: the observation depends on position only.
    """
    wavenumber = 2 * np.pi / scenario.wavelength
    n_ris = len(scenario.ris)
    q_half = scenario.pattern.exponent / 2.0
    re_rows, im_rows = [], []
    for k in range(n_ris):
        a, weights, grad_d, dist = _ris_cascade(position, scenario, ris_profiles[k],
                                                precoders.column(k), k)
        n_pairs = a.shape[0] // 2
        if np.any(np.abs(a) == 0.0):
            re_rows.append(np.zeros((n_pairs, 3)))
            im_rows.append(np.zeros((n_pairs, 3)))
            continue
        normal = scenario.ris[k].normal
        cos_out = grad_d @ normal  # (N_RX, P)
        safe = np.where(cos_out > 0, cos_out, 1.0)
        pattern_grad = q_half * (normal[None, None, :] - cos_out[:, :, None] * grad_d) \
            / (safe * dist)[:, :, None]
        pattern_grad = np.where(cos_out[:, :, None] > 0, pattern_grad, 0.0)
        deriv = np.einsum("rp,rpc->rc", weights,
                          pattern_grad - 1j * wavenumber * grad_d)
        dpsi = np.imag(deriv / a[:, None])  # (N_RX, 3)
        rho = (a[1: 2 * n_pairs: 2] / np.abs(a[1: 2 * n_pairs: 2])) * \
              (a[0: 2 * n_pairs: 2] / np.abs(a[0: 2 * n_pairs: 2])).conj()
        gradient = dpsi[1: 2 * n_pairs: 2] - dpsi[0: 2 * n_pairs: 2]  # (Z, 3)
        re_rows.append(-rho.imag[:, None] * gradient)
        im_rows.append(rho.real[:, None] * gradient)
    pos_block = np.vstack(re_rows + im_rows)
    return np.hstack([pos_block, np.zeros_like(pos_block)])


def ekf_update(prior: TrackState, observed: np.ndarray, modeled: np.ndarray,
               jac: np.ndarray, noise_diag: np.ndarray) -> TrackState:
    """Measurement update; posterior covariance is re-symmetrized.

    Raises:
        SingularInnovationError: if the innovation covariance is singular.
    """
    innovation = observed - modeled
    s = jac @ prior.cov @ jac.T + np.diag(noise_diag)
    try:
        gain = np.linalg.solve(s, jac @ prior.cov).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc
    mean = prior.mean + gain @ innovation
    cov = prior.cov - gain @ s @ gain.T
    return TrackState(mean, (cov + cov.T) / 2.0)
