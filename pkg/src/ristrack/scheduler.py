"""Two-timescale episode loop: EKF every step, RIS re-design every N_r steps.

Per step: the truth moves, channels fade, the BS rebuilds its null-space
beams, pilots fly, the filter updates, and (for beta policies) the transmit
power is re-split across RISs from the fixed-gain weights.  Every
``steps_per_ris_update`` steps the predicted uncertainty is rolled forward
into an equal-weight Gaussian mixture and every RIS profile is re-optimized
over it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ristrack.metrics import achievable_rate
from ristrack.power_alloc import (
    allocate_power,
    breve_noise_estimate,
    expand_blocks,
    fixed_kalman_gain,
    pi_saturation_power,
    pi_value,
    xi_weights,
)
from ristrack.precoding import (
    PrecoderSet,
    assemble_precoders,
    bd_beamformer,
    bd_nullspace,
    build_pilots,
    simulate_received_pilots,
)
from ristrack.ris_opt import (
    DegeneratePowerError,
    GaussianMixture,
    focus_profile,
    optimize_ris,
    sample_uncertainty,
)
from ristrack.scenario import Scenario, TimescaleConfig
from ristrack.tracker import (
    MotionModel,
    TrackState,
    build_observation,
    diffuse_phase_variance,
    ekf_update,
    jacobian,
    noise_cov_estimate,
    observation_fn,
    observation_index_sets,
    predict,
)

__all__ = [
    "EpisodeTrace",
    "Policy",
    "RisUpdateRecord",
    "TimescaleConfig",
    "bd_precoder_set",
    "build_uncertainty_gmm",
    "design_initial_profiles",
    "effective_observation_model",
    "run_episode",
    "sample_process_noise",
]


class Policy(str, Enum):
    """RIS design and power split strategy for one episode."""

    OPT = "opt"
    OPT_AO = "opt-ao"
    BETA_OPT = "beta-opt"
    BETA_OPT_AO = "beta-opt-ao"
    FOCUS = "focus"
    BETA_FOCUS = "beta-focus"
    EXTERNAL = "external-profile"

    @property
    def allocates_power(self) -> bool:
        return self in (Policy.BETA_OPT, Policy.BETA_OPT_AO, Policy.BETA_FOCUS)

    @property
    def profile_mode(self) -> str:
        if self in (Policy.OPT, Policy.BETA_OPT):
            return "OPT"
        if self in (Policy.OPT_AO, Policy.BETA_OPT_AO):
            return "OPT-AO"
        if self in (Policy.FOCUS, Policy.BETA_FOCUS):
            return "FOCUS"
        return "EXTERNAL"


@dataclass
class RisUpdateRecord:
    """Profiles and optimizer diagnostics captured at one RIS update."""

    step: int
    profiles: list[np.ndarray]
    surrogate_final: list[float]
    expected_inverse_power: list[float]


@dataclass
class EpisodeTrace:
    """Per-step record of one tracked episode."""

    true_state: np.ndarray        # (T, 6)
    est_state: np.ndarray         # (T, 6)
    cov_diag: np.ndarray          # (T, 6)
    received_power: np.ndarray    # (T, K), ||y_k||^2 / N_RX
    beta: np.ndarray              # (T, K)
    noise_block: np.ndarray       # (T, K), filter noise estimate per RIS
    rate: np.ndarray              # (T,)
    jac_true: np.ndarray          # (T, 2KZ, 6), genie linearization
    noise_diag: np.ndarray        # (T, 2KZ)
    xi: np.ndarray                # (T, K), fixed-gain sensitivity weights
    pi: np.ndarray                # (T, K), expected inverse powers
    gamma: np.ndarray             # (T, K), allocation weights
    ris_updates: list[RisUpdateRecord] = field(default_factory=list)
    diverged: bool = False
    diverged_step: int | None = None

    @property
    def n_steps(self) -> int:
        return self.true_state.shape[0]

    @property
    def position_error(self) -> np.ndarray:
        return np.linalg.norm(self.true_state[:, :3] - self.est_state[:, :3], axis=1)


def effective_observation_model(ys: list[np.ndarray], scenario: Scenario,
                                diffuse_var: np.ndarray | None = None):
    """Phase-noise-consistent shrink factors and saturating noise diagonal.

    The raw noise estimate sigma^2 (1+alpha) / (||y||^2 / N_RX) understates
    the observation noise twice over: a dark block's measured power never
    falls below the AWGN floor even when the signal is gone, and the Rician
    diffuse field adds phase noise proportional to the signal itself.  The
    per-block phase variance is therefore v = num / max(power - floor,
    0.05 floor) plus the model-predicted diffuse variance.  For a
    unit-modulus observable under Gaussian phase noise of variance v the mean
    shrinks by exp(-v/2) and the entry variance saturates as
    (1 - exp(-2 v)) / 2, so a dark block smoothly stops pulling the filter
    instead of feeding it bounded garbage at false confidence.
    """
    rf = scenario.rf
    floor = rf.noise_power_w / rf.pilot_length
    numerator = rf.noise_power_w * (1.0 + scenario.alpha)
    if scenario.use_projected_noise:
        numerator /= rf.pilot_length
    v_blocks = []
    for k, y in enumerate(ys):
        avg_power = float(np.mean(np.abs(y) ** 2))
        signal = max(avg_power - floor, 0.05 * floor)
        value = numerator / signal
        if diffuse_var is not None:
            value += min(float(diffuse_var[k]), 1e6)
        v_blocks.append(value)
    v = expand_blocks(np.asarray(v_blocks), scenario.n_pairs)
    shrink = np.exp(-v / 2.0)
    noise_diag = 0.5 * (1.0 - np.exp(-2.0 * v))
    return shrink, noise_diag


def build_uncertainty_gmm(state: TrackState, model: MotionModel,
                          n_components: int) -> GaussianMixture:
    """Equal-weight mixture of the next ``n_components`` predicted positions.

    Component q applies the transition q times to the current state and keeps
    the position marginal (first three coordinates).
    """
    if n_components < 1:
        raise ValueError("need at least one component")
    means = np.empty((n_components, 3))
    covs = np.empty((n_components, 3, 3))
    rolled = state
    for q in range(n_components):
        rolled = predict(rolled, model)
        means[q] = rolled.mean[:3]
        covs[q] = rolled.cov[:3, :3]
    return GaussianMixture(means, covs, np.full(n_components, 1.0 / n_components))


def bd_precoder_set(channels, beta: np.ndarray, power_budget: float,
                    nullspace_cache=None) -> PrecoderSet:
    """Null-space beamformers for every RIS with the given power weights.

    With a :class:`StaticNullspaceCache` only the small per-step direct-channel
    factorization is recomputed.
    """
    beams = []
    for k in range(channels.n_ris):
        if nullspace_cache is not None:
            basis = nullspace_cache.nullspace(k, channels.direct)
        else:
            basis = bd_nullspace(channels, k)
        beams.append(bd_beamformer(channels.bs_ris[k], basis))
    return assemble_precoders(beams, beta, power_budget)


def _draw_orientation(scenario: Scenario, rng: np.random.Generator) -> float:
    std = scenario.ue_template.orientation_error_std_deg
    if std == 0.0:
        return 0.0
    return float(np.deg2rad(std) * rng.standard_normal())


def _update_profiles(scenario: Scenario, policy: Policy, gmm: GaussianMixture,
                     precoders: PrecoderSet, profiles: list[np.ndarray],
                     focus_position: np.ndarray, rng: np.random.Generator,
                     external: list[np.ndarray] | None):
    """New per-RIS profiles plus the window's expected inverse powers.

    The returned pi values (Monte Carlo E{1/P0} of each fresh profile over
    the mixture) are held fixed until the next update: they belong to the
    profile and its design density, and re-estimating them against narrow
    per-step densities makes the power split oscillate violently whenever a
    beam goes stale mid-window.
    """
    mode = policy.profile_mode
    opts = scenario.optimizer
    rf = scenario.rf
    saturation = pi_saturation_power(rf.noise_power_w, scenario.alpha, rf.pilot_length,
                                     rf.pilot_power_w, scenario.n_ris,
                                     scenario.use_projected_noise)
    new_profiles: list[np.ndarray] = []
    surrogate_final: list[float] = []
    expected: list[float] = []
    window_pi = np.full(scenario.n_ris, np.nan)
    plain_samples = None
    for k in range(scenario.n_ris):
        builder = scenario.cascade_row_builder(k, precoders.beamformers[:, k])
        if mode == "EXTERNAL":
            new_profiles.append(np.asarray(external[k], dtype=complex))
            surrogate_final.append(np.nan)
            expected.append(np.nan)
        elif mode == "FOCUS":
            new_profiles.append(focus_profile(builder(focus_position)[0]).values)
            surrogate_final.append(np.nan)
            expected.append(np.nan)
        else:
            try:
                result = optimize_ris(gmm, builder, mode, profiles[k], rng,
                                      n_bcd=opts.n_bcd, n_samples=opts.n_samples,
                                      margin=opts.margin)
                new_profiles.append(result.profile.values)
                surrogate_final.append(result.surrogate_log[-1][2])
                expected.append(result.expected_inverse_power)
                window_pi[k] = pi_value(new_profiles[k], result.workspace.cascade_rows,
                                        opts.margin, saturation)
                continue
            except DegeneratePowerError:
                # uncertainty area fell behind the panel; keep the old profile
                new_profiles.append(profiles[k])
                surrogate_final.append(np.nan)
                expected.append(np.nan)
        if plain_samples is None:
            plain_samples = sample_uncertainty(gmm, opts.n_samples, rng)
        window_pi[k] = pi_value(new_profiles[k], builder(plain_samples),
                                opts.margin, saturation)
    return new_profiles, window_pi, surrogate_final, expected


def design_initial_profiles(scenario: Scenario, policy: Policy, state: TrackState,
                            precoders: PrecoderSet, rng: np.random.Generator,
                            external_profiles: list[np.ndarray] | None = None):
    """Profiles at episode start: one RIS design driven by the prior state.

    Optimizing policies start from random unit-modulus phases, the natural
    state of an unconfigured panel: it illuminates the whole area
    incoherently, which the BCD then shapes.  The surrogate's dark-sample
    weights vanish with the received power, so a focused start is a local
    optimum the iteration cannot escape; subsequent updates inherit the
    spread through the warm start.
    """
    policy = Policy(policy)
    gmm = build_uncertainty_gmm(state, scenario.motion, scenario.timescale.steps_per_ris_update)
    if policy.profile_mode in ("OPT", "OPT-AO"):
        start_profiles = [np.exp(2j * np.pi * rng.uniform(size=scenario.ris[k].n_elements))
                          for k in range(scenario.n_ris)]
    else:
        start_profiles = [focus_profile(scenario.cascade_row_builder(
            k, precoders.beamformers[:, k])(state.position)[0]).values
            for k in range(scenario.n_ris)]
    return _update_profiles(scenario, policy, gmm, precoders, start_profiles,
                            state.position, rng, external_profiles)


def run_episode(scenario: Scenario, policy: Policy | str, rng: np.random.Generator,
                external_profiles: list[np.ndarray] | None = None,
                initial_state: np.ndarray | None = None,
                motion_rng: np.random.Generator | None = None) -> EpisodeTrace:
    """Simulate one tracked trajectory and return its trace.

    The truth starts at a known state (zero initial error, covariance seeded
    with one step of process noise) and follows the same kinematic model the
    filter uses.  A track whose error exceeds the workspace diameter is marked
    diverged but the episode still runs to completion.

    ``motion_rng`` optionally drives the truth trajectory (start state,
    process noise, orientation error) from its own stream, so runs of
    different policies with a shared motion generator face identical
    trajectories and compare paired.
    """
    policy = Policy(policy)
    if policy is Policy.EXTERNAL and external_profiles is None:
        raise ValueError("external-profile policy needs externally supplied profiles")

    rf = scenario.rf
    model = scenario.motion
    ts = scenario.timescale
    n_steps = ts.n_steps
    n_ris = scenario.n_ris
    n_rx = scenario.n_rx
    n_pairs = scenario.n_pairs
    obs_len = 2 * n_ris * n_pairs
    sigma2 = rf.noise_power_w
    budget = rf.pilot_power_w
    index_sets = observation_index_sets(n_ris, n_pairs)
    pilots = build_pilots(n_ris, rf.pilot_length)
    transition = model.transition

    m_rng = motion_rng if motion_rng is not None else rng
    truth = initial_state if initial_state is not None else scenario.sample_initial_state(m_rng)
    truth = np.asarray(truth, dtype=float).copy()
    state = TrackState(truth.copy(), model.process_noise)
    beta = np.full(n_ris, np.sqrt(budget / n_ris))

    # step-0 transmission parameters from the prior
    orientation = _draw_orientation(scenario, m_rng) if scenario.orientation_error_per_episode else 0.0
    channels = scenario.channel_set(truth[:3], rng, orientation)
    precoders = bd_precoder_set(channels, beta, budget, scenario.nullspace_cache)
    profiles, window_pi, surr, expect = design_initial_profiles(
        scenario, policy, state, precoders, rng, external_profiles)

    trace = EpisodeTrace(
        true_state=np.empty((n_steps, 6)), est_state=np.empty((n_steps, 6)),
        cov_diag=np.empty((n_steps, 6)), received_power=np.empty((n_steps, n_ris)),
        beta=np.empty((n_steps, n_ris)), noise_block=np.empty((n_steps, n_ris)),
        rate=np.empty(n_steps), jac_true=np.empty((n_steps, obs_len, 6)),
        noise_diag=np.empty((n_steps, obs_len)),
        xi=np.full((n_steps, n_ris), np.nan), pi=np.full((n_steps, n_ris), np.nan),
        gamma=np.full((n_steps, n_ris), np.nan),
    )
    trace.ris_updates.append(RisUpdateRecord(0, [p.copy() for p in profiles], surr, expect))

    predicted = state  # Alg-1 style: first prediction is the prior itself
    for t in range(1, n_steps + 1):
        i = t - 1
        if t > 1:
            noise = sample_process_noise(model, m_rng)
            truth = transition @ truth + noise
            if not scenario.orientation_error_per_episode:
                orientation = _draw_orientation(scenario, m_rng)
            channels = scenario.channel_set(truth[:3], rng, orientation)
            precoders = bd_precoder_set(channels, beta, budget, scenario.nullspace_cache)

        ys = simulate_received_pilots(channels, profiles, precoders, pilots, sigma2, rng)
        observed = build_observation(ys)
        if scenario.use_effective_observation_model:
            diffuse = diffuse_phase_variance(predicted.position, scenario, profiles,
                                             precoders, rf.rice_factor_ris_ue)
            shrink, noise_diag = effective_observation_model(ys, scenario, diffuse)
        else:
            # Alg-1 verbatim filter: Eq-26-style noise estimate, no shrink
            shrink = np.ones(obs_len)
            noise_diag = noise_cov_estimate(ys, scenario.alpha, sigma2, rf.pilot_length,
                                            scenario.use_projected_noise)
        modeled = shrink * observation_fn(predicted.position, scenario, profiles, precoders)
        jac = shrink[:, None] * jacobian(predicted.position, scenario, profiles, precoders)
        state = ekf_update(predicted, observed, modeled, jac, noise_diag)

        trace.true_state[i] = truth
        trace.est_state[i] = state.mean
        trace.cov_diag[i] = np.diag(state.cov)
        trace.received_power[i] = [float(np.sum(np.abs(y) ** 2)) / n_rx for y in ys]
        trace.beta[i] = beta
        trace.noise_block[i] = noise_diag[[idx[0] for idx in index_sets]]
        trace.noise_diag[i] = noise_diag
        trace.rate[i] = achievable_rate(channels, profiles, sigma2, budget)
        trace.jac_true[i] = shrink[:, None] * jacobian(truth[:3], scenario, profiles, precoders)
        if not trace.diverged and np.linalg.norm(truth[:3] - state.position) > scenario.workspace.diameter:
            trace.diverged = True
            trace.diverged_step = t

        # time update and transmission parameters for step t + 1
        predicted = predict(state, model)
        if t % ts.steps_per_ris_update == 0:
            gmm = build_uncertainty_gmm(state, model, ts.steps_per_ris_update)
            profiles, window_pi, surr, expect = _update_profiles(
                scenario, policy, gmm, precoders, profiles, predicted.position, rng,
                external_profiles)
            trace.ris_updates.append(RisUpdateRecord(t, [p.copy() for p in profiles], surr, expect))
        if policy.allocates_power:
            beta, diag = _allocate_step_power(scenario, ys, beta, predicted,
                                              profiles, precoders, window_pi)
            trace.xi[i], trace.pi[i], trace.gamma[i] = diag
    return trace


def sample_process_noise(model: MotionModel, rng: np.random.Generator) -> np.ndarray:
    """One draw of the kinematic process noise (supports pinned axes)."""
    evals, evecs = np.linalg.eigh(model.process_noise)
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]
    return factor @ rng.standard_normal(6)


def _allocate_step_power(scenario: Scenario, ys: list[np.ndarray],
                         beta: np.ndarray, predicted: TrackState,
                         profiles: list[np.ndarray], precoders: PrecoderSet,
                         window_pi: np.ndarray):
    """Fixed-gain KKT power split for the next step (beta policies only).

    Returns the new beta and the (xi, pi, gamma) diagnostics.  Degenerate
    weights (a RIS whose whole uncertainty area is dark) fall back to the
    uniform split for that step.
    """
    rf = scenario.rf
    budget = rf.pilot_power_w
    uniform = np.full(scenario.n_ris, np.sqrt(budget / scenario.n_ris))
    index_sets = observation_index_sets(scenario.n_ris, scenario.n_pairs)
    y_norm_sq = np.array([float(np.sum(np.abs(y) ** 2)) for y in ys])
    blocks = breve_noise_estimate(y_norm_sq, beta, budget, scenario.alpha,
                                  rf.noise_power_w, scenario.n_rx, rf.pilot_length,
                                  scenario.use_projected_noise)
    breve_diag = expand_blocks(blocks, scenario.n_pairs)
    jac_next = jacobian(predicted.position, scenario, profiles, precoders)
    gain = fixed_kalman_gain(predicted.cov, jac_next, breve_diag)
    xi = xi_weights(gain, index_sets, scenario.alpha, rf.noise_power_w)
    gamma = xi * window_pi
    if np.any(~np.isfinite(gamma)) or np.any(gamma <= 0):
        return uniform, (xi, window_pi, gamma)
    floor = scenario.optimizer.power_floor_fraction
    return (allocate_power(gamma, budget, xi=xi, pi=window_pi, floor_fraction=floor).beta,
            (xi, window_pi, gamma))
