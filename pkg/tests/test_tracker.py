import numpy as np
import pytest

from ristrack.scenario import builtin_config, scenario_from_config
from ristrack.scheduler import bd_precoder_set
from ristrack.precoding import build_pilots, simulate_received_pilots
from ristrack.ris_opt import focus_profile
from ristrack.tracker import (
    MotionModel,
    NumericDegenerateError,
    TrackState,
    build_observation,
    ekf_update,
    jacobian,
    noise_cov_estimate,
    observation_fn,
    observation_index_sets,
    predict,
)


@pytest.fixture(scope="module")
def desk():
    cfg = builtin_config("desk_default")
    cfg["rf"]["rice_factor_ris_ue"] = 1e15  # effectively pure LOS for model tests
    sc = scenario_from_config(cfg)
    rng = np.random.default_rng(11)
    pos = np.array([3.5, 6.0, 1.0])
    channels = sc.channel_set(pos, rng)
    beta = np.full(sc.n_ris, np.sqrt(sc.rf.pilot_power_w / sc.n_ris))
    precoders = bd_precoder_set(channels, beta, sc.rf.pilot_power_w)
    profiles = [focus_profile(sc.cascade_row_builder(k, precoders.beamformers[:, k])(pos)[0]).values
                for k in range(sc.n_ris)]
    return sc, pos, channels, precoders, profiles


def _model(dt=0.03, accel=(0.5, 0.5, 0.0)):
    return MotionModel(dt, np.array(accel))


def test_predict_stationary():
    model = _model(accel=(0.0, 0.0, 0.0))
    state = TrackState(np.array([1.0, 2.0, 3.0, 0, 0, 0]), np.zeros((6, 6)))
    out = predict(state, model)
    np.testing.assert_allclose(out.mean, state.mean)
    np.testing.assert_allclose(out.cov, 0.0)


def test_predict_advances_position():
    model = _model()
    state = TrackState(np.array([0.0, 0, 0, 1.0, 0, 0]), np.zeros((6, 6)))
    out = predict(state, model)
    assert out.mean[0] == pytest.approx(0.03)


def test_predict_covariance_from_zero():
    model = _model()
    state = TrackState(np.zeros(6), np.zeros((6, 6)))
    out = predict(state, model)
    np.testing.assert_allclose(out.cov, model.process_noise)


def test_build_observation_equal_phases():
    y = [np.array([1.0 + 0j, 2.0 + 0j])]
    o = build_observation(y)
    np.testing.assert_allclose(o, [1.0, 0.0], atol=1e-15)


def test_build_observation_quarter_turn():
    y = [np.array([1.0 + 0j, np.exp(1j * np.pi / 2)])]
    o = build_observation(y)
    np.testing.assert_allclose(o, [0.0, 1.0], atol=1e-15)


def test_build_observation_unit_modulus():
    rng = np.random.default_rng(0)
    y = [rng.standard_normal(6) + 1j * rng.standard_normal(6)]
    o = build_observation(y)
    z = len(o) // 2
    np.testing.assert_allclose(o[:z] ** 2 + o[z:] ** 2, 1.0, atol=1e-12)


def test_build_observation_zero_sample_raises():
    with pytest.raises(NumericDegenerateError):
        build_observation([np.array([0.0 + 0j, 1.0 + 0j])])


def test_observation_invariances():
    rng = np.random.default_rng(1)
    ys = [rng.standard_normal(4) + 1j * rng.standard_normal(4) for _ in range(2)]
    o = build_observation(ys)
    rotated = [np.exp(1j * (0.9 + 0.4 * k)) * ys[k] for k in range(2)]
    np.testing.assert_allclose(build_observation(rotated), o, atol=1e-12)
    scaled = [3.7 * y for y in ys]
    np.testing.assert_allclose(build_observation(scaled), o, atol=1e-12)


def test_observation_fn_matches_measurement_noiselessly(desk):
    sc, pos, channels, precoders, profiles = desk
    pilots = build_pilots(sc.n_ris, sc.rf.pilot_length)
    ys = simulate_received_pilots(channels, profiles, precoders, pilots, 0.0,
                                  np.random.default_rng(0))
    o = build_observation(ys)
    h = observation_fn(pos, sc, profiles, precoders)
    np.testing.assert_allclose(o, h, atol=1e-9)
    z = len(h) // 2
    np.testing.assert_allclose(h[:z] ** 2 + h[z:] ** 2, 1.0, atol=1e-12)


def test_observation_far_field_plane_wave_limit():
    # single-cell RIS at long range: the phase gradient approaches the
    # analytic plane-wave value 2 pi / lam * spacing * cos(angle to array axis)
    cfg = builtin_config("desk_default")
    cfg["ris"] = [dict(cfg["ris"][0], n_rows=1, n_cols=1)]
    cfg["rf"]["rice_factor_ris_ue"] = 1e15
    sc = scenario_from_config(cfg)
    pos = np.array([900.0, 400.0, 1.0])
    rng = np.random.default_rng(3)
    channels = sc.channel_set(pos, rng)
    precoders = bd_precoder_set(channels, np.array([np.sqrt(sc.rf.pilot_power_w)]),
                                sc.rf.pilot_power_w)
    profiles = [np.ones(1, dtype=complex)]
    h = observation_fn(pos, sc, profiles, precoders)
    z = len(h) // 2
    measured_phase = np.arctan2(h[z], h[0])
    cell = sc.ris_cells(0)[0]
    direction = (pos - cell) / np.linalg.norm(pos - cell)
    spacing = sc.ue_template.spacing
    expected = 2 * np.pi / sc.wavelength * spacing * float(direction @ np.array([0, 1.0, 0]))
    expected = np.angle(np.exp(-1j * expected))  # outgoing phase convention
    assert measured_phase == pytest.approx(expected, rel=0.01)


def test_jacobian_velocity_columns_zero(desk):
    sc, pos, channels, precoders, profiles = desk
    jac = jacobian(pos, sc, profiles, precoders)
    np.testing.assert_allclose(jac[:, 3:], 0.0)


def test_jacobian_matches_finite_differences(desk):
    sc, _, channels, precoders, profiles = desk
    rng = np.random.default_rng(5)
    step = 1e-6
    worst = 0.0
    for _ in range(20):
        p = np.array([rng.uniform(2.0, 6.0), rng.uniform(4.0, 9.0), 1.0])
        jac = jacobian(p, sc, profiles, precoders)[:, :3]
        fd = np.empty_like(jac)
        for axis in range(3):
            dp = np.zeros(3)
            dp[axis] = step
            fd[:, axis] = (observation_fn(p + dp, sc, profiles, precoders)
                           - observation_fn(p - dp, sc, profiles, precoders)) / (2 * step)
        scale = np.max(np.abs(fd))
        worst = max(worst, np.max(np.abs(jac - fd)) / scale)
    assert worst < 1e-4


def test_jacobian_translation_symmetry():
    # shifting the whole geometry (UE, RISs, BS) leaves the Jacobian unchanged
    offset = [13.0, -4.0, 0.0]
    jacs = []
    for shift in ([0.0, 0.0, 0.0], offset):
        cfg = builtin_config("desk_default")
        cfg["rf"]["rice_factor_ris_ue"] = 1e15
        for section in ("bs",):
            cfg[section]["position_m"] = list(np.add(cfg[section]["position_m"], shift))
        for r in cfg["ris"]:
            r["position_m"] = list(np.add(r["position_m"], shift))
        sc = scenario_from_config(cfg)
        pos = np.array([3.5, 6.0, 1.0]) + np.asarray(shift)
        rng = np.random.default_rng(11)
        channels = sc.channel_set(pos, rng)
        beta = np.full(sc.n_ris, np.sqrt(sc.rf.pilot_power_w / sc.n_ris))
        precoders = bd_precoder_set(channels, beta, sc.rf.pilot_power_w)
        profiles = [focus_profile(sc.cascade_row_builder(k, precoders.beamformers[:, k])(pos)[0]).values
                    for k in range(sc.n_ris)]
        jacs.append(jacobian(pos, sc, profiles, precoders))
    np.testing.assert_allclose(jacs[0], jacs[1], atol=1e-6 * np.max(np.abs(jacs[0])))


def test_noise_cov_scaling_laws():
    ys = [np.array([1.0 + 0j, 1.0 + 0j, 1.0 + 0j, 1.0 + 0j])]
    base = noise_cov_estimate(ys, 0.5, 2.0, 10)
    doubled = noise_cov_estimate([2.0 * ys[0]], 0.5, 2.0, 10)
    np.testing.assert_allclose(doubled, base / 4.0)
    alpha_zero = noise_cov_estimate(ys, 0.0, 2.0, 10)
    np.testing.assert_allclose(alpha_zero, 2.0 / 1.0 * np.ones(4))
    projected = noise_cov_estimate(ys, 0.0, 2.0, 10, use_projected_noise=True)
    np.testing.assert_allclose(projected, alpha_zero / 10.0)


def test_noise_cov_block_structure():
    rng = np.random.default_rng(9)
    ys = [rng.standard_normal(4) + 1j * rng.standard_normal(4) for _ in range(3)]
    diag = noise_cov_estimate(ys, 0.5, 1.0, 4)
    sets = observation_index_sets(3, 2)
    for idx in sets:
        values = diag[idx]
        np.testing.assert_allclose(values, values[0])


def test_ekf_update_uninformative_measurement():
    prior = TrackState(np.zeros(6), np.eye(6))
    jac = np.zeros((4, 6))
    jac[:, :2] = 1.0
    post = ekf_update(prior, np.ones(4), np.zeros(4), jac, np.full(4, 1e12))
    np.testing.assert_allclose(post.mean, prior.mean, atol=1e-9)
    np.testing.assert_allclose(post.cov, prior.cov, atol=1e-9)


def test_ekf_update_identity_case():
    prior = TrackState(np.zeros(6), np.eye(6))
    post = ekf_update(prior, np.ones(6), np.zeros(6), np.eye(6), np.ones(6))
    np.testing.assert_allclose(post.mean, 0.5 * np.ones(6))
    np.testing.assert_allclose(post.cov, 0.5 * np.eye(6), atol=1e-12)


def test_ekf_update_psd_ordering():
    rng = np.random.default_rng(12)
    for _ in range(20):
        a = rng.standard_normal((6, 6))
        cov = a @ a.T + 1e-3 * np.eye(6)
        prior = TrackState(rng.standard_normal(6), cov)
        jac = rng.standard_normal((5, 6))
        noise = rng.uniform(0.1, 2.0, 5)
        post = ekf_update(prior, rng.standard_normal(5), rng.standard_normal(5), jac, noise)
        reduction = prior.cov - post.cov
        assert np.linalg.eigvalsh(reduction).min() > -1e-10
        assert np.linalg.eigvalsh(post.cov).min() > -1e-10
        np.testing.assert_allclose(post.cov, post.cov.T)
