"""Static scenario description and derived model services.

A Scenario bundles the RF configuration, the BS / RIS / user arrays, the
motion model, tracking options, and the two-timescale settings.  It caches
everything that does not depend on the user position (BS-RIS channels, cell
positions) and exposes the cascade-row builder used by the RIS optimizer and
the power allocator.

Configuration files are JSON with units spelled out in the key names
(``carrier_ghz``, ``dt_s``, ...) because the mix of dBm, milliwatts, and
meters is the chief source of unit bugs in this kind of simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ristrack.channel import (
    SPEED_OF_LIGHT,
    ChannelSet,
    RfConfig,
    bs_ris_channel,
    direct_channel,
    ris_ue_channel,
)
from ristrack.geometry import ArraySpec, RadiationPattern, element_positions, local_cos_angle, rotate_about_z
from ristrack.tracker import MotionModel

__all__ = [
    "ConfigError",
    "OptimizerConfig",
    "Scenario",
    "TimescaleConfig",
    "WorkspaceConfig",
    "load_scenario_config",
    "scenario_from_config",
    "builtin_config",
]


class ConfigError(ValueError):
    """Configuration failed validation; the message lists every violation."""


@dataclass(frozen=True)
class TimescaleConfig:
    """Tracking step, RIS-update cadence, and episode length."""

    dt_s: float
    steps_per_ris_update: int
    duration_s: float

    def __post_init__(self) -> None:
        if self.dt_s <= 0:
            raise ValueError("dt_s must be > 0")
        if self.steps_per_ris_update < 1:
            raise ValueError("steps_per_ris_update must be >= 1")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))

    @property
    def ris_update_period_s(self) -> float:
        return self.steps_per_ris_update * self.dt_s


@dataclass(frozen=True)
class OptimizerConfig:
    """Budgets for the BCD profile optimizer and the power allocator."""

    n_bcd: int = 15
    n_samples: int = 500
    pi_samples: int = 256
    margin: float = 100.0
    power_floor_fraction: float = 0.25


@dataclass(frozen=True)
class WorkspaceConfig:
    """Range of motion and episode initialization."""

    x_range_m: tuple[float, float]
    y_range_m: tuple[float, float]
    initial_speed_mps: float = 1.0
    fixed_start_position_m: tuple[float, float, float] | None = None
    fixed_start_velocity_mps: tuple[float, float, float] | None = None

    @property
    def diameter(self) -> float:
        dx = self.x_range_m[1] - self.x_range_m[0]
        dy = self.y_range_m[1] - self.y_range_m[0]
        return float(np.hypot(dx, dy))


@dataclass
class Scenario:
    """Full static description of one simulation setup."""

    name: str
    rf: RfConfig
    pattern: RadiationPattern
    bs: ArraySpec
    ue_template: ArraySpec  # referenced at the origin; moved per position
    ue_height_m: float
    ris: list[ArraySpec]
    motion: MotionModel
    alpha: float
    use_projected_noise: bool
    use_effective_observation_model: bool
    workspace: WorkspaceConfig
    timescale: TimescaleConfig
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    orientation_error_per_episode: bool = False
    config: dict | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # -- geometry services -------------------------------------------------

    @property
    def wavelength(self) -> float:
        return self.rf.wavelength

    @property
    def n_ris(self) -> int:
        return len(self.ris)

    @property
    def n_rx(self) -> int:
        return self.ue_template.n_elements

    @property
    def n_pairs(self) -> int:
        return self.n_rx // 2

    @property
    def ue_offsets(self) -> np.ndarray:
        if "ue_offsets" not in self._cache:
            self._cache["ue_offsets"] = element_positions(self.ue_template)
        return self._cache["ue_offsets"]

    def ue_points_at(self, position: np.ndarray, orientation_rad: float = 0.0) -> np.ndarray:
        """User antenna positions for array center ``position``."""
        offsets = self.ue_offsets
        if orientation_rad != 0.0:
            offsets = rotate_about_z(offsets, np.zeros(3), orientation_rad)
        return np.asarray(position, dtype=float)[None, :] + offsets

    def ris_cells(self, k: int) -> np.ndarray:
        key = ("cells", k)
        if key not in self._cache:
            self._cache[key] = element_positions(self.ris[k])
        return self._cache[key]

    def bs_ris_cached(self, k: int) -> np.ndarray:
        """Deterministic BS-to-RIS channel matrix (position independent)."""
        key = ("bs_ris", k)
        if key not in self._cache:
            self._cache[key] = bs_ris_channel(self.bs, self.ris[k], self.pattern, self.wavelength)
        return self._cache[key]

    @property
    def nullspace_cache(self):
        """Factorized static interference stacks for fast per-step BD."""
        if "nullspace" not in self._cache:
            from ristrack.precoding import StaticNullspaceCache
            self._cache["nullspace"] = StaticNullspaceCache(
                [self.bs_ris_cached(k) for k in range(self.n_ris)])
        return self._cache["nullspace"]

    # -- channel realization -----------------------------------------------

    def channel_set(self, ue_position: np.ndarray, rng: np.random.Generator,
                    orientation_rad: float = 0.0) -> ChannelSet:
        """Draw one fading realization of every hop at the given position."""
        ue_pts = self.ue_points_at(ue_position, orientation_rad)
        ris_ue, ris_ue_los = [], []
        for k in range(self.n_ris):
            b, b_los = ris_ue_channel(self.ris[k], ue_pts, ue_position, self.pattern,
                                      self.wavelength, self.rf.rice_factor_ris_ue, rng)
            ris_ue.append(b)
            ris_ue_los.append(b_los)
        h = direct_channel(self.bs, ue_pts, ue_position, self.pattern, self.wavelength,
                           self.rf.rice_factor_direct, rng)
        return ChannelSet(direct=h, bs_ris=[self.bs_ris_cached(k) for k in range(self.n_ris)],
                          ris_ue=ris_ue, ris_ue_los=ris_ue_los)

    # -- optimizer support ---------------------------------------------------

    def cascade_row_builder(self, k: int, beam: np.ndarray):
        """Rows htilde(p) = b_first_antenna(p) diag(G_k beam) for sample batches.

        The returned callable maps positions (n, 3) to complex rows (n, P)
        built from the unfaded line-of-sight hop at the first user antenna.
        """
        incident = self.bs_ris_cached(k) @ np.asarray(beam)
        cells = self.ris_cells(k)
        normal = self.ris[k].normal
        ris_center = self.ris[k].reference_position
        lam = self.wavelength
        q = self.pattern.exponent
        gain = self.pattern.rx_gain * self.pattern.cell_gain
        antenna_offset = self.ue_offsets[0]

        def rows(positions: np.ndarray) -> np.ndarray:
            positions = np.atleast_2d(np.asarray(positions, dtype=float))
            antenna = positions + antenna_offset[None, :]
            delta = antenna[:, None, :] - cells[None, :, :]
            dist = np.linalg.norm(delta, axis=2)
            cos_out = local_cos_angle(cells[None, :, :], antenna[:, None, :], normal)
            pattern_out = np.where(cos_out > 0, cos_out, 0.0) ** q
            d_center = np.linalg.norm(positions - ris_center[None, :], axis=1)
            amp = (lam / (4 * np.pi)) * np.sqrt(gain * pattern_out) / d_center[:, None]
            return amp * np.exp(-2j * np.pi * dist / lam) * incident[None, :]

        return rows

    # -- episode initialization ----------------------------------------------

    def sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        """Initial state: random position in the range of motion, fixed speed.

        Honors a fixed start when the workspace config pins one.
        """
        ws = self.workspace
        if ws.fixed_start_position_m is not None:
            pos = np.asarray(ws.fixed_start_position_m, dtype=float)
            vel = np.asarray(ws.fixed_start_velocity_mps or (0.0, 0.0, 0.0), dtype=float)
            return np.concatenate([pos, vel])
        x = rng.uniform(*ws.x_range_m)
        y = rng.uniform(*ws.y_range_m)
        heading = rng.uniform(0.0, 2 * np.pi)
        speed = ws.initial_speed_mps
        return np.array([x, y, self.ue_height_m,
                         speed * np.cos(heading), speed * np.sin(heading), 0.0])


# -- configuration loading ---------------------------------------------------

_WAVELENGTH_KEYS = "spacing_wavelengths"


def _array_from_config(cfg: dict, wavelength: float, errors: list[str], where: str,
                       position: np.ndarray | None = None) -> ArraySpec | None:
    try:
        spacing = cfg.get(_WAVELENGTH_KEYS, 0.5) * wavelength
        n_rows, n_cols = int(cfg["n_rows"]), int(cfg["n_cols"])
        kind = "ULA" if min(n_rows, n_cols) == 1 else "URA"
        return ArraySpec(
            kind=kind, n_rows=n_rows, n_cols=n_cols, spacing=spacing,
            reference_position=np.asarray(position if position is not None
                                          else cfg["position_m"], dtype=float),
            axis_h=np.asarray(cfg["axis_h"], dtype=float),
            axis_v=np.asarray(cfg["axis_v"], dtype=float),
            orientation_error_std_deg=float(cfg.get("orientation_error_std_deg", 0.0)),
        )
    except KeyError as exc:
        errors.append(f"{where}: missing key {exc}")
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
    return None


def load_scenario_config(path: str) -> dict:
    """Read and parse a JSON scenario file."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def builtin_config(name: str) -> dict:
    """Load one of the bundled scenario presets by name."""
    ref = resources.files("ristrack").joinpath(f"configs/{name}.json")
    with ref.open("r", encoding="utf-8") as handle:
        return json.load(handle)


def scenario_from_config(cfg: dict, overrides: dict | None = None) -> Scenario:
    """Build and validate a Scenario; collects every violation before failing.

    ``overrides`` maps dotted keys ("timescale.dt_s") to replacement values.
    """
    cfg = json.loads(json.dumps(cfg))  # deep copy; keeps the manifest honest
    for dotted, value in (overrides or {}).items():
        node = cfg
        *parents, last = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[last] = value

    errors: list[str] = []

    def need(section: str, key: str, default=None):
        sec = cfg.get(section)
        if sec is None:
            errors.append(f"missing section {section!r}")
            return default
        if key not in sec:
            if default is None:
                errors.append(f"{section}.{key}: missing required key")
            return default
        return sec[key]

    carrier_ghz = need("rf", "carrier_ghz", 28.0)
    rf = None
    try:
        rf = RfConfig(
            carrier_hz=float(carrier_ghz) * 1e9,
            bandwidth_hz=float(need("rf", "subcarrier_bandwidth_khz", 120.0)) * 1e3,
            noise_density_dbm_hz=float(need("rf", "noise_density_dbm_hz", -174.0)),
            noise_figure_db=float(need("rf", "noise_figure_db", 7.0)),
            pilot_power_w=float(need("rf", "pilot_power_mw", 0.06)) * 1e-3,
            pilot_length=int(need("rf", "pilot_length_symbols", 100)),
            rice_factor_ris_ue=float(need("rf", "rice_factor_ris_ue", 5.0)),
            rice_factor_direct=float(need("rf", "rice_factor_direct", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"rf: {exc}")

    pat_cfg = cfg.get("pattern", {})
    pattern = None
    try:
        pattern = RadiationPattern(
            exponent=float(pat_cfg.get("exponent", 1.0)),
            cell_gain=float(pat_cfg.get("cell_gain", 1.0)),
            tx_gain=float(pat_cfg.get("bs_element_gain", 1.0)),
            rx_gain=float(pat_cfg.get("ue_element_gain", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"pattern: {exc}")

    wavelength = SPEED_OF_LIGHT / (float(carrier_ghz) * 1e9)
    bs = ue = None
    if "bs" in cfg:
        bs = _array_from_config(cfg["bs"], wavelength, errors, "bs")
    else:
        errors.append("missing section 'bs'")
    if "ue" in cfg:
        ue = _array_from_config(cfg["ue"], wavelength, errors, "ue", position=np.zeros(3))
    else:
        errors.append("missing section 'ue'")
    ris_list: list[ArraySpec] = []
    for i, rcfg in enumerate(cfg.get("ris", [])):
        spec = _array_from_config(rcfg, wavelength, errors, f"ris[{i}]")
        if spec is not None:
            ris_list.append(spec)
    if not cfg.get("ris"):
        errors.append("at least one RIS is required")

    ts = None
    try:
        ts = TimescaleConfig(
            dt_s=float(need("timescale", "dt_s", 0.03)),
            steps_per_ris_update=int(need("timescale", "steps_per_ris_update", 100)),
            duration_s=float(need("timescale", "duration_s", 4.0)),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"timescale: {exc}")

    motion = None
    mcfg = cfg.get("motion", {})
    try:
        motion = MotionModel(
            dt=ts.dt_s if ts else 0.03,
            accel_var=np.array([float(mcfg.get("accel_var_x_m2s3", 0.5)),
                                float(mcfg.get("accel_var_y_m2s3", 0.5)),
                                float(mcfg.get("accel_var_z_m2s3", 0.0))]),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"motion: {exc}")

    tcfg = cfg.get("tracking", {})
    alpha = float(tcfg.get("alpha", 0.5))
    if alpha < 0:
        errors.append("tracking.alpha must be >= 0")

    wcfg = cfg.get("workspace", {})
    workspace = None
    try:
        fixed = wcfg.get("fixed_start_position_m")
        fixed_v = wcfg.get("fixed_start_velocity_mps")
        workspace = WorkspaceConfig(
            x_range_m=tuple(float(v) for v in wcfg["x_range_m"]),
            y_range_m=tuple(float(v) for v in wcfg["y_range_m"]),
            initial_speed_mps=float(wcfg.get("initial_speed_mps", 1.0)),
            fixed_start_position_m=tuple(fixed) if fixed is not None else None,
            fixed_start_velocity_mps=tuple(fixed_v) if fixed_v is not None else None,
        )
    except KeyError as exc:
        errors.append(f"workspace: missing key {exc}")
    except (TypeError, ValueError) as exc:
        errors.append(f"workspace: {exc}")

    ocfg = cfg.get("optimizer", {})
    optimizer = OptimizerConfig(
        n_bcd=int(ocfg.get("n_bcd", 15)),
        n_samples=int(ocfg.get("n_samples", 500)),
        pi_samples=int(ocfg.get("pi_samples", 256)),
        margin=float(ocfg.get("surrogate_margin", 100.0)),
        power_floor_fraction=float(ocfg.get("power_floor_fraction", 0.25)),
    )

    ue_height = float(cfg.get("ue", {}).get("height_m", 1.0))
    if rf is not None and rf.pilot_length < max(1, len(ris_list)):
        errors.append("rf.pilot_length_symbols must be >= number of RISs")
    if ue is not None and ue.n_elements < 2:
        errors.append("ue needs at least two antennas for phase gradients")

    if errors:
        raise ConfigError("invalid scenario configuration:\n  - " + "\n  - ".join(errors))

    return Scenario(
        name=str(cfg.get("name", "unnamed")),
        rf=rf, pattern=pattern, bs=bs, ue_template=ue, ue_height_m=ue_height,
        ris=ris_list, motion=motion, alpha=alpha,
        use_projected_noise=bool(tcfg.get("use_projected_noise", False)),
        use_effective_observation_model=bool(tcfg.get("effective_observation_model", True)),
        workspace=workspace, timescale=ts, optimizer=optimizer,
        orientation_error_per_episode=bool(cfg.get("ue", {}).get("orientation_error_per_episode", False)),
        config=cfg,
    )
