"""RIS profile optimization over a position-uncertainty density.

The per-RIS design problem is min_c E_p{ 1 / P0(p, c) } subject to per-cell
modulus |c_p| <= 1, with P0(p, c) = |htilde(p) c|^2 the received power of the
unit-power cascade.  A block-coordinate scheme alternates a closed-form scalar
field w(p) with a convex quadratic profile update, solved either exactly
(projected gradient, mode OPT) or element-wise in closed form (mode OPT-AO).
The FOCUS baseline simply phase-conjugates the cascade at a point estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable
import warnings

import numpy as np

__all__ = [
    "BcdWorkspace",
    "DegeneratePowerError",
    "GaussianMixture",
    "MonotonicityError",
    "OptimizeResult",
    "RisProfile",
    "accumulate_quadratic_terms",
    "ao_element_update",
    "ao_sweep",
    "bcd_update_w",
    "focus_profile",
    "mean_inverse_power",
    "optimize_ris",
    "received_power",
    "sample_uncertainty",
    "solve_quadratic_opt",
]

FEASIBILITY_TOL = 1e-12
# Ratio between the smallest sampled power and the equivalence floor delta.
DELTA_MARGIN = 100.0


class DegeneratePowerError(RuntimeError):
    """Every sampled position receives zero power; the objective is undefined."""


class MonotonicityError(RuntimeError):
    """A BCD half-step increased the surrogate beyond tolerance."""


@dataclass(frozen=True)
class RisProfile:
    """Reflection coefficient vector with per-cell modulus at most one."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if np.max(np.abs(v)) > 1.0 + FEASIBILITY_TOL:
            raise ValueError("profile violates the unit-modulus bound")
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GaussianMixture:
    """Equal-weight-by-default Gaussian mixture over 3-D positions."""

    means: np.ndarray    # (N, 3)
    covs: np.ndarray     # (N, 3, 3)
    weights: np.ndarray  # (N,)

    def __post_init__(self) -> None:
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float).reshape(-1, 3, 3)
        weights = np.asarray(self.weights, dtype=float)
        if not (means.shape[0] == covs.shape[0] == weights.shape[0]):
            raise ValueError("component counts disagree")
        if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "weights", weights)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.means


def sample_uncertainty(density: GaussianMixture, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. positions from the mixture, shape (n, 3).

    Components may be singular (pinned axes); sampling factors each covariance
    by eigendecomposition with negative rounding clipped to zero.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    component = rng.choice(density.n_components, size=n, p=density.weights)
    out = np.empty((n, 3))
    for q in range(density.n_components):
        mask = component == q
        m = int(mask.sum())
        if m == 0:
            continue
        evals, evecs = np.linalg.eigh(density.covs[q])
        factor = evecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]
        out[mask] = density.means[q][None, :] + rng.standard_normal((m, 3)) @ factor.T
    return out


def received_power(profile: np.ndarray, cascade_rows: np.ndarray) -> np.ndarray | float:
    """Unit-power received power(s) |htilde(p) c|^2 for one or many rows."""
    rows = np.asarray(cascade_rows)
    value = np.abs(rows @ np.asarray(profile)) ** 2
    if value.ndim == 0:
        return float(value)
    return value


def mean_inverse_power(powers: np.ndarray, margin: float = DELTA_MARGIN) -> float:
    """Mean of 1/P0 with zero samples floored at min-positive / margin.

    Raises:
        DegeneratePowerError: if every sample has zero power.
    """
    powers = np.asarray(powers, dtype=float)
    positive = powers[powers > 0]
    if positive.size == 0:
        raise DegeneratePowerError("all sampled powers are zero")
    floor = positive.min() / margin
    return float(np.mean(1.0 / np.maximum(powers, floor)))


@dataclass
class BcdWorkspace:
    """Frozen sample set and cascade rows shared by all BCD iterations."""

    samples: np.ndarray       # (n, 3)
    cascade_rows: np.ndarray  # (n, P)
    margin: float = DELTA_MARGIN

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def powers(self, profile: np.ndarray) -> np.ndarray:
        return np.abs(self.cascade_rows @ profile) ** 2

    def surrogate(self, profile: np.ndarray, delta: float) -> float:
        """E_p{ delta / (P0 + delta) } over the frozen samples."""
        return float(np.mean(delta / (self.powers(profile) + delta)))


def bcd_update_w(workspace: BcdWorkspace, profile: np.ndarray) -> tuple[np.ndarray, float]:
    """Closed-form scalar update and the floor delta for the current profile.

    delta = min_j P0(p_j, c) / margin; w_j = conj(htilde_j c) / (P0_j + delta).
    """
    field_values = workspace.cascade_rows @ profile
    powers = np.abs(field_values) ** 2
    if not np.any(powers > 0):
        raise DegeneratePowerError("profile receives zero power at every sample")
    delta = float(powers.min()) / workspace.margin
    if delta == 0.0:
        delta = float(powers[powers > 0].min()) / workspace.margin
    return field_values.conj() / (powers + delta), delta


def accumulate_quadratic_terms(workspace: BcdWorkspace,
                               w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo averages A = E{|w|^2 h^H h} (P x P) and s = E{w h} (P,)."""
    rows = workspace.cascade_rows
    a = (rows.conj() * (np.abs(w) ** 2)[:, None]).T @ rows / workspace.n_samples
    s = (w @ rows) / workspace.n_samples
    return (a + a.conj().T) / 2.0, s


def quadratic_objective(a: np.ndarray, s: np.ndarray, profile: np.ndarray) -> float:
    """c^H A c - 2 Re{s c}."""
    return float(np.real(profile.conj() @ a @ profile) - 2.0 * np.real(s @ profile))


def _project_disk(profile: np.ndarray) -> np.ndarray:
    mags = np.abs(profile)
    scale = np.where(mags > 1.0, mags, 1.0)
    return profile / scale


def solve_quadratic_opt(a: np.ndarray, s: np.ndarray, start: np.ndarray,
                        tol: float = 1e-8, max_iter: int = 5000) -> np.ndarray:
    """Minimize c^H A c - 2 Re{s c} over |c_p| <= 1 by projected gradient.

    Accelerated (Nesterov) steps of length 1/lambda_max(A) with restart on
    objective increase; the returned iterate never exceeds the start's
    objective.  Convergence is declared when the projected-gradient step is
    below ``tol`` per element; on hitting ``max_iter`` the best iterate is
    returned with a warning.
    """
    lip = float(np.linalg.eigvalsh(a)[-1])
    if lip <= 0:
        # A is (numerically) zero: the objective is linear, optimum on the boundary
        grad = -s.conj()
        mags = np.abs(grad)
        return np.where(mags > 0, -grad / np.where(mags > 0, mags, 1.0), start)
    step = 1.0 / lip

    def value(c):
        return float(np.real(c.conj() @ a @ c) - 2.0 * np.real(s @ c))

    c = _project_disk(np.asarray(start, dtype=complex).copy())
    best = c.copy()
    best_value = value(c)
    momentum = c.copy()
    t_acc = 1.0
    for _ in range(max_iter):
        c_next = _project_disk(momentum - step * (a @ momentum - s.conj()))
        # first-order stationarity: the projected-gradient map at the iterate
        if np.max(np.abs(_project_disk(c_next - step * (a @ c_next - s.conj()))
                         - c_next)) <= tol:
            return c_next if value(c_next) <= best_value else best
        v_next = value(c_next)
        if v_next > value(c):
            # acceleration overshot; restart from the plain iterate
            momentum = c.copy()
            t_acc = 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc ** 2))
        momentum = _project_disk(c_next + ((t_acc - 1.0) / t_next) * (c_next - c))
        c = c_next
        t_acc = t_next
        if v_next < best_value:
            best_value = v_next
            best = c_next.copy()
    warnings.warn("projected gradient hit the iteration cap before the "
                  "stationarity tolerance; returning the best iterate",
                  RuntimeWarning, stacklevel=2)
    return best


def ao_element_update(a: np.ndarray, s: np.ndarray, profile: np.ndarray, p: int) -> complex:
    """Closed-form minimizer of the quadratic objective in the single cell p.

    With V_p = sum_{l != p} A_pl c_l, A_p = A_pp, Y_p = conj(s_p) - V_p:
    c_p = Y_p / A_p when |Y_p| < A_p, else Y_p / |Y_p|.  A zero diagonal with
    zero Y leaves the cell unchanged.
    """
    v_p = a[p] @ profile - a[p, p] * profile[p]
    a_p = float(np.real(a[p, p]))
    y_p = np.conj(s[p]) - v_p
    mag = abs(y_p)
    if mag < a_p:
        return y_p / a_p
    if mag == 0.0:
        return profile[p]
    return y_p / mag


def ao_sweep(a: np.ndarray, s: np.ndarray, profile: np.ndarray) -> np.ndarray:
    """One full ascending-index sweep of closed-form element updates."""
    c = np.asarray(profile, dtype=complex).copy()
    for p in range(c.shape[0]):
        c[p] = ao_element_update(a, s, c, p)
    return c


@dataclass
class OptimizeResult:
    """Optimized profile plus the surrogate trace used for monotonicity checks."""

    profile: RisProfile
    surrogate_log: list[tuple[int, str, float]] = field(default_factory=list)
    expected_inverse_power: float = np.nan
    workspace: BcdWorkspace | None = None
    n_iterations: int = 0


def focus_profile(cascade_row: np.ndarray) -> RisProfile:
    """Unit-modulus profile that phase-conjugates the cascade at one point."""
    return RisProfile(np.exp(-1j * np.angle(np.asarray(cascade_row))))


def optimize_ris(density: GaussianMixture,
                 cascade_row_builder: Callable[[np.ndarray], np.ndarray],
                 mode: str, start: np.ndarray, rng: np.random.Generator,
                 n_bcd: int = 20, n_samples: int = 500,
                 rel_tol: float = 1e-6, margin: float = DELTA_MARGIN,
                 monotonic_tol: float = 1e-9,
                 check_monotonic: bool = True) -> OptimizeResult:
    """Block-coordinate minimization of E_p{1/P0} over feasible profiles.

    A fixed Monte Carlo sample set is drawn once and reused by every
    iteration so the surrogate is a consistent deterministic function.  Each
    outer iteration runs the closed-form w update followed by one profile
    update: a full projected-gradient solve (``mode="OPT"``) or one sweep of
    per-element closed forms (``mode="OPT-AO"``).  Both half-steps must not
    increase the surrogate E_p{Upsilon} at the iteration's floor delta.

    Args:
        density: position-uncertainty mixture to integrate over.
        cascade_row_builder: maps positions (n, 3) to cascade rows (n, P).
        mode: "OPT" or "OPT-AO".
        start: feasible warm-start profile (the previous profile).
        rng: generator for the sample draw.
        n_bcd: outer iteration budget.
        n_samples: Monte Carlo sample count.
        rel_tol: early stop on relative surrogate change.
        margin: ratio min-power / delta.
        monotonic_tol: relative slack for the per-half-step descent assertion.
        check_monotonic: raise MonotonicityError on violations.
    """
    if mode not in ("OPT", "OPT-AO"):
        raise ValueError(f"unknown mode {mode!r}")
    samples = sample_uncertainty(density, n_samples, rng)
    workspace = BcdWorkspace(samples, cascade_row_builder(samples), margin)
    c = _project_disk(np.asarray(start, dtype=complex).copy())
    log: list[tuple[int, str, float]] = []
    previous_surrogate: float | None = None
    iterations = 0
    for q in range(n_bcd):
        w, delta = bcd_update_w(workspace, c)
        # by optimality of w the surrogate equals E{delta / (P0 + delta)}
        after_w = workspace.surrogate(c, delta)
        log.append((q, "w", after_w))
        a, s = accumulate_quadratic_terms(workspace, w)
        baseline = quadratic_objective(a, s, c)
        c_new = solve_quadratic_opt(a, s, c) if mode == "OPT" else ao_sweep(a, s, c)
        updated = quadratic_objective(a, s, c_new)
        if check_monotonic and updated > baseline + monotonic_tol * max(1.0, abs(baseline)):
            raise MonotonicityError(f"profile step raised the quadratic objective at iteration {q}")
        c = c_new
        after_c = workspace.surrogate(c, delta)
        log.append((q, "c", after_c))
        if check_monotonic and after_c > after_w + monotonic_tol * max(1.0, abs(after_w)):
            raise MonotonicityError(f"surrogate increased across the profile step at iteration {q}")
        iterations = q + 1
        if (rel_tol > 0 and previous_surrogate is not None
                and abs(previous_surrogate - after_c) <= rel_tol * abs(previous_surrogate)):
            break
        previous_surrogate = after_c
    expected = mean_inverse_power(workspace.powers(c), margin)
    return OptimizeResult(RisProfile(c), log, expected, workspace, iterations)
