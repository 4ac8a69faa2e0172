"""Array element placement, spherical coordinates, and unit-cell patterns.

All arrays (base station, RIS panels, user terminal) are planar grids described
by an :class:`ArraySpec`: a reference position, two in-plane orthonormal axes,
and element counts along each axis.  Element layouts are centered on the
reference position so the tracked point of the user coincides with its array
centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArraySpec",
    "DegenerateGeometryError",
    "RadiationPattern",
    "Spherical",
    "direction_vector",
    "element_positions",
    "local_cos_angle",
    "pairwise_distance",
    "radiation_pattern",
    "rotate_about_z",
    "spherical_from_cartesian",
]


class DegenerateGeometryError(ValueError):
    """Raised when a geometric construction is undefined (coincident points)."""


@dataclass(frozen=True)
class Spherical:
    """Spherical coordinates: range, elevation from +z, azimuth from +x.

    Elevation ``theta`` lies in [0, pi]; azimuth ``phi`` in (-pi, pi].
    """

    distance: float
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if self.distance < 0:
            raise ValueError(f"distance must be >= 0, got {self.distance}")
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must be in [0, pi], got {self.theta}")
        if not -np.pi < self.phi <= np.pi + 1e-15:
            raise ValueError(f"phi must be in (-pi, pi], got {self.phi}")


@dataclass(frozen=True)
class RadiationPattern:
    """Exponential-Lambertian unit-cell pattern plus element gains (linear)."""

    exponent: float = 1.0
    cell_gain: float = 1.0
    tx_gain: float = 1.0
    rx_gain: float = 1.0

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError("pattern exponent must be >= 0")
        for name in ("cell_gain", "tx_gain", "rx_gain"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class ArraySpec:
    """Planar array: centered grid of ``n_rows`` x ``n_cols`` elements.

    ``axis_h`` and ``axis_v`` are orthonormal in-plane directions; columns run
    along ``axis_h``, rows along ``axis_v``.  The broadside normal is
    ``axis_h x axis_v`` and fixes the local frame used for radiation patterns.
    ``orientation_error_std_deg`` (user terminal only) is the standard
    deviation of a random rotation of the array about the z-axis applied to
    the physical elements but not to the tracking model.
    """

    kind: str  # "ULA" or "URA"
    n_rows: int
    n_cols: int
    spacing: float
    reference_position: np.ndarray
    axis_h: np.ndarray
    axis_v: np.ndarray
    orientation_error_std_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("ULA", "URA"):
            raise ValueError(f"kind must be ULA or URA, got {self.kind!r}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("element counts must be positive")
        if self.kind == "ULA" and min(self.n_rows, self.n_cols) != 1:
            raise ValueError("ULA requires a single row or column")
        if self.spacing <= 0:
            raise ValueError("element spacing must be > 0")
        object.__setattr__(self, "reference_position",
                           np.asarray(self.reference_position, dtype=float))
        for name in ("axis_h", "axis_v"):
            axis = np.asarray(getattr(self, name), dtype=float)
            norm = np.linalg.norm(axis)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a unit vector")
            object.__setattr__(self, name, axis)
        if abs(float(self.axis_h @ self.axis_v)) > 1e-9:
            raise ValueError("axis_h and axis_v must be orthogonal")

    @property
    def n_elements(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.axis_h, self.axis_v)


def direction_vector(theta: float, phi: float) -> np.ndarray:
    """Unit vector for elevation ``theta`` (from +z) and azimuth ``phi``."""
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def spherical_from_cartesian(p: np.ndarray, origin: np.ndarray) -> Spherical:
    """Spherical coordinates of ``p`` as seen from ``origin``.

    Azimuth uses the four-quadrant arctangent; at the poles (sin(theta) = 0)
    the azimuth is returned as 0 by convention.

    Raises:
        DegenerateGeometryError: if ``p`` coincides with ``origin``.
    """
    delta = np.asarray(p, dtype=float) - np.asarray(origin, dtype=float)
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        raise DegenerateGeometryError("spherical coordinates undefined for coincident points")
    transverse = float(np.hypot(delta[0], delta[1]))
    # atan2 form stays well conditioned at the poles, unlike acos(z/d)
    theta = float(np.arctan2(transverse, delta[2]))
    if transverse == 0.0:
        phi = 0.0
    else:
        phi = float(np.arctan2(delta[1], delta[0]))
        if phi <= -np.pi:
            phi = np.pi
    return Spherical(d, theta, phi)


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two points."""
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def element_positions(spec: ArraySpec) -> np.ndarray:
    """Element positions of a centered planar grid, shape (n_elements, 3).

    Iteration order is row-major: index = row * n_cols + col.  The centroid
    equals the reference position.
    """
    offs_h = (np.arange(spec.n_cols) - (spec.n_cols - 1) / 2.0) * spec.spacing
    offs_v = (np.arange(spec.n_rows) - (spec.n_rows - 1) / 2.0) * spec.spacing
    grid = (offs_v[:, None, None] * spec.axis_v[None, None, :]
            + offs_h[None, :, None] * spec.axis_h[None, None, :])
    return spec.reference_position[None, :] + grid.reshape(-1, 3)


def radiation_pattern(theta: np.ndarray | float, pattern: RadiationPattern) -> np.ndarray | float:
    """Normalized power pattern cos(theta)^q on [0, pi/2], zero behind the plane."""
    theta = np.asarray(theta, dtype=float)
    value = np.where(theta <= np.pi / 2, np.cos(theta) ** pattern.exponent, 0.0)
    # cos can go negative by rounding exactly at pi/2
    value = np.where(np.cos(theta) < 0, 0.0, value)
    if value.ndim == 0:
        return float(value)
    return value


def local_cos_angle(points_from: np.ndarray, points_to: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Cosine of the off-broadside angle of ``points_to`` seen from ``points_from``.

    Broadcasts over leading dimensions; directions behind the plane give
    negative cosines (callers clip through the pattern).
    """
    delta = np.asarray(points_to, dtype=float) - np.asarray(points_from, dtype=float)
    dist = np.linalg.norm(delta, axis=-1)
    return np.einsum("...i,i->...", delta, np.asarray(normal, dtype=float)) / dist


def rotate_about_z(points: np.ndarray, center: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate points about the vertical axis through ``center``."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return (np.asarray(points, dtype=float) - center) @ rot.T + center
