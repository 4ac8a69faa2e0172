"""Render simulator CSV outputs into the standard figure set.

Every renderer reads one or more delimited files produced by the simulator
CLI, validates the columns it needs, and writes a deterministic image: fixed
style, no timestamps, same bytes for the same input.  Power columns are
stored in watts and converted to dBW here at render time.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "SchemaError", "render", "FIGURE_KINDS"]

FIGURE_KINDS = ("trajectory", "cdf", "map", "bars", "hist", "peb")

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}

_COLORS = ["#0072bd", "#ed9722", "#77ac30", "#7e2f8e", "#a2142f", "#4dbeee"]


class SchemaError(ValueError):
    """An input file is missing a column the figure needs."""


@dataclass
class FigureSpec:
    """What to draw: figure kind, input CSV paths, output image path."""

    kind: str
    inputs: list[str]
    output: str
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {FIGURE_KINDS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")
        for path in self.inputs:
            if not os.path.exists(path):
                raise FileNotFoundError(path)

    def label(self, index: int) -> str:
        if index < len(self.labels):
            return self.labels[index]
        stem = os.path.basename(self.inputs[index])
        parent = os.path.basename(os.path.dirname(self.inputs[index]))
        return parent or os.path.splitext(stem)[0]


def _read_csv(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        missing = [name for name in required if name not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}; found {header}")
        rows = [row for row in reader if row]
    data = np.array(rows, dtype=object)
    out = {}
    for name in header:
        col = data[:, header.index(name)]
        try:
            out[name] = col.astype(float)
        except ValueError:
            out[name] = col.astype(str)
    return out


def _db(power_w: np.ndarray, floor: float = 1e-30) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(power_w, floor))


def _save(fig, output: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(output)), exist_ok=True)
    fig.savefig(output, metadata={"Software": "ristrack-plots"})
    plt.close(fig)


def _render_trajectory(spec: FigureSpec):
    fig, (ax_xy, ax_pw) = plt.subplots(1, 2, figsize=(9.2, 4.2))
    for i, path in enumerate(spec.inputs):
        data = _read_csv(path, ("true_x", "true_y", "est_x", "est_y", "step"))
        color = _COLORS[i % len(_COLORS)]
        if i == 0:
            ax_xy.plot(data["true_x"], data["true_y"], color="black",
                       linestyle="--", label="true")
        ax_xy.plot(data["est_x"], data["est_y"], color=color, label=spec.label(i))
        power_cols = sorted(name for name in data if name.startswith("power_w_"))
        if power_cols:
            total = sum(data[name] for name in power_cols)
            ax_pw.plot(data["step"], _db(total), color=color, label=spec.label(i))
    ax_xy.set_xlabel("x [m]")
    ax_xy.set_ylabel("y [m]")
    ax_xy.set_title("trajectory")
    ax_xy.legend()
    ax_xy.set_aspect("equal", adjustable="datalim")
    ax_pw.set_xlabel("step")
    ax_pw.set_ylabel("received power [dBW]")
    ax_pw.set_title("received power along the track")
    ax_pw.legend()
    fig.tight_layout()
    return fig


def _render_cdf(spec: FigureSpec):
    fig, ax = plt.subplots()
    for i, path in enumerate(spec.inputs):
        data = _read_csv(path, ("threshold_m", "ccdf"))
        ax.step(data["threshold_m"], data["ccdf"], where="post",
                color=_COLORS[i % len(_COLORS)], label=spec.label(i))
    ax.set_yscale("log")
    ax.set_xlabel("localization error threshold [m]")
    ax.set_ylabel("P(error > threshold)")
    ax.legend()
    fig.tight_layout()
    return fig


def _render_map(spec: FigureSpec):
    n = len(spec.inputs)
    fig, axes = plt.subplots(1, n, figsize=(4.6 * n, 4.2), squeeze=False)
    for i, path in enumerate(spec.inputs):
        data = _read_csv(path, ("x_m", "y_m", "power_w"))
        x = np.unique(data["x_m"])
        y = np.unique(data["y_m"])
        grid = np.full((x.size, y.size), np.nan)
        xi = np.searchsorted(x, data["x_m"])
        yi = np.searchsorted(y, data["y_m"])
        grid[xi, yi] = _db(data["power_w"])
        ax = axes[0][i]
        mesh = ax.pcolormesh(x, y, grid.T, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="reflected power [dBW]")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(spec.label(i))
        ax.set_aspect("equal", adjustable="box")
    fig.tight_layout()
    return fig


def _render_bars(spec: FigureSpec):
    data = _read_csv(spec.inputs[0], ("param", "value", "policy",
                                      "mean_error_m", "mean_rate_bps_hz"))
    values = sorted(set(data["value"]))
    policies = sorted(set(data["policy"]))
    fig, (ax_err, ax_rate) = plt.subplots(1, 2, figsize=(9.2, 4.2))
    width = 0.8 / len(policies)
    for j, policy in enumerate(policies):
        err, rate = [], []
        for v in values:
            mask = (data["policy"] == policy) & (data["value"] == v)
            err.append(data["mean_error_m"][mask][0] if mask.any() else np.nan)
            rate.append(data["mean_rate_bps_hz"][mask][0] if mask.any() else np.nan)
        offset = (j - (len(policies) - 1) / 2) * width
        ticks = np.arange(len(values))
        ax_err.bar(ticks + offset, err, width, label=policy,
                   color=_COLORS[j % len(_COLORS)])
        ax_rate.bar(ticks + offset, rate, width, label=policy,
                    color=_COLORS[j % len(_COLORS)])
    for ax, ylabel in ((ax_err, "mean localization error [m]"),
                       (ax_rate, "mean rate [bits/s/Hz]")):
        ax.set_xticks(np.arange(len(values)))
        ax.set_xticklabels([f"{v:g}" for v in values])
        ax.set_xlabel(str(data["param"][0]))
        ax.set_ylabel(ylabel)
        ax.legend()
    fig.tight_layout()
    return fig


def _render_hist(spec: FigureSpec):
    fig, ax = plt.subplots()
    series = [(_read_csv(path, ("mean_rate_bps_hz",))["mean_rate_bps_hz"], spec.label(i))
              for i, path in enumerate(spec.inputs)]
    top = max(float(np.max(values)) for values, _ in series)
    bins = np.linspace(0.0, max(top, 1e-9), 21)
    for i, (values, label) in enumerate(series):
        ax.hist(values, bins=bins, density=True, alpha=0.55, label=label,
                color=_COLORS[i % len(_COLORS)])
    ax.set_xlabel("achievable rate [bits/s/Hz]")
    ax.set_ylabel("empirical pdf")
    ax.legend()
    fig.tight_layout()
    return fig


def _render_peb(spec: FigureSpec):
    fig, ax = plt.subplots()
    for i, path in enumerate(spec.inputs):
        data = _read_csv(path, ("step", "rmse_m", "peb_m"))
        base = _COLORS[i % len(_COLORS)]
        suffix = f" ({spec.label(i)})" if len(spec.inputs) > 1 else ""
        ax.plot(data["step"], data["rmse_m"], color=base, label="RMSE" + suffix)
        ax.plot(data["step"], data["peb_m"], color=base, linestyle="--",
                label="posterior bound" + suffix)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("position error [m]")
    ax.legend()
    fig.tight_layout()
    return fig


_RENDERERS = {
    "trajectory": _render_trajectory,
    "cdf": _render_cdf,
    "map": _render_map,
    "bars": _render_bars,
    "hist": _render_hist,
    "peb": _render_peb,
}


def render(spec: FigureSpec) -> str:
    """Render one figure to ``spec.output`` and return the path."""
    with plt.rc_context(_STYLE):
        fig = _RENDERERS[spec.kind](spec)
        _save(fig, spec.output)
    return spec.output
