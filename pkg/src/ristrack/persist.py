"""CSV and manifest writers with reproducible float formatting.

Floats are written with ``repr``, the shortest representation that round
trips exactly, so byte-level diffs of two runs with the same seed are clean.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "config_hash",
    "format_value",
    "trace_header",
    "trace_rows",
    "write_csv",
    "write_manifest",
]


def format_value(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(format_value(v) for v in row) + "\n")


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(path: str, config: dict, master_seed: int, policies: Sequence[str],
                   runs: int, run_seeds: dict, version: str) -> None:
    """Everything needed to re-run any single trace in isolation.

    Run seeds follow the documented splitting rule:
    ``numpy.random.SeedSequence([master_seed, policy_index, run_index])``.
    """
    manifest = {
        "version": version,
        "master_seed": master_seed,
        "seed_rule": "SeedSequence([master_seed, policy_index, run_index])",
        "policies": list(policies),
        "runs": runs,
        "run_seeds": run_seeds,
        "config_sha256": config_hash(config),
        "config": config,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=False)
        handle.write("\n")


def trace_header(n_ris: int) -> list[str]:
    head = ["step", "true_x", "true_y", "true_z", "true_vx", "true_vy", "true_vz",
            "est_x", "est_y", "est_z", "est_vx", "est_vy", "est_vz",
            "error_m", "rate_bps_hz"]
    for stem in ("power_w", "beta", "noise_block", "xi", "pi", "gamma"):
        head.extend(f"{stem}_{k + 1}" for k in range(n_ris))
    return head


def trace_rows(trace) -> Iterable[list]:
    """Rows matching :func:`trace_header` for one episode trace."""
    err = trace.position_error
    for i in range(trace.n_steps):
        row = [i + 1]
        row.extend(trace.true_state[i])
        row.extend(trace.est_state[i])
        row.append(err[i])
        row.append(trace.rate[i])
        row.extend(trace.received_power[i])
        row.extend(trace.beta[i])
        row.extend(trace.noise_block[i])
        row.extend(trace.xi[i])
        row.extend(trace.pi[i])
        row.extend(trace.gamma[i])
        yield row
