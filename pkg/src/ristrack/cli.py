"""Command-line front end: campaigns, sweeps, power maps, and bound traces.

Subcommands
    run    Monte Carlo tracking campaign; emits per-run traces and aggregates.
    sweep  re-run a campaign over a grid of one config value; emits bars.csv.
    map    t=0 RIS designs and their reflected-power maps; emits powermap CSVs.
    peb    tracking RMSE against the posterior error bound; emits peb.csv.

Every output directory gets a manifest recording the resolved config, its
hash, and the seed-splitting rule, which is enough to re-run any single trace
in isolation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ristrack import __version__
from ristrack.metrics import error_stats, posterior_peb, power_map
from ristrack.persist import trace_header, trace_rows, write_csv, write_manifest
from ristrack.scenario import (
    ConfigError,
    Scenario,
    builtin_config,
    load_scenario_config,
    scenario_from_config,
)
from ristrack.scheduler import Policy, bd_precoder_set, design_initial_profiles, run_episode

__all__ = ["main", "load_config", "run_campaign"]

_PRESETS = ("desk_default", "fig3_single_ris", "paper_full_scale")


def load_config(spec: str) -> dict:
    """Load a scenario config from a preset name or a JSON file path."""
    if spec in _PRESETS:
        return builtin_config(spec)
    return load_scenario_config(spec)


def _parse_overrides(pairs: list[str]) -> dict:
    """Parse ``section.key=value`` overrides; values are JSON literals."""
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    return overrides


def _load_external_profiles(path: str | None):
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    return [np.array([complex(re, im) for re, im in ris]) for ris in data["profiles"]]


def _run_seed(master_seed: int, policy_index: int, run_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, policy_index, run_index]))


_WORKER_SCENARIO: dict = {}


def _episode_worker(args):
    cfg, overrides, policy_value, master_seed, policy_index, run_index, external = args
    key = json.dumps(overrides, sort_keys=True)
    if key not in _WORKER_SCENARIO:
        _WORKER_SCENARIO[key] = scenario_from_config(cfg, overrides)
    scenario = _WORKER_SCENARIO[key]
    rng = _run_seed(master_seed, policy_index, run_index)
    return run_episode(scenario, Policy(policy_value), rng, external_profiles=external)


def run_campaign(cfg: dict, policies: list[Policy], runs: int, master_seed: int,
                 out_dir: str, overrides: dict | None = None, parallel: int = 0,
                 external_profiles=None, save_traces: bool = True) -> int:
    """Execute runs x policies episodes and write traces plus aggregates.

    Returns the number of successful runs.  Per-run failures are logged and
    skipped; determinism is guaranteed by deriving each run's generator from
    ``SeedSequence([master_seed, policy_index, run_index])`` and aggregating
    in run order.
    """
    overrides = overrides or {}
    scenario = scenario_from_config(cfg, overrides)
    os.makedirs(out_dir, exist_ok=True)
    run_seeds = {}
    successes = 0
    summary = {}
    for pi, policy in enumerate(policies):
        jobs = [(cfg, overrides, policy.value, master_seed, pi, ri, external_profiles)
                for ri in range(runs)]
        traces: list = [None] * runs
        if parallel > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                for ri, trace in enumerate(pool.map(_episode_worker, jobs)):
                    traces[ri] = trace
        else:
            for ri, job in enumerate(jobs):
                try:
                    traces[ri] = _episode_worker(job)
                except Exception as exc:  # noqa: BLE001 - campaign keeps going
                    print(f"[{policy.value}] run {ri} failed: {exc}", file=sys.stderr)
        run_seeds[policy.value] = {str(ri): [master_seed, pi, ri] for ri in range(runs)}
        good = [t for t in traces if t is not None]
        successes += len(good)
        pol_dir = os.path.join(out_dir, policy.value)
        os.makedirs(pol_dir, exist_ok=True)
        if save_traces:
            for ri, trace in enumerate(traces):
                if trace is None:
                    continue
                write_csv(os.path.join(pol_dir, f"trace_run{ri:03d}.csv"),
                          trace_header(scenario.n_ris), trace_rows(trace))
        if not good:
            continue
        stats = error_stats(good)
        write_csv(os.path.join(pol_dir, "cdf.csv"), ["threshold_m", "ccdf"],
                  zip(stats.ccdf_thresholds, stats.ccdf))
        write_csv(os.path.join(pol_dir, "rates.csv"), ["run", "mean_rate_bps_hz"],
                  [(ri, float(np.mean(t.rate))) for ri, t in enumerate(traces) if t is not None])
        peb_rows = _aggregate_peb(scenario, good)
        write_csv(os.path.join(pol_dir, "peb.csv"), ["step", "rmse_m", "peb_m"], peb_rows)
        summary[policy.value] = {
            "runs": len(good),
            "diverged": sum(t.diverged for t in good),
            "mean_error_m": stats.mean,
            "q90_error_m": stats.q90,
            "q99_error_m": stats.q99,
            "mean_rate_bps_hz": float(np.mean([np.mean(t.rate) for t in good])),
        }
        with open(os.path.join(pol_dir, "stats.json"), "w", encoding="utf-8") as handle:
            json.dump(summary[policy.value], handle, indent=2)
            handle.write("\n")
        print(f"[{policy.value}] mean error {stats.mean:.3f} m, "
              f"q90 {stats.q90:.3f} m over {len(good)} runs")
    write_manifest(os.path.join(out_dir, "manifest.json"),
                   scenario.config or cfg, master_seed,
                   [p.value for p in policies], runs, run_seeds, __version__)
    return successes


def _aggregate_peb(scenario: Scenario, traces: list) -> list[tuple]:
    """Per-step RMSE and RMS posterior bound across runs."""
    n_steps = min(t.n_steps for t in traces)
    err_sq = np.zeros(n_steps)
    peb_sq = np.zeros(n_steps)
    for trace in traces:
        err_sq += trace.position_error[:n_steps] ** 2
        bound = posterior_peb(trace.jac_true[:n_steps], trace.noise_diag[:n_steps],
                              scenario.motion)
        peb_sq += bound.peb ** 2
    n = len(traces)
    return [(t + 1, float(np.sqrt(err_sq[t] / n)), float(np.sqrt(peb_sq[t] / n)))
            for t in range(n_steps)]


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    policies = [Policy(p) for p in args.policies.split(",")]
    external = _load_external_profiles(args.external_profiles)
    successes = run_campaign(cfg, policies, args.runs, args.seed, args.out,
                             overrides=_parse_overrides(args.override),
                             parallel=args.parallel, external_profiles=external,
                             save_traces=not args.no_traces)
    return 0 if successes > 0 else 1


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    policies = [Policy(p) for p in args.policies.split(",")]
    base_overrides = _parse_overrides(args.override)
    rows = []
    for raw in args.values.split(","):
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides = dict(base_overrides)
        overrides[args.param] = value
        sub_dir = os.path.join(args.out, f"{args.param.replace('.', '_')}={raw}")
        run_campaign(cfg, policies, args.runs, args.seed, sub_dir, overrides=overrides,
                     parallel=args.parallel)
        for policy in policies:
            stats_path = os.path.join(sub_dir, policy.value, "stats.json")
            if not os.path.exists(stats_path):
                continue
            with open(stats_path, "r", encoding="utf-8") as handle:
                stats = json.load(handle)
            rows.append((args.param, value, policy.value,
                         stats["mean_error_m"], stats["mean_rate_bps_hz"]))
    write_csv(os.path.join(args.out, "bars.csv"),
              ["param", "value", "policy", "mean_error_m", "mean_rate_bps_hz"], rows)
    return 0 if rows else 1


def _cmd_map(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_config(cfg, _parse_overrides(args.override))
    external = _load_external_profiles(args.external_profiles)
    ws = scenario.workspace
    x = np.linspace(ws.x_range_m[0], ws.x_range_m[1], args.grid)
    y = np.linspace(ws.y_range_m[0], ws.y_range_m[1], args.grid)
    for pi, name in enumerate(args.policies.split(",")):
        policy = Policy(name)
        rng = _run_seed(args.seed, pi, 0)
        state_vec = scenario.sample_initial_state(rng)
        from ristrack.tracker import TrackState
        state = TrackState(state_vec, scenario.motion.process_noise)
        channels = scenario.channel_set(state.position, rng)
        beta = np.full(scenario.n_ris, np.sqrt(scenario.rf.pilot_power_w / scenario.n_ris))
        precoders = bd_precoder_set(channels, beta, scenario.rf.pilot_power_w)
        profiles, _, _, _ = design_initial_profiles(scenario, policy, state, precoders,
                                                    rng, external)
        grid = power_map(scenario, profiles, precoders, x, y)
        rows = [(x[i], y[j], grid[i, j]) for i in range(x.size) for j in range(y.size)]
        write_csv(os.path.join(args.out, f"powermap_{policy.value}.csv"),
                  ["x_m", "y_m", "power_w"], rows)
        print(f"[{policy.value}] power map {args.grid}x{args.grid} written")
    write_manifest(os.path.join(args.out, "manifest.json"), scenario.config or cfg,
                   args.seed, args.policies.split(","), 0, {}, __version__)
    return 0


def _cmd_peb(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_config(cfg, _parse_overrides(args.override))
    policy = Policy(args.policy)
    traces = []
    for ri in range(args.runs):
        rng = _run_seed(args.seed, 0, ri)
        traces.append(run_episode(scenario, policy, rng))
    write_csv(os.path.join(args.out, "peb.csv"), ["step", "rmse_m", "peb_m"],
              _aggregate_peb(scenario, traces))
    write_manifest(os.path.join(args.out, "manifest.json"), scenario.config or cfg,
                   args.seed, [policy.value], args.runs,
                   {policy.value: {str(ri): [args.seed, 0, ri] for ri in range(args.runs)}},
                   __version__)
    print(f"peb.csv written for {policy.value} over {args.runs} runs")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default="desk_default",
                        help="preset name (%s) or JSON path" % ", ".join(_PRESETS))
    parser.add_argument("--seed", type=int, default=12345, help="master seed")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted config override, JSON value")
    parser.add_argument("--external-profiles", default=None,
                        help="JSON file with externally designed RIS profiles")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ristrack",
                                     description="RIS-aided near-field tracking simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo tracking campaign")
    _add_common(p_run)
    p_run.add_argument("--runs", type=int, default=10)
    p_run.add_argument("--policies", default="beta-opt-ao,beta-focus")
    p_run.add_argument("--parallel", type=int, default=0, help="worker processes")
    p_run.add_argument("--no-traces", action="store_true", help="skip per-run trace CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="campaign over a grid of one config value")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="dotted config key, e.g. timescale.dt_s")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--runs", type=int, default=10)
    p_sweep.add_argument("--policies", default="beta-opt-ao,beta-focus")
    p_sweep.add_argument("--parallel", type=int, default=0)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_map = sub.add_parser("map", help="reflected-power maps of the t=0 designs")
    _add_common(p_map)
    p_map.add_argument("--policies", default="opt-ao,focus")
    p_map.add_argument("--grid", type=int, default=60, help="grid points per axis")
    p_map.set_defaults(func=_cmd_map)

    p_peb = sub.add_parser("peb", help="RMSE vs posterior error bound")
    _add_common(p_peb)
    p_peb.add_argument("--policy", default="beta-opt-ao")
    p_peb.add_argument("--runs", type=int, default=10)
    p_peb.set_defaults(func=_cmd_peb)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
