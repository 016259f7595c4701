"""Command-line driver: Monte Carlo trials, reports, figures, self-test."""

from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
import time as time_mod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, estimation, metrics, plots, simulator
from .glmb import empty_density, joint_predict_update, validate_density
from .labels import format_label
from .models import ConfigError, Scenario, default_config, load_scenario


@dataclass
class TrialResult:
    trial: int
    est_cardinality: np.ndarray
    ospa: np.ndarray  # (horizon, 3)
    estimates_by_scan: list  # per scan: {Label: (mean4, existence)}
    ancestry: list
    violations: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0
    scans: list | None = None


def run_trial(
    trial: int,
    scenario: Scenario,
    truth: list,
    keep_scans: bool = False,
    keep_diagnostics: bool = False,
    validate: bool = False,
) -> TrialResult:
    """One Monte Carlo trial: simulate measurements, filter, evaluate.

    Randomness derives from the master seed through documented streams:
    ([seed, trial, 0]) drives the sensor, ([seed, trial, 1]) the filter.
    """
    t0 = time_mod.perf_counter()
    seed = scenario.montecarlo.seed
    rng_meas = np.random.default_rng(np.random.SeedSequence([seed, trial, 0]))
    rng_filter = np.random.default_rng(np.random.SeedSequence([seed, trial, 1]))
    scans = simulator.simulate_scans(truth, scenario, rng_meas)

    horizon = scenario.montecarlo.horizon
    params = scenario.filter_params
    density = empty_density()
    est_card = np.zeros(horizon)
    ospa_series = np.zeros((horizon, 3))
    estimates_by_scan = []
    violations: list[str] = []
    diagnostics = []
    for scan in scans:
        density, diag = joint_predict_update(
            density, scan.measurements, scenario, scan.time, rng_filter, params
        )
        if keep_diagnostics:
            diagnostics.append(diag)
        if validate:
            problems = validate_density(density)
            mass_gap = abs(estimation.phd_mass(density) - estimation.expected_cardinality(density))
            if mass_gap > 1e-9:
                problems.append(f"PHD mass mismatch {mass_gap:.3e}")
            violations.extend(f"scan {scan.time}: {p}" for p in problems)
        estimates = estimation.extract_estimates(density)
        est_card[scan.time - 1] = len(estimates)
        _, truth_states = simulator.truth_states_at(truth, scan.time)
        est_positions = np.array([e.mean[:2] for e in estimates]) if estimates else np.empty((0, 2))
        truth_positions = truth_states[:, :2] if truth_states.size else np.empty((0, 2))
        ospa_series[scan.time - 1] = metrics.ospa(
            est_positions, truth_positions, scenario.ospa.cutoff, scenario.ospa.order
        )
        estimates_by_scan.append(
            {e.label: (e.mean.copy(), e.existence) for e in estimates}
        )

    ancestry = metrics.ancestry_analysis(
        [{lab: val[0] for lab, val in scan_est.items()} for scan_est in estimates_by_scan],
        simulator.ancestry_truth(scenario, truth),
        run=trial,
    )
    return TrialResult(
        trial=trial,
        est_cardinality=est_card,
        ospa=ospa_series,
        estimates_by_scan=estimates_by_scan,
        ancestry=ancestry,
        violations=violations,
        diagnostics=diagnostics,
        wall_time=time_mod.perf_counter() - t0,
        scans=scans if keep_scans else None,
    )


def _run_trial_star(args) -> TrialResult:
    return run_trial(*args)


def run_batch(
    scenario: Scenario,
    truth: list,
    workers: int = 1,
    keep_scans: bool = False,
    keep_diagnostics: bool = False,
    validate: bool = False,
) -> list[TrialResult]:
    """All trials, optionally across a process pool; output order is by trial."""
    trials = scenario.montecarlo.trials
    jobs = [(t, scenario, truth, keep_scans, keep_diagnostics, validate) for t in range(trials)]
    if workers <= 1:
        return [_run_trial_star(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_star, jobs))


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def write_reports(
    out_dir: Path,
    scenario: Scenario,
    truth: list,
    results: list[TrialResult],
    effective_config: dict,
    wall_time: float,
    make_plots: bool = True,
    dump_scans: bool = False,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    horizon = scenario.montecarlo.horizon
    scans_axis = np.arange(1, horizon + 1)
    truth_card = simulator.truth_cardinality(truth, horizon)

    est = np.array([r.est_cardinality for r in results])
    mean, std = metrics.cardinality_stats(est, truth_card)
    metrics.write_cardinality_csv(out_dir / "cardinality.csv", scans_axis, truth_card, mean, std)

    ospa_mean = np.mean([r.ospa for r in results], axis=0)
    metrics.write_ospa_csv(
        out_dir / "ospa.csv", scans_axis, ospa_mean[:, 0], ospa_mean[:, 1], ospa_mean[:, 2]
    )

    ancestry_records = [rec for r in results for rec in r.ancestry]
    metrics.write_ancestry_csv(out_dir / "ancestry.csv", ancestry_records)

    (out_dir / "truth.json").write_text(simulator.truth_to_json(truth, horizon))

    trials_dir = out_dir / "trials"
    trials_dir.mkdir(exist_ok=True)
    for r in results:
        with open(trials_dir / f"trial_{r.trial:03d}_estimates.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scan", "label", "x", "y", "vx", "vy", "existence"])
            for k, scan_est in enumerate(r.estimates_by_scan, start=1):
                for lab in sorted(scan_est):
                    mean4, ex = scan_est[lab]
                    writer.writerow(
                        [k, format_label(lab)]
                        + [f"{v:.10g}" for v in mean4]
                        + [f"{ex:.10g}"]
                    )
        if dump_scans and r.scans is not None:
            simulator.write_scans_csv(trials_dir / f"trial_{r.trial:03d}_scans.csv", r.scans)
        if r.diagnostics:
            with open(trials_dir / f"trial_{r.trial:03d}_diag.jsonl", "w") as fh:
                for diag in r.diagnostics:
                    fh.write(json.dumps(diag) + "\n")

    meta = {
        "schema_version": 1,
        "package_version": __version__,
        "config": effective_config,
        "seed": scenario.montecarlo.seed,
        "trials": scenario.montecarlo.trials,
        "horizon": horizon,
        "git_hash": _git_hash(),
        "wall_time_s": wall_time,
        "trial_wall_times_s": [r.wall_time for r in results],
        "violations": [v for r in results for v in r.violations],
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2))

    if make_plots:
        figures = out_dir / "figures"
        figures.mkdir(exist_ok=True)
        plots.save_cardinality_figure(
            figures / "cardinality.png", scans_axis, truth_card, mean, std
        )
        plots.save_ospa_figure(
            figures / "ospa.png",
            scans_axis,
            ospa_mean[:, 0],
            ospa_mean[:, 1],
            ospa_mean[:, 2],
            scenario.ospa.cutoff,
        )
        plots.save_trajectories_figure(
            figures / "trajectories.png", truth, scenario.sensor.region
        )
        anc_truth = simulator.ancestry_truth(scenario, truth)
        for region in sorted(anc_truth.gen1_times):
            plots.save_ancestry_figure(
                figures / f"ancestry_region_{region}.png", ancestry_records, anc_truth, region
            )


def _deep_update(base: dict, overrides: dict) -> dict:
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def build_effective_config(args) -> dict:
    config = default_config()
    if args.config:
        text = Path(args.config).read_text()
        _deep_update(config, json.loads(text))
    if args.trials is not None:
        config["montecarlo"]["trials"] = args.trials
    if args.seed is not None:
        config["montecarlo"]["seed"] = args.seed
    if args.p_t is not None:
        config["spawn"]["p_t"] = args.p_t
    if args.cap is not None:
        config["filter"]["cap"] = args.cap
    if args.hmax is not None:
        config["filter"]["h_max"] = args.hmax
    return config


def selftest() -> bool:
    """Small oracle suite: enumeration equivalence, Gibbs law, reduction, OSPA."""
    from . import selfcheck

    report = selfcheck.run_all()
    ok = True
    for name, passed, detail in report:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        ok &= passed
    return ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spawnglmb",
        description="Monte Carlo simulation of a multi-object tracking filter with spawning",
    )
    parser.add_argument("--config", help="scenario config JSON path (defaults built in)")
    parser.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--p-t", dest="p_t", type=float, help="override spawn probability")
    parser.add_argument("--cap", type=int, help="override component cap")
    parser.add_argument("--hmax", type=int, help="override Gibbs budget per scan")
    parser.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    parser.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    parser.add_argument("--dump-scans", action="store_true", help="write per-trial measurement CSVs")
    parser.add_argument("--diagnostics", action="store_true", help="write per-scan diagnostics JSONL")
    parser.add_argument("--validate", action="store_true", help="run structural invariant checks per scan")
    parser.add_argument("--selftest", action="store_true", help="run the oracle self-test suite and exit")
    args = parser.parse_args(argv)

    if args.selftest:
        return 0 if selftest() else 1

    try:
        effective = build_effective_config(args)
        scenario = load_scenario(json.dumps(effective))
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    t0 = time_mod.perf_counter()
    truth = simulator.generate_truth(scenario)
    try:
        results = run_batch(
            scenario,
            truth,
            workers=args.workers,
            keep_scans=args.dump_scans,
            keep_diagnostics=args.diagnostics,
            validate=args.validate,
        )
        write_reports(
            Path(args.out),
            scenario,
            truth,
            results,
            effective,
            wall_time=time_mod.perf_counter() - t0,
            make_plots=not args.no_plots,
            dump_scans=args.dump_scans,
        )
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n_violations = sum(len(r.violations) for r in results)
    if n_violations:
        print(f"structural violations detected: {n_violations}", file=sys.stderr)
        return 3
    print(f"wrote {scenario.montecarlo.trials} trial(s) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
