"""Built-in oracle suite behind the CLI --selftest flag.

Each check compares the production path against an independent brute-force
reference on a desk-scale instance and reports a pass/fail line.  The same
helpers back parts of the pytest suite.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import assignment, metrics, oracle, simulator
from .gaussian import Gaussian, GaussianMixture, moment_match
from .glmb import GlmbComponent, GlmbDensity, empty_density, joint_predict_update
from .labels import make_birth_label
from .models import FilterParams, Scenario, load_scenario


def toy_config(p_t: float = 0.05, n_birth: int = 1, p_s: float = 0.9, p_d: float = 0.85) -> dict:
    means = [[0.0, 0.0, 0.0, 0.0], [60.0, -40.0, 0.0, 0.0], [-60.0, 40.0, 0.0, 0.0]]
    return {
        "dynamics": {"dt": 1.0, "sigma_nu": 1.0, "p_s": p_s},
        "birth": {"r_b": 0.05, "sigma_b": 8.0, "means": means[:n_birth]},
        "spawn": {
            "p_t": p_t,
            "sigma_t": 4.0,
            "offsets": [[30.0, -80.0], [30.0, -90.0], [30.0, -100.0]],
            "per_parent": 1,
        },
        "sensor": {
            "p_d": p_d,
            "sigma_eps": 3.0,
            "clutter_rate": 2.0,
            "region": [[-200.0, 200.0], [-200.0, 200.0]],
        },
        "filter": {"h_max": 200, "cap": 10000, "mixture_cap": 50, "mixture_prune": 0.0},
        "ospa": {"cutoff": 100.0, "order": 1.0},
        "montecarlo": {"trials": 1, "seed": 7, "horizon": 4},
    }


def toy_scenario(**kwargs) -> Scenario:
    return load_scenario(json.dumps(toy_config(**kwargs)))


def exhaustive_params(scenario: Scenario) -> FilterParams:
    return FilterParams(
        h_max=scenario.filter_params.h_max,
        cap=10**7,
        mixture_cap=10**6,
        mixture_prune=0.0,
        exhaustive=True,
    )


def component_with_tracks(track_states, time_born: int = 1, spread: float = 9.0) -> GlmbComponent:
    labels = tuple(make_birth_label(time_born, i + 1) for i in range(len(track_states)))
    densities = {
        lab: GaussianMixture.single(Gaussian(np.asarray(state, dtype=float), spread * np.eye(4)))
        for lab, state in zip(labels, track_states)
    }
    return GlmbComponent(labels=labels, history=(), log_weight=0.0, track_densities=densities)


def density_weight_map(density: GlmbDensity) -> dict:
    return {(c.labels, c.history): c.log_weight for c in density.components}


def _max_rel_weight_gap(map_a: dict, map_b: dict) -> float:
    if set(map_a) != set(map_b):
        return math.inf
    gap = 0.0
    for key, lw in map_a.items():
        if max(lw, map_b[key]) < math.log(1e-280):
            continue  # both vanish at double precision
        wa, wb = math.exp(lw), math.exp(map_b[key])
        gap = max(gap, abs(wa - wb) / max(wa, wb))
    return gap


def check_enumeration_equivalence() -> tuple[str, bool, str]:
    """Exhaustive single-step update equals the dense enumeration oracle."""
    scenario = toy_scenario(p_t=0.05, n_birth=1)
    component = component_with_tracks([[5.0, -3.0, 4.0, 1.5], [-40.0, 25.0, -2.0, 3.0]])
    prior = GlmbDensity((component,), scan_time=2)
    Z = np.array([[9.5, -1.0], [-14.0, 4.0]])
    time = 3

    posterior, _ = joint_predict_update(
        prior, Z, scenario, time, params=exhaustive_params(scenario)
    )
    enum = oracle.enumerate_posterior(component, Z, scenario, time)

    main_map = {
        (c.labels, tuple(c.history[-1])): c.log_weight for c in posterior.components
    }
    oracle_map = enum.as_weight_map()
    gap = _max_rel_weight_gap(main_map, oracle_map)

    moment_gap = 0.0
    by_key = {(h.labels, tuple(sorted(h.theta.items()))): h for h in enum.hypotheses}
    for comp in posterior.components:
        hyp = by_key[(comp.labels, tuple(comp.history[-1]))]
        for lab in comp.labels:
            main_mean = moment_match(comp.track_densities[lab]).mean
            oracle_mean = moment_match(hyp.marginals[lab].normalized()).mean
            denom = max(1.0, float(np.linalg.norm(oracle_mean)))
            moment_gap = max(moment_gap, float(np.linalg.norm(main_mean - oracle_mean)) / denom)

    ok = gap < 1e-10 and moment_gap < 1e-8
    return (
        "enumeration equivalence",
        ok,
        f"{len(posterior.components)} hypotheses, weight gap {gap:.2e}, marginal gap {moment_gap:.2e}",
    )


def check_gibbs_law(sweeps: int = 20000, seed: int = 11) -> tuple[str, bool, str]:
    """Gibbs long-run frequencies match the normalized cost-products."""
    scenario = toy_scenario(p_t=0.05, n_birth=1)
    component = component_with_tracks([[5.0, -3.0, 4.0, 1.5]])
    rows = assignment.prepare_rows(component, 3, scenario)
    Z = np.array([[9.5, -1.0], [-14.0, 4.0]])
    table = assignment.build_cost_table(rows, Z, scenario.sensor, temper=(0.9, 0.9, 1.0))
    exact = oracle.gamma_distribution(table)
    rng = np.random.default_rng(seed)
    samples = assignment.gibbs_sample(table, assignment.default_init(table), sweeps, rng)
    counts: dict = {}
    for vec in samples:
        counts[vec] = counts.get(vec, 0) + 1
    tv = 0.5 * sum(
        abs(counts.get(vec, 0) / sweeps - p) for vec, p in exact.items()
    ) + 0.5 * sum(c / sweeps for vec, c in counts.items() if vec not in exact)
    ok = tv < 0.05
    return "gibbs stationary law", ok, f"TV distance {tv:.4f} over {len(exact)} states"


def check_no_spawn_reduction(seed: int = 3) -> tuple[str, bool, str]:
    """With spawning off the recursion matches the no-spawn reference filter."""
    scenario = toy_scenario(p_t=0.0, n_birth=1, p_s=0.95, p_d=0.9)
    params = exhaustive_params(scenario)
    rng = np.random.default_rng(seed)
    density = empty_density()
    reference = oracle.reference_empty()
    worst = 0.0
    for time in range(1, 3):
        Z = rng.uniform(-60, 60, size=(2, 2))
        density, _ = joint_predict_update(density, Z, scenario, time, params=params)
        reference = oracle.reference_no_spawn_update(reference, Z, scenario, time)
        ref_map = {(c.labels, c.history): c.log_weight for c in reference}
        worst = max(worst, _max_rel_weight_gap(density_weight_map(density), ref_map))
    ok = worst < 1e-10
    return "no-spawn reduction", ok, f"max relative weight gap {worst:.2e} over 2 scans"


def check_ospa(seed: int = 5) -> tuple[str, bool, str]:
    """Assignment-based OSPA equals brute force and satisfies metric axioms."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(40):
        X = rng.uniform(-50, 50, size=(rng.integers(0, 5), 2))
        Y = rng.uniform(-50, 50, size=(rng.integers(0, 5), 2))
        a = metrics.ospa(X, Y, 25.0, 2.0)
        b = oracle.ospa_bruteforce(X, Y, 25.0, 2.0)
        worst = max(worst, max(abs(x - y) for x, y in zip(a, b)))
    axiom_violation = 0.0
    for _ in range(100):
        pts = [rng.uniform(-50, 50, size=(rng.integers(0, 4), 2)) for _ in range(3)]
        d01 = metrics.ospa(pts[0], pts[1], 30.0, 1.0)[0]
        d10 = metrics.ospa(pts[1], pts[0], 30.0, 1.0)[0]
        d02 = metrics.ospa(pts[0], pts[2], 30.0, 1.0)[0]
        d12 = metrics.ospa(pts[1], pts[2], 30.0, 1.0)[0]
        dii = metrics.ospa(pts[0], pts[0], 30.0, 1.0)[0]
        axiom_violation = max(
            axiom_violation, abs(d01 - d10), dii, d02 - (d01 + d12)
        )
    ok = worst < 1e-12 and axiom_violation < 1e-9
    return "ospa exactness and axioms", ok, f"oracle gap {worst:.2e}, axiom slack {axiom_violation:.2e}"


def check_truth_script() -> tuple[str, bool, str]:
    """The bundled scenario honours its stated event times and geometry."""
    scenario = load_scenario(None)
    truth = simulator.generate_truth(scenario)
    labels = {str(t.label) for t in truth if t.alive(scenario.montecarlo.horizon)}
    expected = {
        "1,1,10,1,56,1",
        "2,2,11,1,58,1",
        "3,3,12,1,60,1",
        "1,1,10,1",
        "2,2,11,1",
        "3,3,12,1",
        "55,3",
        "57,1",
        "59,2",
    }
    ok = labels == expected
    return "truth script", ok, f"{len(labels)} tracks alive at horizon"


def run_all() -> list[tuple[str, bool, str]]:
    return [
        check_enumeration_equivalence(),
        check_gibbs_law(),
        check_no_spawn_reduction(),
        check_ospa(),
        check_truth_script(),
    ]
