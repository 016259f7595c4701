"""Ground-truth trajectory generation and measurement simulation.

The bundled scenario is a 100-scan planar family with three birth regions.
An object appears in each region during the first scans and generates a
single first-generation spawn before dying; the first-generation tracks
cross at the origin at scan 45 and later each generate a second-generation
spawn; a late birth appears in every region and crosses paths with a
second-generation track near the end.  Trajectories are piecewise
constant-velocity through scripted waypoints, so every stated event time
and position holds exactly; in particular every spawn track starts exactly
one offset distance from its parent.  Truth is deterministic; randomness
enters only through detection, measurement noise and clutter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .labels import Label, format_label, make_birth_label, make_spawn_label, parse_label
from .metrics import AncestryTruth
from .models import Scenario, SensorModel

PARENT_SPEED = 10.0  # m/s, birth tracks after their dwell phase
PARENT_DEATH_LAG = 5  # scans a parent remains alive after spawning
PARENT_HEADINGS_DEG = (0.0, 240.0, 120.0)  # per birth region
DWELL_SCANS = 4  # newly appeared tracks linger near their start point
DWELL_SPEED = 2.0  # m/s during the dwell phase; matches near-rest appearance priors
GEN1_SPAWN_SCANS = (10, 11, 12)
ORIGIN_CROSS_SCAN = 45
ORIGIN_CROSS_RADIUS = 12.0  # arrival ring keeps the crossing tracks distinct
ORIGIN_CROSS_ANGLES_DEG = (90.0, 210.0, 330.0)
GEN2_SPAWN_SCANS = (56, 58, 60)
LATE_BIRTH_SCANS = {3: 55, 1: 57, 2: 59}  # region -> scan, matching late labels
GEN2_CROSSINGS = (  # (scan, position) where lineage r's gen-2 meets a late birth
    (82, (-250.0, -433.0)),
    (84, (-260.0, 430.0)),
    (86, (507.0, 26.0)),
)
LATE_CROSSING_FOR_REGION = {3: 0, 1: 1, 2: 2}  # late birth region -> crossing index


@dataclass(frozen=True)
class TruthTrack:
    """One true trajectory; states[j] is the state at scan birth_scan + j."""

    label: Label
    birth_scan: int
    death_scan: int  # first scan the track is absent
    states: np.ndarray

    def alive(self, scan: int) -> bool:
        return self.birth_scan <= scan < self.death_scan

    def state(self, scan: int) -> np.ndarray:
        if not self.alive(scan):
            raise KeyError(f"track {self.label} not alive at scan {scan}")
        return self.states[scan - self.birth_scan]


@dataclass(frozen=True)
class Scan:
    time: int
    measurements: np.ndarray  # (m, 2)


def _waypoint_states(waypoints: list[tuple[int, np.ndarray]], last_scan: int, dt: float) -> np.ndarray:
    """Piecewise constant-velocity states through waypoints.

    The final segment's velocity persists beyond the last waypoint up to
    ``last_scan``; a single-waypoint track stays at rest.
    """
    first = waypoints[0][0]
    states = np.zeros((last_scan - first + 1, 4))
    for i, (start, pos) in enumerate(waypoints):
        pos = np.asarray(pos, dtype=float)
        if i + 1 < len(waypoints):
            end, nxt = waypoints[i + 1]
            vel = (np.asarray(nxt, dtype=float) - pos) / ((end - start) * dt)
            span = range(start, end)
        else:
            if i > 0:
                prev_start, prev_pos = waypoints[i - 1]
                vel = (pos - np.asarray(prev_pos, dtype=float)) / ((start - prev_start) * dt)
            else:
                vel = np.zeros(2)
            span = range(start, last_scan + 1)
        for k in span:
            p = pos + vel * (k - start) * dt
            states[k - first] = np.array([p[0], p[1], vel[0], vel[1]])
    return states


def _dwell_then_goto(
    start_scan: int, start_pos: np.ndarray, target_scan: int, target_pos: np.ndarray, dt: float
) -> list[tuple[int, np.ndarray]]:
    """Waypoints for a track appearing near rest, then cruising to an event.

    The appearance prior models new objects at rest, so each track drifts
    slowly for a few scans before its constant-velocity leg; the leg still
    reaches the target position at the target scan exactly.
    """
    start_pos = np.asarray(start_pos, dtype=float)
    target_pos = np.asarray(target_pos, dtype=float)
    dwell_end = start_scan + DWELL_SCANS
    if target_scan <= dwell_end + 1:
        return [(start_scan, start_pos), (target_scan, target_pos)]
    direction = target_pos - start_pos
    norm = float(np.linalg.norm(direction))
    step = direction / norm * DWELL_SPEED * DWELL_SCANS * dt if norm > 1e-9 else np.zeros(2)
    return [
        (start_scan, start_pos),
        (dwell_end, start_pos + step),
        (target_scan, target_pos),
    ]


def generate_truth(scenario: Scenario) -> list[TruthTrack]:
    """Deterministic scripted truth for the bundled scenario family."""
    horizon = scenario.montecarlo.horizon
    dt = scenario.motion.dt
    regions = scenario.birth.regions
    n_regions = min(len(regions), 3)
    distance = sorted(scenario.spawn.offsets, key=lambda o: o[1])[len(scenario.spawn.offsets) // 2][0]
    tracks: list[TruthTrack] = []

    def clip_waypoints(waypoints):
        kept = [(s, p) for s, p in waypoints if s <= horizon]
        return kept if kept else waypoints[:1]

    for r in range(n_regions):
        region = regions[r]
        birth_scan = r + 1
        if birth_scan > horizon:
            continue
        mean = region.density.means[0][:2]
        heading = math.radians(PARENT_HEADINGS_DEG[r])
        direction = np.array([math.cos(heading), math.sin(heading)])
        t1 = GEN1_SPAWN_SCANS[r]
        parent_label = make_birth_label(birth_scan, region.label_index)
        parent_death = min(t1 + PARENT_DEATH_LAG + 1, horizon + 1)
        dwell_end = birth_scan + DWELL_SCANS
        parent_way = [(birth_scan, mean)]
        if parent_death - 1 > dwell_end:
            parent_way.append((dwell_end, mean + direction * DWELL_SPEED * DWELL_SCANS * dt))
            parent_way.append(
                (
                    parent_death - 1,
                    parent_way[-1][1] + direction * PARENT_SPEED * (parent_death - 1 - dwell_end) * dt,
                )
            )
        else:
            parent_way.append((parent_death - 1, mean + direction * DWELL_SPEED * (parent_death - 1 - birth_scan) * dt))
        parent_way = clip_waypoints(parent_way)
        parent_states = _waypoint_states(parent_way, min(parent_death - 1, horizon), dt)
        tracks.append(TruthTrack(parent_label, birth_scan, parent_death, parent_states))
        if t1 > horizon:
            continue

        # first-generation spawn: offset from the parent, then through the origin ring
        parent_pos_t1 = parent_states[t1 - birth_scan][:2]
        offset_dir = heading - math.pi / 2
        spawn_pos = parent_pos_t1 + distance * np.array([math.cos(offset_dir), math.sin(offset_dir)])
        ring = math.radians(ORIGIN_CROSS_ANGLES_DEG[r])
        origin_pt = ORIGIN_CROSS_RADIUS * np.array([math.cos(ring), math.sin(ring)])
        gen1_label = make_spawn_label(parent_label, t1, 1)
        gen1_way = clip_waypoints(_dwell_then_goto(t1, spawn_pos, ORIGIN_CROSS_SCAN, origin_pt, dt))
        gen1_states = _waypoint_states(gen1_way, horizon, dt)
        tracks.append(TruthTrack(gen1_label, t1, horizon + 1, gen1_states))

        t2 = GEN2_SPAWN_SCANS[r]
        if t2 > horizon:
            continue
        gen1_at_t2 = gen1_states[t2 - t1]
        g1_heading = math.atan2(gen1_at_t2[3], gen1_at_t2[2])
        g1_offset_dir = g1_heading - math.pi / 2
        gen2_pos = gen1_at_t2[:2] + distance * np.array(
            [math.cos(g1_offset_dir), math.sin(g1_offset_dir)]
        )
        cross_scan, cross_pos = GEN2_CROSSINGS[r]
        gen2_label = make_spawn_label(gen1_label, t2, 1)
        gen2_way = clip_waypoints(_dwell_then_goto(t2, gen2_pos, cross_scan, np.asarray(cross_pos), dt))
        gen2_states = _waypoint_states(gen2_way, horizon, dt)
        tracks.append(TruthTrack(gen2_label, t2, horizon + 1, gen2_states))

    for r in range(n_regions):
        region = regions[r]
        region_idx = region.label_index
        late_scan = LATE_BIRTH_SCANS.get(region_idx)
        if late_scan is None or late_scan > horizon:
            continue
        cross_scan, cross_pos = GEN2_CROSSINGS[LATE_CROSSING_FOR_REGION[region_idx]]
        mean = region.density.means[0][:2]
        late_label = make_birth_label(late_scan, region_idx)
        late_way = clip_waypoints(_dwell_then_goto(late_scan, mean, cross_scan, np.asarray(cross_pos), dt))
        late_states = _waypoint_states(late_way, horizon, dt)
        tracks.append(TruthTrack(late_label, late_scan, horizon + 1, late_states))

    return sorted(tracks, key=lambda t: t.label)


def truth_states_at(tracks: list[TruthTrack], scan: int) -> tuple[list[Label], np.ndarray]:
    alive = [t for t in tracks if t.alive(scan)]
    if not alive:
        return [], np.empty((0, 4))
    return [t.label for t in alive], np.array([t.state(scan) for t in alive])


def truth_cardinality(tracks: list[TruthTrack], horizon: int) -> np.ndarray:
    return np.array(
        [sum(t.alive(k) for t in tracks) for k in range(1, horizon + 1)], dtype=float
    )


def generate_scan(
    states: np.ndarray, sensor: SensorModel, rng: np.random.Generator, time: int = 0
) -> Scan:
    """Detections with probability p_D plus Poisson clutter, one scan."""
    states = np.atleast_2d(states) if np.size(states) else np.empty((0, 4))
    chol = np.linalg.cholesky(sensor.R)
    detections = []
    for x in states:
        if rng.random() < sensor.p_d:
            detections.append(sensor.H @ x + chol @ rng.standard_normal(2))
    clutter = sensor.sample_clutter(rng)
    if detections:
        measurements = np.vstack([np.array(detections), clutter])
    else:
        measurements = clutter
    return Scan(time=time, measurements=measurements)


def simulate_scans(
    tracks: list[TruthTrack], scenario: Scenario, rng: np.random.Generator
) -> list[Scan]:
    out = []
    for k in range(1, scenario.montecarlo.horizon + 1):
        _, states = truth_states_at(tracks, k)
        out.append(generate_scan(states, scenario.sensor, rng, time=k))
    return out


def ancestry_truth(scenario: Scenario, tracks: list[TruthTrack]) -> AncestryTruth:
    """Ground-truth lineage facts derived from the generated truth labels."""
    gen1_times: dict[int, int] = {}
    gen2_times: dict[int, int] = {}
    for t in tracks:
        region = t.label.path[1]
        if t.label.generation == 1:
            gen1_times[region] = t.label.last_time
        elif t.label.generation == 2:
            gen2_times[region] = t.label.last_time
    means = np.array([r.density.means[0][:2] for r in scenario.birth.regions])
    distance = max(d for d, _ in scenario.spawn.offsets)
    return AncestryTruth(
        region_means=means,
        gen1_times=gen1_times,
        gen2_times=gen2_times,
        gate=3.0 * scenario.birth_sigma,
        horizon=scenario.montecarlo.horizon,
        spawn_distance=distance,
    )


def truth_to_json(tracks: list[TruthTrack], horizon: int) -> str:
    doc = {
        "horizon": horizon,
        "tracks": [
            {
                "label": format_label(t.label),
                "birth_scan": t.birth_scan,
                "death_scan": t.death_scan,
                "states": t.states.tolist(),
            }
            for t in tracks
        ],
    }
    return json.dumps(doc, indent=2)


def truth_from_json(text: str) -> list[TruthTrack]:
    doc = json.loads(text)
    return [
        TruthTrack(
            label=parse_label(entry["label"]),
            birth_scan=int(entry["birth_scan"]),
            death_scan=int(entry["death_scan"]),
            states=np.asarray(entry["states"], dtype=float),
        )
        for entry in doc["tracks"]
    ]


def write_scans_csv(path, scans: list[Scan]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scan", "x", "y"])
        for scan in scans:
            for z in scan.measurements:
                writer.writerow([scan.time, f"{z[0]:.10g}", f"{z[1]:.10g}"])
