import json

import numpy as np
import pytest

from spawnglmb.models import load_scenario
from spawnglmb.simulator import (
    GEN2_CROSSINGS,
    ancestry_truth,
    generate_scan,
    generate_truth,
    simulate_scans,
    truth_cardinality,
    truth_from_json,
    truth_states_at,
    truth_to_json,
)


@pytest.fixture(scope="module")
def scenario():
    return load_scenario(None)


@pytest.fixture(scope="module")
def truth(scenario):
    return generate_truth(scenario)


def test_final_labels_match_scripted_truth(truth, scenario):
    alive = {str(t.label) for t in truth if t.alive(scenario.montecarlo.horizon)}
    assert alive == {
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


def test_cardinality_profile(truth):
    card = truth_cardinality(truth, 100)
    assert card[2] == 3  # all three initial births present by scan 3
    assert card[30] == 3
    assert card[59] == 9
    assert card[99] == 9
    assert card.max() == 9


def test_spawn_tracks_start_at_offset_distance(truth, scenario):
    by = {str(t.label): t for t in truth}
    distance = 70.0
    for child, parent in (
        ("1,1,10,1", "1,1"),
        ("2,2,11,1", "2,2"),
        ("3,3,12,1", "3,3"),
        ("1,1,10,1,56,1", "1,1,10,1"),
        ("2,2,11,1,58,1", "2,2,11,1"),
        ("3,3,12,1,60,1", "3,3,12,1"),
    ):
        t0 = by[child].birth_scan
        gap = np.linalg.norm(by[child].state(t0)[:2] - by[parent].state(t0)[:2])
        assert gap == pytest.approx(distance, abs=1e-9)


def test_first_generation_tracks_near_origin_at_crossing(truth):
    by = {str(t.label): t for t in truth}
    for lab in ("1,1,10,1", "2,2,11,1", "3,3,12,1"):
        assert np.linalg.norm(by[lab].state(45)[:2]) < 25.0


def test_late_crossings_exact(truth):
    by = {str(t.label): t for t in truth}
    pairs = (
        ("1,1,10,1,56,1", "55,3", 0),
        ("2,2,11,1,58,1", "57,1", 1),
        ("3,3,12,1,60,1", "59,2", 2),
    )
    for gen2, late, idx in pairs:
        scan, pos = GEN2_CROSSINGS[idx]
        np.testing.assert_allclose(by[gen2].state(scan)[:2], pos, atol=1e-9)
        np.testing.assert_allclose(by[late].state(scan)[:2], pos, atol=1e-9)


def test_truth_stays_inside_surveillance_region(truth, scenario):
    lo, hi = scenario.sensor.region[:, 0], scenario.sensor.region[:, 1]
    for t in truth:
        assert np.all(t.states[:, :2] >= lo) and np.all(t.states[:, :2] <= hi)


def test_truth_reproducible(scenario):
    a = generate_truth(scenario)
    b = generate_truth(scenario)
    for ta, tb in zip(a, b):
        assert ta.label == tb.label
        np.testing.assert_array_equal(ta.states, tb.states)


def test_generate_scan_perfect_sensor(scenario):
    cfg = {
        "sensor": {"p_d": 0.999999, "sigma_eps": 1e-6, "clutter_rate": 0.0},
    }
    s = load_scenario(json.dumps(cfg))
    states = np.array([[10.0, 20.0, 1.0, 0.0], [-5.0, 7.0, 0.0, 1.0]])
    scan = generate_scan(states, s.sensor, np.random.default_rng(0), time=1)
    got = sorted(scan.measurements.tolist())
    np.testing.assert_allclose(got, [[-5.0, 7.0], [10.0, 20.0]], atol=1e-3)


def test_generate_scan_no_detection(scenario):
    cfg = {"sensor": {"p_d": 1e-9, "clutter_rate": 5.0}}
    s = load_scenario(json.dumps(cfg))
    states = np.array([[10.0, 20.0, 1.0, 0.0]])
    rng = np.random.default_rng(1)
    counts = [len(generate_scan(states, s.sensor, rng).measurements) for _ in range(200)]
    assert np.mean(counts) == pytest.approx(5.0, rel=0.1)


def test_detection_rate_binomial_mean(scenario):
    states = np.tile(np.array([[0.0, 0.0, 0.0, 0.0]]), (3, 1))
    cfg = {"sensor": {"clutter_rate": 0.0}}
    s = load_scenario(json.dumps(cfg))
    rng = np.random.default_rng(2)
    total = sum(len(generate_scan(states, s.sensor, rng).measurements) for _ in range(10000))
    assert total / 10000 == pytest.approx(3 * 0.88, rel=0.01)


def test_scans_inside_region(scenario, truth):
    rng = np.random.default_rng(3)
    scans = simulate_scans(truth, scenario, rng)
    assert len(scans) == 100
    for scan in scans[:20]:
        assert np.all(np.abs(scan.measurements) <= 1000.0 + 50.0)


def test_truth_json_round_trip(truth, scenario):
    text = truth_to_json(truth, scenario.montecarlo.horizon)
    back = truth_from_json(text)
    assert [t.label for t in back] == [t.label for t in truth]
    for ta, tb in zip(truth, back):
        np.testing.assert_allclose(ta.states, tb.states)
        assert (ta.birth_scan, ta.death_scan) == (tb.birth_scan, tb.death_scan)


def test_truth_states_at(truth):
    labels, states = truth_states_at(truth, 45)
    assert len(labels) == 3
    assert states.shape == (3, 4)
    labels_empty, states_empty = truth_states_at([], 1)
    assert labels_empty == [] and states_empty.shape == (0, 4)


def test_ancestry_truth_extraction(scenario, truth):
    info = ancestry_truth(scenario, truth)
    assert info.gen1_times == {1: 10, 2: 11, 3: 12}
    assert info.gen2_times == {1: 56, 2: 58, 3: 60}
    assert info.gate == pytest.approx(30.0)
    assert info.era_split == pytest.approx((12 + 56) / 2)
