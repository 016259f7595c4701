import json
import math

import numpy as np
import pytest

from spawnglmb.models import (
    ConfigError,
    MotionModel,
    default_config,
    load_scenario,
    spawn_offset,
    spawn_offset_mixture,
)


def test_constant_velocity_blocks_match_direct_formula():
    dt, sig = 1.0, 1.0
    m = MotionModel.constant_velocity(dt, sig)
    F_expected = np.array(
        [[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float
    )
    Q_expected = sig**2 * np.array(
        [
            [dt**4 / 4, 0, dt**3 / 2, 0],
            [0, dt**4 / 4, 0, dt**3 / 2],
            [dt**3 / 2, 0, dt**2, 0],
            [0, dt**3 / 2, 0, dt**2],
        ]
    )
    np.testing.assert_array_equal(m.F, F_expected)
    np.testing.assert_array_equal(m.Q, Q_expected)


def test_default_scenario_constants():
    s = load_scenario(None)
    assert s.survival.p_s == 0.99
    assert s.sensor.p_d == 0.88
    assert s.spawn.p_t == 0.01
    assert s.birth.regions[0].prob == 0.02
    np.testing.assert_array_equal(s.sensor.R, 100.0 * np.eye(2))
    means = [r.density.means[0].tolist() for r in s.birth.regions]
    assert means == [
        [0.0, 500.0, 0.0, 0.0],
        [433.0, -250.0, 0.0, 0.0],
        [-433.0, -250.0, 0.0, 0.0],
    ]
    for r in s.birth.regions:
        np.testing.assert_array_equal(r.density.covs[0], 100.0 * np.eye(4))


def test_clutter_rate_matches_intensity_times_area():
    s = load_scenario(None)
    assert s.sensor.area == pytest.approx(2000.0 * 2000.0)
    assert s.sensor.clutter_intensity == pytest.approx(66.0 / 4e6)
    assert s.sensor.clutter_intensity == pytest.approx(1.65e-5)
    inside = s.sensor.clutter_loglik(np.array([0.0, 0.0]))
    assert inside == pytest.approx(math.log(1.65e-5))
    assert s.sensor.clutter_loglik(np.array([1500.0, 0.0])) == -np.inf


def test_zero_clutter_rate_always_empty():
    cfg = default_config()
    cfg["sensor"]["clutter_rate"] = 0.0
    s = load_scenario(json.dumps(cfg))
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert s.sensor.sample_clutter(rng).shape == (0, 2)


def test_clutter_empirical_mean_count():
    s = load_scenario(None)
    rng = np.random.default_rng(42)
    counts = [len(s.sensor.sample_clutter(rng)) for _ in range(100000)]
    assert np.mean(counts) == pytest.approx(66.0, rel=0.01)


def test_spawn_offset_perpendicular_case():
    # parent heading straight up, bearing -90 deg: offset points along +x
    parent = np.array([0.0, 0.0, 0.0, 5.0])
    d = spawn_offset(parent, math.radians(-90.0), 70.0)
    np.testing.assert_allclose(d[:2], [70.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(d[2:], [0.0, -5.0])


def test_spawn_offset_mirror_symmetry():
    parent = np.array([10.0, -3.0, 4.0, 2.0])
    plus = spawn_offset(parent, math.radians(90.0), 70.0)
    minus = spawn_offset(parent, math.radians(-90.0), 70.0)
    heading = math.atan2(2.0, 4.0)
    rot = np.array(
        [[math.cos(heading), math.sin(heading)], [-math.sin(heading), math.cos(heading)]]
    )
    np.testing.assert_allclose(rot @ plus[:2], -(rot @ minus[:2]), atol=1e-9)


def test_spawn_offset_velocity_cancels_parent():
    rng = np.random.default_rng(1)
    for _ in range(20):
        parent = rng.normal(size=4) * 10
        d = spawn_offset(parent, rng.uniform(-math.pi, math.pi), 70.0)
        np.testing.assert_allclose(d[2:], -parent[2:])


def test_spawn_offset_zero_speed_convention():
    d = spawn_offset(np.zeros(4), math.radians(-90.0), 70.0)
    np.testing.assert_allclose(d[:2], [0.0, -70.0], atol=1e-12)  # heading treated as 0


def test_spawn_offset_mixture_equal_weights(default_scenario):
    mix = spawn_offset_mixture(default_scenario.spawn, np.array([0.0, 0.0, 3.0, 0.0]))
    assert mix.size == 3
    np.testing.assert_allclose(mix.weights, np.full(3, 1.0 / 3.0))
    for mean in mix.means:
        assert np.linalg.norm(mean[:2]) == pytest.approx(70.0)


def test_load_scenario_defaults_and_overrides():
    s = load_scenario(json.dumps({"sensor": {"p_d": 0.5}}))
    assert s.sensor.p_d == 0.5
    assert s.survival.p_s == 0.99  # untouched default
    # missing optional ospa block -> defaults
    assert s.ospa.cutoff == 100.0 and s.ospa.order == 1.0


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"dynamics": {"p_s": -0.1}}, "dynamics.p_s"),
        ({"dynamics": {"p_s": 1.0}}, "dynamics.p_s"),
        ({"sensor": {"p_d": 0.0}}, "sensor.p_d"),
        ({"spawn": {"p_t": -0.2}}, "spawn.p_t"),
        ({"sensor": {"sigma_eps": 0.0}}, "sensor.sigma_eps"),
        ({"montecarlo": {"trials": 0}}, "montecarlo.trials"),
        ({"birth": {"bogus": 1}}, "birth.bogus"),
    ],
)
def test_load_scenario_rejects_invalid(patch, path):
    with pytest.raises(ConfigError) as err:
        load_scenario(json.dumps(patch))
    assert path.split(".")[0] in str(err.value)


def test_load_scenario_rejects_malformed_json():
    with pytest.raises(ConfigError):
        load_scenario("{not json")
