import math

import numpy as np
import pytest

from spawnglmb import estimation, oracle
from spawnglmb.gaussian import Gaussian, GaussianMixture, moment_match
from spawnglmb.glmb import (
    GlmbComponent,
    GlmbDensity,
    aggregate,
    cap_components,
    compute_family_posteriors,
    empty_density,
    joint_predict_update,
    validate_density,
)
from spawnglmb.labels import Label, make_birth_label, make_spawn_label
from spawnglmb.models import load_scenario
from spawnglmb.selfcheck import (
    component_with_tracks,
    density_weight_map,
    exhaustive_params,
    toy_scenario,
)


def test_family_posterior_all_absent_constant():
    scenario = load_scenario(None)  # p_S=0.99, p_T=0.01, M=1
    parent = make_birth_label(1, 1)
    prior = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    marginals, log_e = compute_family_posteriors(
        parent, prior, ((), {}), np.empty((0, 2)), scenario, time=2
    )
    assert marginals == {}
    assert math.exp(log_e) == pytest.approx(0.01 * 0.99, rel=1e-12)  # (1-p_S)(1-p_T)


def test_family_posterior_survivor_missed_constant():
    scenario = load_scenario(None)
    parent = make_birth_label(1, 1)
    prior = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    marginals, log_e = compute_family_posteriors(
        parent, prior, ((parent,), {parent: 0}), np.empty((0, 2)), scenario, time=2
    )
    assert set(marginals) == {parent}
    # p_S (1 - p_T) q_D, unit Gaussian integral
    assert math.exp(log_e) == pytest.approx(0.99 * 0.99 * 0.12, rel=1e-12)


def test_family_joint_update_differs_from_independent_and_matches_oracle():
    # parent and spawn both detected: the cross-covariance couples them
    scenario = toy_scenario(p_t=0.2, n_birth=1)
    parent = make_birth_label(1, 1)
    prior = GaussianMixture.single(Gaussian(np.array([0.0, 0.0, 3.0, 1.0]), 4.0 * np.eye(4)))
    spawn = make_spawn_label(parent, 4, 1)
    Z = np.array([[3.5, 0.5], [-27.0, 9.0]])
    hypothesis = ((parent, spawn), {parent: 1, spawn: 2})
    marginals, log_e = compute_family_posteriors(parent, prior, hypothesis, Z, scenario, time=4)

    dense_log_e, dense_marg = oracle._dense_family(prior, 1, (2,), scenario, Z)
    assert log_e == pytest.approx(dense_log_e, rel=1e-10)
    for slot, lab in ((-1, parent), (0, spawn)):
        got = moment_match(marginals[lab])
        want = moment_match(dense_marg[slot].normalized())
        np.testing.assert_allclose(got.mean, want.mean, rtol=1e-8)
        np.testing.assert_allclose(got.cov, want.cov, rtol=1e-7, atol=1e-9)

    # independent (cross-blocks dropped) posterior differs from the joint one
    F, Q = scenario.motion.F, scenario.motion.Q
    from spawnglmb.gaussian import predict_mixture, update_mixture

    indep, _ = update_mixture(
        predict_mixture(prior, F, Q), Z[0], scenario.sensor.H, scenario.sensor.R
    )
    joint_parent = moment_match(marginals[parent])
    assert not np.allclose(joint_parent.mean, moment_match(indep).mean, atol=1e-6)


def test_exhaustive_recursion_matches_enumeration_oracle():
    scenario = toy_scenario(p_t=0.08, n_birth=1)
    component = component_with_tracks([[5.0, -3.0, 4.0, 1.5], [-40.0, 25.0, -2.0, 3.0]])
    prior = GlmbDensity((component,), scan_time=2)
    Z = np.array([[9.5, -1.0], [-36.0, 29.0], [140.0, -160.0]])
    posterior, _ = joint_predict_update(prior, Z, scenario, 3, params=exhaustive_params(scenario))
    enum = oracle.enumerate_posterior(component, Z, scenario, 3)

    main_map = {(c.labels, tuple(c.history[-1])): c.log_weight for c in posterior.components}
    oracle_map = enum.as_weight_map()
    assert set(main_map) == set(oracle_map)
    for key, lw in main_map.items():
        if max(lw, oracle_map[key]) < math.log(1e-280):
            continue  # both vanish at double precision
        assert math.exp(lw) == pytest.approx(math.exp(oracle_map[key]), rel=1e-10)

    # moment preservation: cardinality distribution and per-label mass
    rho_main = estimation.cardinality_distribution(posterior)
    rho_oracle = enum.cardinality_distribution()
    np.testing.assert_allclose(rho_main, rho_oracle, atol=1e-8)
    for lab in estimation.all_labels(posterior):
        assert estimation.existence(posterior, lab) == pytest.approx(
            enum.label_mass(lab), abs=1e-8
        )


def test_empty_measurement_set_high_pd_favors_death():
    scenario = toy_scenario(p_t=0.05, n_birth=1, p_d=0.999)
    component = component_with_tracks([[5.0, -3.0, 4.0, 1.5]])
    prior = GlmbDensity((component,), scan_time=2)
    posterior, _ = joint_predict_update(
        prior, np.empty((0, 2)), scenario, 3, params=exhaustive_params(scenario)
    )
    rho = estimation.cardinality_distribution(posterior)
    assert int(np.argmax(rho)) == 0
    # miss continuations carry the q_D factor, death does not
    best = max(posterior.components, key=lambda c: c.log_weight)
    assert best.labels == ()


def test_no_spawn_reduction_matches_reference_over_scans():
    scenario = toy_scenario(p_t=0.0, n_birth=1, p_s=0.95, p_d=0.9)
    params = exhaustive_params(scenario)
    rng = np.random.default_rng(2)
    density = empty_density()
    reference = oracle.reference_empty()
    for time in range(1, 3):
        Z = rng.uniform(-60, 60, size=(2, 2))
        density, _ = joint_predict_update(density, Z, scenario, time, params=params)
        reference = oracle.reference_no_spawn_update(reference, Z, scenario, time)
        ref_map = {(c.labels, c.history): c.log_weight for c in reference}
        main_map = density_weight_map(density)
        assert set(ref_map) == set(main_map)
        for key in ref_map:
            assert math.exp(main_map[key]) == pytest.approx(
                math.exp(ref_map[key]), rel=1e-10
            )


def test_spawn_labels_only_from_present_parents():
    scenario = toy_scenario(p_t=0.3, n_birth=1)
    component = component_with_tracks([[5.0, -3.0, 4.0, 1.5]])
    prior = GlmbDensity((component,), scan_time=2)
    Z = np.array([[9.5, -1.0], [-20.0, 18.0]])
    posterior, _ = joint_predict_update(prior, Z, scenario, 3, params=exhaustive_params(scenario))
    parent = component.labels[0]
    for comp in posterior.components:
        for lab in comp.labels:
            if lab.generation > 0 and lab.last_time == 3:
                assert Label(lab.path[:-2]) == parent
    assert not validate_density(posterior)


def test_aggregate_merges_duplicates():
    mix = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    lab = make_birth_label(1, 1)
    hist = (((lab, 0),),)
    a = GlmbComponent((lab,), hist, math.log(0.3), {lab: mix})
    b = GlmbComponent((lab,), hist, math.log(0.2), {lab: mix})
    c = GlmbComponent((), ((),), math.log(0.5), {})
    merged = aggregate([a, b, c])
    assert len(merged) == 2
    assert math.exp(merged[0].log_weight) == pytest.approx(0.5)
    assert math.exp(merged[1].log_weight) == pytest.approx(0.5)
    assert merged[0].labels == (lab,)


def test_aggregate_order_and_permutation_invariance():
    mix = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    labs = [make_birth_label(1, i + 1) for i in range(3)]
    comps = [
        GlmbComponent((labs[i],), (((labs[i], 0),),), math.log(w), {labs[i]: mix})
        for i, w in enumerate([0.2, 0.3, 0.5])
    ]
    merged_fwd = aggregate(comps)
    merged_rev = aggregate(comps[::-1])
    fwd = {c.labels: math.exp(c.log_weight) for c in merged_fwd}
    rev = {c.labels: math.exp(c.log_weight) for c in merged_rev}
    assert fwd.keys() == rev.keys()
    for key in fwd:
        assert fwd[key] == pytest.approx(rev[key], abs=1e-12)
    # all distinct: weights unchanged, order preserved
    assert [c.labels for c in merged_fwd] == [(labs[0],), (labs[1],), (labs[2],)]


def test_bounded_history_depth_merges_old_branches():
    mix = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    lab = make_birth_label(1, 1)
    old_a = ((lab, 1),)
    old_b = ((lab, 2),)
    recent = ((lab, 0),)
    a = GlmbComponent((lab,), (old_a, recent), math.log(0.4), {lab: mix})
    b = GlmbComponent((lab,), (old_b, recent), math.log(0.6), {lab: mix})
    assert len(aggregate([a, b])) == 2  # full history keeps them apart
    merged = aggregate([a, b], history_depth=1)
    assert len(merged) == 1
    assert math.exp(merged[0].log_weight) == pytest.approx(1.0)


def test_cap_components_behaviour():
    mix = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    labs = [make_birth_label(1, i + 1) for i in range(3)]
    comps = tuple(
        GlmbComponent((labs[i],), (), math.log(w), {labs[i]: mix})
        for i, w in enumerate([0.5, 0.3, 0.2])
    )
    density = GlmbDensity(comps, scan_time=1)
    assert len(cap_components(density, 5).components) == 3
    capped = cap_components(density, 1)
    assert len(capped.components) == 1
    assert capped.components[0].labels == (labs[0],)
    assert math.exp(capped.components[0].log_weight) == pytest.approx(1.0)
    two = cap_components(density, 2)
    total = sum(math.exp(c.log_weight) for c in two.components)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_validate_density_flags_problems():
    mix = GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4)))
    lab = make_birth_label(1, 1)
    good = GlmbDensity(
        (GlmbComponent((lab,), (), 0.0, {lab: mix}),), scan_time=1
    )
    assert validate_density(good) == []
    bad_weight = GlmbDensity(
        (GlmbComponent((lab,), (), math.log(0.5), {lab: mix}),), scan_time=1
    )
    assert any("sum" in p for p in validate_density(bad_weight))
    bad_keys = GlmbDensity(
        (GlmbComponent((lab,), (), 0.0, {}),), scan_time=1
    )
    assert any("keys" in p for p in validate_density(bad_keys))


def test_rejects_empty_prior_and_missing_rng():
    scenario = toy_scenario()
    with pytest.raises(ValueError):
        joint_predict_update(GlmbDensity((), 0), np.empty((0, 2)), scenario, 1,
                             params=exhaustive_params(scenario))
    with pytest.raises(ValueError):
        joint_predict_update(empty_density(), np.empty((0, 2)), scenario, 1)


def test_gibbs_mode_weights_are_exact_on_sampled_set():
    # sampled hypotheses carry the same exact weights as in exhaustive mode,
    # up to renormalization over the sampled subset
    scenario = toy_scenario(p_t=0.05, n_birth=1)
    component = component_with_tracks([[5.0, -3.0, 4.0, 1.5]])
    prior = GlmbDensity((component,), scan_time=2)
    Z = np.array([[9.5, -1.0]])
    exact, _ = joint_predict_update(prior, Z, scenario, 3, params=exhaustive_params(scenario))
    exact_map = {(c.labels, c.history): c.log_weight for c in exact.components}

    rng = np.random.default_rng(0)
    sampled, _ = joint_predict_update(prior, Z, scenario, 3, rng=rng)
    sampled_map = {(c.labels, c.history): c.log_weight for c in sampled.components}
    assert set(sampled_map) <= set(exact_map)
    keys = sorted(sampled_map, key=repr)
    log_shift = None
    for key in keys:
        diff = sampled_map[key] - exact_map[key]
        if log_shift is None:
            log_shift = diff
        assert diff == pytest.approx(log_shift, abs=1e-9)
