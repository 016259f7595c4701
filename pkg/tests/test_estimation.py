import math

import numpy as np
import pytest

from spawnglmb.estimation import (
    all_labels,
    cardinality_distribution,
    existence,
    expected_cardinality,
    extract_estimates,
    phd,
    phd_mass,
)
from spawnglmb.gaussian import Gaussian, GaussianMixture
from spawnglmb.glmb import GlmbComponent, GlmbDensity
from spawnglmb.labels import make_birth_label


def mk_mix(x=0.0):
    return GaussianMixture.single(Gaussian(np.array([x, 0.0, 0.0, 0.0]), np.eye(4)))


def density_from(spec):
    """spec: list of (weight, labels, means-by-label)."""
    comps = []
    for w, labels, means in spec:
        comps.append(
            GlmbComponent(
                tuple(sorted(labels)),
                (),
                math.log(w),
                {lab: mk_mix(x) for lab, x in zip(labels, means)},
            )
        )
    return GlmbDensity(tuple(comps), scan_time=1)


L1, L2, L3 = (make_birth_label(1, i) for i in (1, 2, 3))


def test_cardinality_single_component():
    d = density_from([(1.0, (L1, L2), (0.0, 1.0))])
    np.testing.assert_allclose(cardinality_distribution(d), [0, 0, 1])


def test_cardinality_two_components():
    d = density_from([(0.6, (L1,), (0.0,)), (0.4, (L1, L2, L3), (0.0, 1.0, 2.0))])
    rho = cardinality_distribution(d)
    np.testing.assert_allclose(rho, [0, 0.6, 0, 0.4])
    assert rho.sum() == pytest.approx(1.0, abs=1e-9)


def test_cardinality_mean_equals_phd_mass():
    rng = np.random.default_rng(4)
    for _ in range(20):
        spec = []
        weights = rng.dirichlet(np.ones(4))
        for w in weights:
            n = int(rng.integers(0, 4))
            labels = tuple(make_birth_label(1, i + 1) for i in range(n))
            spec.append((w, labels, list(range(n))))
        d = density_from(spec)
        assert phd_mass(d) == pytest.approx(expected_cardinality(d), abs=1e-9)


def test_extract_single_component():
    d = density_from([(1.0, (L1, L2), (0.0, 5.0))])
    est = extract_estimates(d)
    assert [e.label for e in est] == [L1, L2]
    assert est[1].mean[0] == pytest.approx(5.0)
    assert all(e.existence == pytest.approx(1.0) for e in est)


def test_extract_empty_favored():
    d = density_from([(0.7, (), ()), (0.3, (L1,), (0.0,))])
    assert extract_estimates(d) == []


def test_extract_tie_breaks_to_smaller_cardinality():
    d = density_from([(0.5, (L1,), (0.0,)), (0.5, (L1, L2), (0.0, 1.0))])
    est = extract_estimates(d)
    assert [e.label for e in est] == [L1]


def test_extract_invariant_under_reorder_and_scaling():
    specs = [(0.25, (L1,), (0.0,)), (0.4, (L1, L2), (0.0, 1.0)), (0.35, (L2,), (1.0,))]
    d1 = density_from(specs)
    d2 = density_from(specs[::-1])
    est1 = extract_estimates(d1)
    est2 = extract_estimates(d2)
    assert [e.label for e in est1] == [e.label for e in est2]
    # uniform scaling of unnormalized weights leaves the argmax unchanged
    comps = tuple(
        GlmbComponent(c.labels, c.history, c.log_weight + math.log(3.0), c.track_densities)
        for c in d1.components
    )
    est3 = extract_estimates(GlmbDensity(comps, 1))
    assert [e.label for e in est3] == [e.label for e in est1]


def test_phd_label_everywhere_and_nowhere():
    d = density_from([(0.6, (L1,), (0.0,)), (0.4, (L1, L2), (0.0, 1.0))])
    mass, blended = phd(d, L1)
    assert mass == pytest.approx(1.0)
    assert blended is not None
    mass3, blended3 = phd(d, L3)
    assert mass3 == 0.0 and blended3 is None
    assert existence(d, L2) == pytest.approx(0.4)


def test_phd_blended_mean_is_weight_average():
    d = density_from([(0.25, (L1,), (0.0,)), (0.75, (L1,), (8.0,))])
    mass, blended = phd(d, L1)
    assert mass == pytest.approx(1.0)
    mean = blended.normalized().weights @ blended.means
    assert mean[0] == pytest.approx(0.25 * 0.0 + 0.75 * 8.0)
    assert sorted(all_labels(d)) == [L1]
