"""State extraction and first-moment statistics of a filtering density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianMixture, moment_match
from .glmb import GlmbDensity
from .labels import Label


@dataclass(frozen=True)
class TrackEstimate:
    """One extracted track: moment-matched state and existence probability."""

    label: Label
    mean: np.ndarray
    cov: np.ndarray
    existence: float


def cardinality_distribution(density: GlmbDensity) -> np.ndarray:
    """rho(n) = total weight of components with n labels."""
    sizes = [len(c.labels) for c in density.components]
    rho = np.zeros(max(sizes, default=0) + 1)
    for comp, n in zip(density.components, sizes):
        rho[n] += np.exp(comp.log_weight)
    return rho


def existence(density: GlmbDensity, label: Label) -> float:
    """Probability that the track exists: summed weight of components containing it."""
    return float(
        sum(np.exp(c.log_weight) for c in density.components if label in c.track_densities)
    )


def extract_estimates(density: GlmbDensity) -> list[TrackEstimate]:
    """MAP-cardinality extractor.

    Picks n* maximizing the cardinality distribution (ties towards smaller
    n), then the highest-weight component of that cardinality, and reports
    each of its tracks as a moment-matched Gaussian with the label's
    existence probability.  Estimates are sorted by label.
    """
    rho = cardinality_distribution(density)
    n_star = int(np.argmax(rho))
    best = None
    for comp in density.components:
        if len(comp.labels) != n_star:
            continue
        if best is None or comp.log_weight > best.log_weight:
            best = comp
    if best is None or n_star == 0:
        return []
    out = []
    for label in best.labels:
        g = moment_match(best.track_densities[label])
        out.append(
            TrackEstimate(label=label, mean=g.mean, cov=g.cov, existence=existence(density, label))
        )
    return sorted(out, key=lambda e: e.label)


def all_labels(density: GlmbDensity) -> list[Label]:
    labels = set()
    for comp in density.components:
        labels.update(comp.labels)
    return sorted(labels)


def phd(density: GlmbDensity, label: Label) -> tuple[float, GaussianMixture | None]:
    """Intensity contribution of one label: its mass and blended density.

    The blended density mixes the label's per-component posteriors with the
    component weights; its integral (the returned mass) equals the label's
    existence probability.
    """
    weights, means, covs = [], [], []
    mass = 0.0
    for comp in density.components:
        mix = comp.track_densities.get(label)
        if mix is None:
            continue
        w = np.exp(comp.log_weight)
        mass += w
        norm = mix.normalized()
        weights.extend(w * norm.weights)
        means.extend(norm.means)
        covs.extend(norm.covs)
    if mass == 0.0:
        return 0.0, None
    blended = GaussianMixture(np.array(weights), np.array(means), np.array(covs))
    return float(mass), blended


def phd_mass(density: GlmbDensity) -> float:
    """Total intensity mass; equals the expected cardinality."""
    return float(sum(existence(density, lab) for lab in all_labels(density)))


def expected_cardinality(density: GlmbDensity) -> float:
    rho = cardinality_distribution(density)
    return float(np.arange(len(rho)) @ rho)
