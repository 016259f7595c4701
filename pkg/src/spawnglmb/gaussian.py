"""Gaussian and Gaussian-mixture algebra for linear-Gaussian tracking.

Provides the single-track prediction/update kernels, batched measurement
likelihoods for cost-table construction, and the joint "family" construction
that couples a parent track's survived state with the states it spawns
through their shared pre-transition randomness.  All likelihood bookkeeping
is done in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

LOG_2PI = math.log(2.0 * math.pi)


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class Gaussian:
    """Single Gaussian over a real state vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError(
                f"covariance shape {self.cov.shape} does not match state dim {self.mean.size}"
            )

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted sum of Gaussians stored as parallel arrays.

    ``weights`` has shape (n,), ``means`` (n, d) and ``covs`` (n, d, d).
    Weights are kept as given; :meth:`normalized` rescales them to sum to 1.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covs, dtype=float)
        if c.ndim == 2:
            c = c[None, :, :]
        if not (len(w) == len(m) == len(c)):
            raise ValueError("mixture arrays must have equal leading dimension")
        if np.any(w < 0):
            raise ValueError("mixture weights must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)

    @classmethod
    def single(cls, gaussian: Gaussian, weight: float = 1.0) -> "GaussianMixture":
        return cls(np.array([weight]), gaussian.mean[None, :], gaussian.cov[None, :, :])

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def normalized(self) -> "GaussianMixture":
        total = self.total_weight
        if total <= 0:
            raise ValueError("cannot normalize a zero-mass mixture")
        return GaussianMixture(self.weights / total, self.means, self.covs)

    def component(self, i: int) -> Gaussian:
        return Gaussian(self.means[i], self.covs[i])


def predict(prior: Gaussian, F: np.ndarray, Q: np.ndarray) -> Gaussian:
    """Kalman time update: x+ = F x + w with w ~ N(0, Q)."""
    F = np.asarray(F, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if F.shape[1] != prior.dim:
        raise ValueError(f"transition matrix {F.shape} incompatible with state dim {prior.dim}")
    mean = F @ prior.mean
    cov = _symmetrize(F @ prior.cov @ F.T + Q)
    return Gaussian(mean, cov)


def predict_mixture(prior: GaussianMixture, F: np.ndarray, Q: np.ndarray) -> GaussianMixture:
    F = np.asarray(F, dtype=float)
    Q = np.asarray(Q, dtype=float)
    means = prior.means @ F.T
    covs = np.einsum("ij,njk,lk->nil", F, prior.covs, F) + Q
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    return GaussianMixture(prior.weights, means, covs)


def update(prior: Gaussian, z: np.ndarray, H: np.ndarray, R: np.ndarray) -> tuple[Gaussian, float]:
    """Kalman measurement update, returning the posterior and log-likelihood.

    The log-likelihood is log N(z; H m, H P H' + R).  Raises
    ``np.linalg.LinAlgError`` when the innovation covariance is singular,
    which signals a degenerate measurement model.
    """
    z = np.asarray(z, dtype=float)
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    innovation = z - H @ prior.mean
    S = _symmetrize(H @ prior.cov @ H.T + R)
    try:
        chol = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular innovation covariance: {exc}") from exc
    PHt = prior.cov @ H.T
    gain = cho_solve(chol, PHt.T).T
    mean = prior.mean + gain @ innovation
    cov = _symmetrize(prior.cov - gain @ S @ gain.T)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    maha = float(innovation @ cho_solve(chol, innovation))
    loglik = -0.5 * (z.size * LOG_2PI + log_det + maha)
    return Gaussian(mean, cov), loglik


def update_mixture(
    mix: GaussianMixture, z: np.ndarray, H: np.ndarray, R: np.ndarray
) -> tuple[GaussianMixture, float]:
    """Per-component Kalman update of a mixture.

    Returns the normalized posterior mixture and the log-evidence
    log <mix, N(z; H., R)> accumulated over components.
    """
    means = np.empty_like(mix.means)
    covs = np.empty_like(mix.covs)
    logliks = np.empty(mix.size)
    for i in range(mix.size):
        post, ll = update(mix.component(i), z, H, R)
        means[i] = post.mean
        covs[i] = post.cov
        logliks[i] = ll
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights) + logliks
    log_evidence = float(logsumexp(log_w))
    if not np.isfinite(log_evidence):
        # all components vanish under this measurement
        return GaussianMixture(mix.weights, means, covs), -np.inf
    weights = np.exp(log_w - log_evidence)
    return GaussianMixture(weights, means, covs), log_evidence


def loglik_batch(mix: GaussianMixture, Z: np.ndarray, H: np.ndarray, R: np.ndarray) -> np.ndarray:
    """log <mix, N(z_j; H., R)> for every measurement row z_j of Z.

    Vectorized over mixture components and measurements; used to fill
    cost-table columns.  Planar measurements take a closed-form 2x2 path,
    the generic case falls back to Cholesky solves.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] == 0:
        return np.empty(0)
    mus = mix.means @ H.T  # (n, z)
    S = np.einsum("ij,njk,lk->nil", H, mix.covs, H) + R  # (n, z, z)
    if Z.shape[1] == 2:
        a, b, c = S[:, 0, 0], S[:, 0, 1], S[:, 1, 1]
        det = a * c - b * b
        diff = Z[None, :, :] - mus[:, None, :]  # (n, m, z)
        d0, d1 = diff[..., 0], diff[..., 1]
        maha = (
            c[:, None] * d0 * d0 - 2.0 * b[:, None] * d0 * d1 + a[:, None] * d1 * d1
        ) / det[:, None]
        per_comp = -0.5 * (2.0 * LOG_2PI + np.log(det)[:, None] + maha)
    else:
        per_comp = np.empty((mix.size, Z.shape[0]))
        for i in range(mix.size):
            chol = cho_factor(_symmetrize(S[i]), lower=True)
            diff = Z - mus[i]
            white = cho_solve(chol, diff.T)
            maha = np.sum(diff.T * white, axis=0)
            log_det = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
            per_comp[i] = -0.5 * (Z.shape[1] * LOG_2PI + log_det + maha)
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights)[:, None]
    return logsumexp(log_w + per_comp, axis=0)


@dataclass(frozen=True)
class FamilyBlock:
    """Joint density over a parent's survived state and its spawned states.

    ``member_labels`` lists the members in block order (survived parent
    first when present, then spawned members); ``joint`` is a mixture over
    the stacked state of dimension d * len(member_labels).  The members are
    correlated through the shared parent state: every off-diagonal block of
    each joint covariance equals F P F'.
    """

    member_labels: tuple
    joint: GaussianMixture
    member_dim: int
    log_evidence: float = 0.0

    @property
    def size(self) -> int:
        return len(self.member_labels)



def build_family(
    parent_prior: GaussianMixture,
    survived: bool,
    spawn_offsets: Sequence,
    F: np.ndarray,
    Q: np.ndarray,
    Q_T: np.ndarray,
    member_labels: Sequence | None = None,
) -> FamilyBlock:
    """Predicted joint over a parent's survived and spawned next states.

    Each spawn offset model is a GaussianMixture over additive offsets
    relative to the parent's transitioned state (or a callable producing one
    from the parent component mean, for state-dependent offsets).  The joint
    enumerates parent components x offset components with product weights;
    within a component, member means are F m (+ offset), diagonal blocks are
    F P F' + Q (survived) or F P F' + Q_T + offset covariance (spawn), and
    every cross block is F P F'.
    """
    F = np.asarray(F, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Q_T = np.asarray(Q_T, dtype=float)
    n_members = int(survived) + len(spawn_offsets)
    if n_members == 0:
        raise ValueError("family must contain at least one member")
    d = parent_prior.dim
    if member_labels is None:
        member_labels = tuple(range(n_members))

    weights, means, covs = [], [], []
    for c in range(parent_prior.size):
        m_c = parent_prior.means[c]
        P_c = parent_prior.covs[c]
        shared = _symmetrize(F @ P_c @ F.T)
        base_mean = F @ m_c
        offset_mixes = [
            off(m_c) if callable(off) else off for off in spawn_offsets
        ]
        # enumerate one offset component per spawn member
        combos = [()]
        for off in offset_mixes:
            combos = [prefix + (k,) for prefix in combos for k in range(off.size)]
        for combo in combos:
            w = parent_prior.weights[c]
            mean = np.empty(n_members * d)
            cov = np.tile(shared, (n_members, n_members))
            slot = 0
            if survived:
                mean[:d] = base_mean
                cov[:d, :d] = shared + Q
                slot = 1
            for s, k in enumerate(combo):
                off = offset_mixes[s]
                w *= off.weights[k]
                lo = (slot + s) * d
                mean[lo : lo + d] = base_mean + off.means[k]
                cov[lo : lo + d, lo : lo + d] = shared + Q_T + off.covs[k]
            weights.append(w)
            means.append(mean)
            covs.append(_symmetrize(cov))
    joint = GaussianMixture(np.array(weights), np.array(means), np.array(covs))
    return FamilyBlock(tuple(member_labels), joint, d)


def marginalize(family: FamilyBlock, member_index: int) -> GaussianMixture:
    """Per-member marginal of the family joint (normalized block selection)."""
    if not 0 <= member_index < family.size:
        raise IndexError(f"member index {member_index} out of range for {family.size} members")
    d = family.member_dim
    lo = member_index * d
    means = family.joint.means[:, lo : lo + d]
    covs = family.joint.covs[:, lo : lo + d, lo : lo + d]
    return GaussianMixture(family.joint.weights, means, covs).normalized()


def cap_mixture(
    mix: GaussianMixture, max_components: int, prune_threshold: float = 0.0
) -> tuple[GaussianMixture, float]:
    """Drop low-weight components and keep the top ``max_components``.

    Pruning compares normalized weights to ``prune_threshold``.  Ties at the
    cap are broken towards the lower component index.  Returns the
    renormalized mixture and the fraction of mass kept (the renormalization
    factor relating the capped weights back to the input weights).
    """
    if max_components < 1:
        raise ValueError("max_components must be >= 1")
    total = mix.total_weight
    norm_w = mix.weights / total
    keep = np.flatnonzero(norm_w >= prune_threshold)
    if keep.size == 0:
        keep = np.array([int(np.argmax(norm_w))])
    if keep.size > max_components:
        order = np.argsort(-norm_w[keep], kind="stable")
        keep = keep[order[:max_components]]
        keep.sort()
    kept_fraction = float(np.sum(norm_w[keep]))
    capped = GaussianMixture(mix.weights[keep], mix.means[keep], mix.covs[keep]).normalized()
    return capped, kept_fraction


def moment_match(mix: GaussianMixture) -> Gaussian:
    """Single Gaussian with the mixture's overall mean and covariance."""
    norm = mix.normalized()
    mean = norm.weights @ norm.means
    diff = norm.means - mean
    cov = np.einsum("n,nij->ij", norm.weights, norm.covs)
    cov += np.einsum("n,ni,nj->ij", norm.weights, diff, diff)
    return Gaussian(mean, _symmetrize(cov))


def min_eigenvalue_ratio(cov: np.ndarray) -> float:
    """Smallest eigenvalue scaled by trace; used by validity checks."""
    trace = float(np.trace(cov))
    if trace <= 0:
        return float(np.min(np.linalg.eigvalsh(cov)))
    return float(np.min(np.linalg.eigvalsh(cov)) / trace)
