"""Brute-force reference implementations used only by tests.

Everything here recomputes quantities the filter produces, through
deliberately different numerics: hypothesis enumeration by direct product
over per-track options (no sampling, no pruning), family posteriors through
a dense joint that includes the parent's pre-transition state, Gaussian
evidence through scipy's multivariate normal, conditioning through explicit
matrix inverses, and a no-spawning reference filter for the reduction
check.  Agreement between these paths and the filter is the main
correctness gate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .assignment import AssocVector, CostTable
from .gaussian import GaussianMixture
from .glmb import GlmbComponent
from .labels import Label, make_birth_label, make_spawn_label
from .models import Scenario, spawn_offset

MAX_ROWS = 8
MAX_MEAS = 3
LOG_2PI = math.log(2.0 * math.pi)


def _mvn_logpdf(z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Gaussian log-density via slogdet/solve (kernel independent of the filter's)."""
    diff = np.asarray(z, dtype=float) - mean
    _, logdet = np.linalg.slogdet(cov)
    sol = np.linalg.solve(cov, diff)
    return float(-0.5 * (diff.size * LOG_2PI + logdet + diff @ sol))


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _log_kappa(scenario: Scenario, z: np.ndarray) -> float:
    lk = scenario.sensor.clutter_loglik(z)
    return lk if math.isfinite(lk) else math.log(1e-300)


@dataclass(frozen=True)
class EnumeratedHypothesis:
    labels: tuple[Label, ...]
    theta: dict
    log_weight: float
    marginals: dict


@dataclass(frozen=True)
class EnumeratedPosterior:
    """All posterior hypotheses of one prior component, exactly weighted."""

    hypotheses: list

    def cardinality_distribution(self) -> np.ndarray:
        sizes = [len(h.labels) for h in self.hypotheses]
        rho = np.zeros(max(sizes, default=0) + 1)
        for h, n in zip(self.hypotheses, sizes):
            rho[n] += math.exp(h.log_weight)
        return rho

    def label_mass(self, label: Label) -> float:
        return float(
            sum(math.exp(h.log_weight) for h in self.hypotheses if label in h.labels)
        )

    def as_weight_map(self) -> dict:
        return {
            (h.labels, tuple(sorted(h.theta.items()))): h.log_weight for h in self.hypotheses
        }


def _dense_family(
    prior: GaussianMixture,
    surv_assign: int,
    spawn_assigns: tuple[int, ...],
    scenario: Scenario,
    Z: np.ndarray,
) -> tuple[float, dict]:
    """Family evidence and member marginals via a dense parent-inclusive joint.

    Builds, per prior component and offset choice, the joint Gaussian over
    (parent state, present members) from the generative linear map, then
    conditions on all assigned measurements at once.
    """
    scn = scenario
    p_s, p_t, p_d = scn.survival.p_s, scn.spawn.p_t, scn.sensor.p_d
    F, Q, Q_T = scn.motion.F, scn.motion.Q, scn.spawn.Q_T
    H, R = scn.sensor.H, scn.sensor.R
    d = F.shape[0]

    survived = surv_assign >= 0
    present = [(s, a) for s, a in enumerate(spawn_assigns) if a >= 0]
    log_disc = _log(p_s) if survived else _log(1.0 - p_s)
    n_absent = len(spawn_assigns) - len(present)
    if present:
        log_disc += len(present) * _log(p_t)
    if n_absent:
        log_disc += n_absent * _log(1.0 - p_t)
    members: list[tuple[str, int, int]] = []  # (kind, slot, association)
    if survived:
        members.append(("surv", -1, surv_assign))
    members.extend(("spawn", s, a) for s, a in present)
    if not members or not math.isfinite(log_disc):
        return log_disc, {}

    n_mem = len(members)
    comp_log_w: list[float] = []
    comp_means: list[np.ndarray] = []
    comp_covs: list[np.ndarray] = []
    offset_angles = [bearing for _, bearing in scn.spawn.offsets]
    for c in range(prior.size):
        m_c, P_c = prior.means[c], prior.covs[c]
        spawn_choices = [range(len(scn.spawn.offsets))] * len(present)
        for combo in itertools.product(*spawn_choices):
            # joint over (x, members...) from the generative map
            n_var = 1 + n_mem
            A = np.zeros((n_var * d, n_var * d))
            A[:d, :d] = np.eye(d)
            base_cov = np.zeros((n_var * d, n_var * d))
            base_cov[:d, :d] = P_c
            mean_shift = np.zeros(n_var * d)
            for i, (kind, slot, _) in enumerate(members):
                lo = (1 + i) * d
                A[lo : lo + d, :d] = F
                A[lo : lo + d, lo : lo + d] = np.eye(d)
                if kind == "surv":
                    base_cov[lo : lo + d, lo : lo + d] = Q
                else:
                    k = combo[[s for s, _ in present].index(slot)]
                    dist, bearing = scn.spawn.offsets[k]
                    mean_shift[lo : lo + d] = spawn_offset(m_c, bearing, dist)
                    base_cov[lo : lo + d, lo : lo + d] = Q_T
            full_mean = A @ np.concatenate([m_c, np.zeros(n_mem * d)]) + mean_shift
            full_cov = A @ base_cov @ A.T

            detected = [(i, a) for i, (_, _, a) in enumerate(members) if a >= 1]
            log_lik = 0.0
            mean_post, cov_post = full_mean, full_cov
            if detected:
                z_dim = H.shape[0]
                Hs = np.zeros((z_dim * len(detected), n_var * d))
                Rs = np.zeros((z_dim * len(detected), z_dim * len(detected)))
                zs = np.empty(z_dim * len(detected))
                for r, (i, a) in enumerate(detected):
                    Hs[r * z_dim : (r + 1) * z_dim, (1 + i) * d : (2 + i) * d] = H
                    Rs[r * z_dim : (r + 1) * z_dim, r * z_dim : (r + 1) * z_dim] = R
                    zs[r * z_dim : (r + 1) * z_dim] = Z[a - 1]
                S = Hs @ full_cov @ Hs.T + Rs
                log_lik = _mvn_logpdf(zs, Hs @ full_mean, S)
                gain = full_cov @ Hs.T @ np.linalg.inv(S)
                mean_post = full_mean + gain @ (zs - Hs @ full_mean)
                cov_post = full_cov - gain @ Hs @ full_cov
                log_lik += sum(_log(p_d) - _log_kappa(scn, Z[a - 1]) for _, a in detected)
            log_lik += sum(_log(1.0 - p_d) for _, _, a in members if a == 0)
            comp_log_w.append(
                _log(prior.weights[c]) - len(present) * _log(len(offset_angles)) + log_lik
            )
            comp_means.append(mean_post)
            comp_covs.append(cov_post)

    log_evidence = float(logsumexp(comp_log_w))
    if not math.isfinite(log_evidence):
        return -math.inf, {}
    weights = np.exp(np.array(comp_log_w) - log_evidence)
    marginals = {}
    for i, (_, slot, _) in enumerate(members):
        lo = (1 + i) * d
        means = np.array([m[lo : lo + d] for m in comp_means])
        covs = np.array([cv[lo : lo + d, lo : lo + d] for cv in comp_covs])
        marginals[slot] = GaussianMixture(weights, means, covs)
    return log_disc + log_evidence, marginals


def _birth_factor(region_density: GaussianMixture, j: int, scenario: Scenario, Z) -> tuple[float, GaussianMixture]:
    p_d = scenario.sensor.p_d
    if j == 0:
        return _log(1.0 - p_d), region_density
    H, R = scenario.sensor.H, scenario.sensor.R
    z = Z[j - 1]
    log_parts = []
    means, covs = [], []
    for c in range(region_density.size):
        m_c, P_c = region_density.means[c], region_density.covs[c]
        S = H @ P_c @ H.T + R
        log_parts.append(
            _log(region_density.weights[c]) + _mvn_logpdf(z, H @ m_c, S)
        )
        gain = P_c @ H.T @ np.linalg.inv(S)
        means.append(m_c + gain @ (z - H @ m_c))
        covs.append(P_c - gain @ H @ P_c)
    log_ev = float(logsumexp(log_parts))
    posterior = GaussianMixture(np.exp(np.array(log_parts) - log_ev), np.array(means), np.array(covs))
    return _log(p_d) + log_ev - _log_kappa(scenario, z), posterior


def enumerate_posterior(
    component: GlmbComponent, measurements: np.ndarray, scenario: Scenario, time: int
) -> EnumeratedPosterior:
    """Exact posterior of one prior component by full hypothesis enumeration.

    Iterates the product of per-track options (absent / missed / each
    measurement), filters to positive 1-1 vectors, and evaluates every
    hypothesis weight and marginal by the dense family computation.  Guarded
    to small instances.
    """
    Z = np.atleast_2d(np.asarray(measurements, dtype=float)) if np.size(measurements) else np.empty((0, 2))
    births = sorted(
        (make_birth_label(time, r.label_index), r) for r in scenario.birth.regions
    )
    survivors = sorted(component.labels)
    spawn_rows = [
        (make_spawn_label(parent, time, j), parent)
        for parent in survivors
        for j in range(1, scenario.spawn.per_parent + 1)
    ]
    spawn_rows.sort()
    n_rows = len(births) + len(survivors) + len(spawn_rows)
    if n_rows > MAX_ROWS or Z.shape[0] > MAX_MEAS:
        raise ValueError(f"enumeration guard: {n_rows} rows, {Z.shape[0]} measurements")

    options = range(-1, Z.shape[0] + 1)
    hypotheses = []
    birth_memo: dict = {}
    family_memo: dict = {}
    for assign in itertools.product(options, repeat=n_rows):
        positives = [a for a in assign if a >= 1]
        if len(positives) != len(set(positives)):
            continue
        log_w = component.log_weight
        labels: list[Label] = []
        theta: dict[Label, int] = {}
        marginals: dict[Label, GaussianMixture] = {}
        pos = 0
        for lab, region in births:
            a = assign[pos]
            pos += 1
            if a < 0:
                log_w += _log(1.0 - region.prob)
            else:
                if (lab, a) not in birth_memo:
                    birth_memo[(lab, a)] = _birth_factor(region.density, a, scenario, Z)
                factor, posterior = birth_memo[(lab, a)]
                log_w += _log(region.prob) + factor
                labels.append(lab)
                theta[lab] = a
                marginals[lab] = posterior
        surv_assign = {lab: assign[pos + i] for i, lab in enumerate(survivors)}
        pos += len(survivors)
        spawn_assign: dict[Label, dict[int, int]] = {lab: {} for lab in survivors}
        for (slab, parent), a in zip(spawn_rows, assign[pos:]):
            spawn_assign[parent][slab.path[-1] - 1] = a
        for parent in survivors:
            slots = spawn_assign[parent]
            pattern = tuple(slots[s] for s in sorted(slots))
            memo_key = (parent, surv_assign[parent], pattern)
            if memo_key not in family_memo:
                family_memo[memo_key] = _dense_family(
                    component.track_densities[parent], surv_assign[parent], pattern, scenario, Z
                )
            log_e, member_marginals = family_memo[memo_key]
            log_w += log_e
            for slot, mix in member_marginals.items():
                lab = parent if slot == -1 else make_spawn_label(parent, time, slot + 1)
                labels.append(lab)
                theta[lab] = surv_assign[parent] if slot == -1 else slots[slot]
                marginals[lab] = mix
        if not math.isfinite(log_w):
            continue
        hypotheses.append(
            EnumeratedHypothesis(tuple(sorted(labels)), theta, log_w, marginals)
        )

    log_norm = float(logsumexp([h.log_weight for h in hypotheses]))
    normalized = [
        EnumeratedHypothesis(h.labels, h.theta, h.log_weight - log_norm, h.marginals)
        for h in hypotheses
    ]
    return EnumeratedPosterior(normalized)


def gamma_distribution(table: CostTable) -> dict[AssocVector, float]:
    """Exact normalized law prop. to the product of cost entries over valid vectors."""
    P, m = table.n_rows, table.n_meas
    probs: dict[AssocVector, float] = {}
    for assign in itertools.product(range(-1, m + 1), repeat=P):
        positives = [a for a in assign if a >= 1]
        if len(positives) != len(set(positives)):
            continue
        w = float(np.prod([table.entry(i, a) for i, a in enumerate(assign)]))
        if w > 0:
            probs[tuple(assign)] = w
    total = sum(probs.values())
    return {k: v / total for k, v in probs.items()}


def ospa_bruteforce(X, Y, cutoff: float, order: float) -> tuple[float, float, float]:
    """OSPA by exhaustive assignment enumeration (factorial; tiny sets only)."""
    X = np.atleast_2d(np.asarray(X, dtype=float)) if np.size(X) else np.empty((0, 2))
    Y = np.atleast_2d(np.asarray(Y, dtype=float)) if np.size(Y) else np.empty((0, 2))
    n, m = X.shape[0], Y.shape[0]
    if n == 0 and m == 0:
        return 0.0, 0.0, 0.0
    if n > m:
        X, Y, n, m = Y, X, m, n
    c, p = float(cutoff), float(order)
    best = math.inf if n else 0.0
    for perm in itertools.permutations(range(m), n):
        cost = sum(
            min(float(np.linalg.norm(X[i] - Y[j])), c) ** p for i, j in enumerate(perm)
        )
        best = min(best, cost)
    card_pow = c**p * (m - n)
    return (
        ((best + card_pow) / m) ** (1.0 / p),
        (best / m) ** (1.0 / p),
        (card_pow / m) ** (1.0 / p),
    )


# --- reference filter without spawning ------------------------------------


@dataclass(frozen=True)
class RefComponent:
    labels: tuple[Label, ...]
    history: tuple
    log_weight: float
    densities: dict


def reference_empty() -> list[RefComponent]:
    return [RefComponent((), (), 0.0, {})]


def _ref_predict(mix: tuple, F: np.ndarray, Q: np.ndarray) -> tuple:
    ws, means, covs = mix
    return (
        list(ws),
        [F @ m for m in means],
        [F @ P @ F.T + Q for P in covs],
    )


def _ref_psi(mix: tuple, j: int, scenario: Scenario, Z) -> float:
    p_d = scenario.sensor.p_d
    if j == 0:
        return _log(1.0 - p_d)
    H, R = scenario.sensor.H, scenario.sensor.R
    ws, means, covs = mix
    z = Z[j - 1]
    parts = [
        _log(w) + _mvn_logpdf(z, H @ m, H @ P @ H.T + R)
        for w, m, P in zip(ws, means, covs)
    ]
    return _log(p_d) + float(logsumexp(parts)) - _log_kappa(scenario, z)


def _ref_update(mix: tuple, j: int, scenario: Scenario, Z) -> tuple:
    if j == 0:
        return mix
    H, R = scenario.sensor.H, scenario.sensor.R
    ws, means, covs = mix
    z = Z[j - 1]
    new_w, new_m, new_c = [], [], []
    for w, m, P in zip(ws, means, covs):
        S = H @ P @ H.T + R
        lik = _mvn_logpdf(z, H @ m, S)
        gain = P @ H.T @ np.linalg.inv(S)
        new_w.append(_log(w) + lik)
        new_m.append(m + gain @ (z - H @ m))
        new_c.append(P - gain @ H @ P)
    norm = float(logsumexp(new_w))
    return ([math.exp(lw - norm) for lw in new_w], new_m, new_c)


def reference_no_spawn_update(
    components: list[RefComponent], measurements: np.ndarray, scenario: Scenario, time: int
) -> list[RefComponent]:
    """Joint prediction-update without spawning, exhaustively enumerated.

    Independent implementation of the standard fast recursion: hypothesis
    weights are products of per-track survival/birth factors and predicted
    measurement likelihood ratios; densities are per-track mixtures with no
    family coupling.
    """
    Z = np.atleast_2d(np.asarray(measurements, dtype=float)) if np.size(measurements) else np.empty((0, 2))
    births = sorted((make_birth_label(time, r.label_index), r) for r in scenario.birth.regions)
    p_s = scenario.survival.p_s
    F, Q = scenario.motion.F, scenario.motion.Q
    candidates = []
    for comp in components:
        survivors = sorted(comp.labels)
        predicted = {lab: _ref_predict(comp.densities[lab], F, Q) for lab in survivors}
        rows = [lab for lab, _ in births] + survivors
        n_rows = len(rows)
        for assign in itertools.product(range(-1, Z.shape[0] + 1), repeat=n_rows):
            positives = [a for a in assign if a >= 1]
            if len(positives) != len(set(positives)):
                continue
            log_w = comp.log_weight
            labels, theta, densities = [], {}, {}
            for (lab, region), a in zip(births, assign):
                if a < 0:
                    log_w += _log(1.0 - region.prob)
                else:
                    prior = (
                        list(region.density.weights),
                        list(region.density.means),
                        list(region.density.covs),
                    )
                    log_w += _log(region.prob) + _ref_psi(prior, a, scenario, Z)
                    labels.append(lab)
                    theta[lab] = a
                    densities[lab] = _ref_update(prior, a, scenario, Z)
            for lab, a in zip(survivors, assign[len(births) :]):
                if a < 0:
                    log_w += _log(1.0 - p_s)
                else:
                    log_w += _log(p_s) + _ref_psi(predicted[lab], a, scenario, Z)
                    labels.append(lab)
                    theta[lab] = a
                    densities[lab] = _ref_update(predicted[lab], a, scenario, Z)
            if not math.isfinite(log_w):
                continue
            entry = tuple(sorted(theta.items()))
            candidates.append(
                RefComponent(tuple(sorted(labels)), comp.history + (entry,), log_w, densities)
            )
    log_norm = float(logsumexp([c.log_weight for c in candidates]))
    merged: dict[tuple, RefComponent] = {}
    order = []
    for cand in candidates:
        key = (cand.labels, cand.history)
        if key in merged:
            prev = merged[key]
            merged[key] = RefComponent(
                prev.labels,
                prev.history,
                float(np.logaddexp(prev.log_weight, cand.log_weight - log_norm)),
                prev.densities,
            )
        else:
            merged[key] = RefComponent(
                cand.labels, cand.history, cand.log_weight - log_norm, cand.densities
            )
            order.append(key)
    total = float(logsumexp([merged[k].log_weight for k in order]))
    return [
        RefComponent(
            merged[k].labels, merged[k].history, merged[k].log_weight - total, merged[k].densities
        )
        for k in order
    ]
