"""Association machinery: spawning-augmented cost table, Gibbs sampling, Murty.

A hypothesis about one parent density component is a positive 1-1 vector
gamma over rows (candidate tracks: new births, existing tracks, candidate
spawns) with entries in {-1, 0, 1..m}: -1 = track absent, 0 = present but
miss-detected, j >= 1 = present and assigned measurement j.  Positive
entries are unique across rows.  The product of per-row cost entries
eta[i, gamma_i] is the (proposal) hypothesis weight used for truncation:
significant vectors are found either by Gibbs sampling or, exactly, by
Murty's ranked-assignment algorithm (test oracle).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gaussian import GaussianMixture, loglik_batch, predict_mixture
from .labels import Label, spawn_label_space
from .models import Scenario, SensorModel, spawn_offset_mixture

PROB_CLAMP = 1e-6  # keeps averaged survival/spawn/detection probabilities in (0, 1)

AssocVector = tuple[int, ...]


@dataclass(frozen=True)
class CostRow:
    """One candidate track: its kind, presence probability and predicted density."""

    label: Label
    kind: str  # "birth" | "survive" | "spawn"
    prob: float  # r_B, p_S or p_T, untempered
    predicted: GaussianMixture
    parent: Label | None = None


@dataclass(frozen=True)
class CostTable:
    """Non-negative cost entries eta over rows x associations.

    Column c of ``eta`` holds the entry for association j = c - 1, so
    columns run over j in {-1, 0, 1..n_meas}.
    """

    rows: tuple[CostRow, ...]
    eta: np.ndarray
    n_meas: int

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def entry(self, i: int, j: int) -> float:
        return float(self.eta[i, j + 1])

    def log_weight(self, gamma: AssocVector) -> float:
        """log of the proposal weight prod_i eta[i, gamma_i]."""
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(self.eta[np.arange(self.n_rows), np.asarray(gamma) + 1])))


def prepare_rows(component, time: int, scenario: Scenario) -> list[CostRow]:
    """Candidate-track rows for one prior component in canonical order.

    Rows are new births at ``time``, then the component's existing labels,
    then the spawn labels those may generate, each group sorted
    lexicographically.  Predicted densities: the birth prior, the
    transitioned track density, and the transitioned-plus-offset spawn
    mixture respectively.
    """
    motion, spawn = scenario.motion, scenario.spawn
    rows: list[CostRow] = []
    for region in scenario.birth.regions:
        from .labels import make_birth_label

        rows.append(
            CostRow(
                label=make_birth_label(time, region.label_index),
                kind="birth",
                prob=region.prob,
                predicted=region.density,
            )
        )
    rows.sort(key=lambda r: r.label)
    survivors = sorted(component.labels)
    predicted: dict[Label, GaussianMixture] = {}
    for lab in survivors:
        pred = predict_mixture(component.track_densities[lab], motion.F, motion.Q)
        predicted[lab] = pred
        rows.append(
            CostRow(label=lab, kind="survive", prob=scenario.survival.p_s, predicted=pred)
        )
    for lab in spawn_label_space(survivors, time, spawn.per_parent):
        parent = Label(lab.path[:-2])
        rows.append(
            CostRow(
                label=lab,
                kind="spawn",
                prob=spawn.p_t,
                predicted=spawn_predicted_mixture(
                    component.track_densities[parent], scenario
                ),
                parent=parent,
            )
        )
    return rows


def spawn_predicted_mixture(parent_density: GaussianMixture, scenario: Scenario) -> GaussianMixture:
    """Marginal predicted density of a spawn slot of the given parent."""
    F, Q_T = scenario.motion.F, scenario.spawn.Q_T
    weights, means, covs = [], [], []
    for c in range(parent_density.size):
        m_c = parent_density.means[c]
        P_c = parent_density.covs[c]
        base_cov = F @ P_c @ F.T + Q_T
        offsets = spawn_offset_mixture(scenario.spawn, m_c)
        for k in range(offsets.size):
            weights.append(parent_density.weights[c] * offsets.weights[k])
            means.append(F @ m_c + offsets.means[k])
            covs.append(base_cov + offsets.covs[k])
    return GaussianMixture(np.array(weights), np.array(means), np.array(covs))


def eta_row_for(
    row: CostRow,
    Z: np.ndarray,
    sensor: SensorModel,
    log_kappa: np.ndarray,
    temper: tuple[float, float, float],
    clamp: bool,
    loglik: np.ndarray | None = None,
) -> np.ndarray:
    """One row of cost entries over associations {-1, 0, 1..m}."""
    factor_s, factor_d, factor_t = temper
    m = Z.shape[0]
    p_d = min(max(sensor.p_d * factor_d, PROB_CLAMP), 1.0 - PROB_CLAMP)
    factor_by_kind = {"birth": 1.0, "survive": factor_s, "spawn": factor_t}
    prob = row.prob * factor_by_kind[row.kind]
    if clamp:
        prob = min(max(prob, PROB_CLAMP), 1.0 - PROB_CLAMP)
    out = np.empty(m + 2)
    out[0] = 1.0 - prob
    out[1] = prob * (1.0 - p_d)
    if m:
        if loglik is None:
            loglik = loglik_batch(row.predicted, Z, sensor.H, sensor.R)
        psi = p_d * np.exp(loglik - log_kappa)
        out[2:] = prob * np.nan_to_num(psi, nan=0.0, posinf=1e300)
    return out


def build_cost_table(
    rows: Sequence[CostRow],
    measurements: np.ndarray,
    sensor: SensorModel,
    temper: tuple[float, float, float] = (1.0, 1.0, 1.0),
    clamp: bool = True,
    loglik_cache: dict | None = None,
    log_kappa: np.ndarray | None = None,
) -> CostTable:
    """Cost entries for all rows against a measurement set.

    ``temper`` = (survival factor, detection factor, spawn factor) scales the
    corresponding probabilities inside the table only, steering the Gibbs
    sampler towards termination/miss hypotheses; exact weights elsewhere use
    the untempered values.  With ``clamp`` the presence probabilities are
    forced into (0, 1) so no row's off column can vanish.
    """
    Z = np.atleast_2d(np.asarray(measurements, dtype=float)) if np.size(measurements) else np.empty((0, 2))
    m = Z.shape[0]
    if log_kappa is None:
        log_kappa = np.array([sensor.clutter_loglik(z) for z in Z]) if m else np.empty(0)

    eta = np.zeros((len(rows), m + 2))
    for i, row in enumerate(rows):
        loglik = None
        if m and loglik_cache is not None:
            loglik = loglik_cache.get(id(row.predicted))
            if loglik is None:
                loglik = loglik_batch(row.predicted, Z, sensor.H, sensor.R)
                loglik_cache[id(row.predicted)] = loglik
        eta[i] = eta_row_for(row, Z, sensor, log_kappa, temper, clamp, loglik)
    return CostTable(rows=tuple(rows), eta=eta, n_meas=m)


def cost_table_for_component(
    component,
    measurements: np.ndarray,
    scenario: Scenario,
    time: int,
    temper: tuple[float, float, float] | None = None,
    clamp: bool = True,
) -> CostTable:
    """Cost table for one filtering component (rows prepared canonically)."""
    if temper is None:
        fp = scenario.filter_params
        temper = (fp.temper_s, fp.temper_d, fp.temper_t)
    rows = prepare_rows(component, time, scenario)
    return build_cost_table(rows, measurements, scenario.sensor, temper=temper, clamp=clamp)


def default_init(table: CostTable) -> AssocVector:
    """All-miss starting vector: existing tracks miss-detected, others absent."""
    return tuple(0 if row.kind == "survive" else -1 for row in table.rows)


def is_positive_one_to_one(gamma: Sequence[int], n_meas: int) -> bool:
    positives = [g for g in gamma if g >= 1]
    return (
        all(-1 <= g <= n_meas for g in gamma)
        and len(positives) == len(set(positives))
    )


def gibbs_sample(
    table: CostTable,
    init: AssocVector,
    iterations: int,
    rng: np.random.Generator,
) -> list[AssocVector]:
    """Systematic-scan Gibbs sampler over positive 1-1 vectors.

    One iteration resamples every row in turn from the categorical law
    proportional to its cost entries, restricted to associations not claimed
    by any other row; the state after each full sweep is recorded.  The
    stationary law is proportional to prod_i eta[i, gamma_i] over valid
    vectors.
    """
    P, m = table.n_rows, table.n_meas
    if not is_positive_one_to_one(init, m):
        raise ValueError(f"init vector {init} is not positive 1-1")
    gamma = list(init)
    owner = [-1] * (m + 1)  # owner[j] = row currently holding measurement j >= 1
    for i, g in enumerate(gamma):
        if g >= 1:
            owner[g] = i
    # each row's full-categorical CDF; claimed columns are handled by
    # rejection, with an exact restricted resample as fallback
    cdfs = np.cumsum(table.eta, axis=1)
    totals = cdfs[:, -1]
    if np.any(totals <= 0):
        bad = int(np.argmin(totals))
        raise ValueError(f"row {bad} has no admissible association with positive weight")
    out: list[AssocVector] = []
    for _ in range(iterations):
        for i in range(P):
            cdf = cdfs[i]
            total = totals[i]
            new = None
            for _attempt in range(30):
                c = int(np.searchsorted(cdf, rng.random() * total, side="right"))
                j = min(c, m + 1) - 1
                if j < 1 or owner[j] in (-1, i):
                    new = j
                    break
            if new is None:
                w = table.eta[i].copy()
                for j in range(1, m + 1):
                    if owner[j] not in (-1, i):
                        w[j + 1] = 0.0
                restricted = np.cumsum(w)
                if restricted[-1] <= 0:
                    raise ValueError(f"row {i} has no admissible association with positive weight")
                c = int(np.searchsorted(restricted, rng.random() * restricted[-1], side="right"))
                new = min(c, m + 1) - 1
            old = gamma[i]
            if old >= 1:
                owner[old] = -1
            if new >= 1:
                owner[new] = i
            gamma[i] = new
        out.append(tuple(gamma))
    return out


def unique(vectors: Iterable[AssocVector]) -> tuple[list[AssocVector], list[int], dict[AssocVector, int]]:
    """Stable deduplication preserving first occurrence order.

    Returns the distinct vectors, their multiplicities, and a map from
    vector to its position in the distinct list.
    """
    first_index: dict[AssocVector, int] = {}
    counts: list[int] = []
    distinct: list[AssocVector] = []
    for vec in vectors:
        key = tuple(vec)
        if key in first_index:
            counts[first_index[key]] += 1
        else:
            first_index[key] = len(distinct)
            distinct.append(key)
            counts.append(1)
    return distinct, counts, first_index


def gamma_to_hypothesis(table: CostTable, gamma: AssocVector) -> tuple[tuple[Label, ...], dict[Label, int]]:
    """Recover the (surviving label set, association map) pair from gamma."""
    if not is_positive_one_to_one(gamma, table.n_meas):
        raise ValueError(f"gamma {gamma} is not positive 1-1")
    labels = []
    theta: dict[Label, int] = {}
    for row, g in zip(table.rows, gamma):
        if g >= 0:
            labels.append(row.label)
            theta[row.label] = int(g)
    return tuple(sorted(labels)), theta


def hypothesis_to_gamma(table: CostTable, labels: Iterable[Label], theta: Mapping[Label, int]) -> AssocVector:
    present = set(labels)
    return tuple(
        int(theta[row.label]) if row.label in present else -1 for row in table.rows
    )


def _solve(cost: np.ndarray) -> tuple[float, np.ndarray] | None:
    """Min-cost assignment of all rows; None when infeasible."""
    try:
        r, c = linear_sum_assignment(cost)
    except ValueError:
        return None
    total = cost[r, c].sum()
    if not np.isfinite(total):
        return None
    cols = np.empty(cost.shape[0], dtype=int)
    cols[r] = c
    return float(total), cols


def _gamma_from_cols(cols: np.ndarray, m: int, P: int) -> AssocVector:
    gamma = []
    for col in cols:
        if col < m:
            gamma.append(int(col) + 1)
        elif col < m + P:
            gamma.append(0)
        else:
            gamma.append(-1)
    return tuple(gamma)


def murty_topk(table: CostTable, k: int) -> list[AssocVector]:
    """Exact k-best positive 1-1 vectors ranked by non-increasing weight.

    Ranked-assignment via successive partitioning of the solution space,
    with the Hungarian method solving each subproblem.  Rows may take a
    shared measurement column or their private miss/absent columns.  Ties
    are broken by lexicographic gamma order.  Intended as a test oracle at
    small scale; returns fewer than k vectors when the space is exhausted.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    P, m = table.n_rows, table.n_meas
    with np.errstate(divide="ignore"):
        neg_log = -np.log(table.eta)
    base = np.full((P, m + 2 * P), np.inf)
    base[:, :m] = neg_log[:, 2:]
    for i in range(P):
        base[i, m + i] = neg_log[i, 1]
        base[i, m + P + i] = neg_log[i, 0]

    root = _solve(base)
    if root is None:
        return []
    results: list[AssocVector] = []
    # heap entries: (cost, gamma, cols, fixed pairs, forbidden pairs)
    heap = [(root[0], _gamma_from_cols(root[1], m, P), root[1], (), frozenset())]
    seen = {heap[0][1]}
    while heap and len(results) < k:
        cost, gamma, cols, fixed, forbidden = heapq.heappop(heap)
        results.append(gamma)
        fixed_rows = {r for r, _ in fixed}
        partition_fixed = list(fixed)
        for r in range(P):
            if r in fixed_rows:
                continue
            child_forbidden = forbidden | {(r, int(cols[r]))}
            cost_matrix = base.copy()
            for rr, cc in partition_fixed:
                keep = cost_matrix[rr, cc]
                cost_matrix[rr, :] = np.inf
                cost_matrix[rr, cc] = keep
            for rr, cc in child_forbidden:
                cost_matrix[rr, cc] = np.inf
            solved = _solve(cost_matrix)
            if solved is not None:
                child_gamma = _gamma_from_cols(solved[1], m, P)
                if child_gamma not in seen:
                    seen.add(child_gamma)
                    heapq.heappush(
                        heap,
                        (solved[0], child_gamma, solved[1], tuple(partition_fixed), child_forbidden),
                    )
            partition_fixed.append((r, int(cols[r])))
    return results


def support_mask(rows: Sequence[CostRow], n_meas: int, sensor: SensorModel) -> np.ndarray:
    """Structural support of the association options, immune to underflow.

    An option is admissible when its discrete factors are strictly positive:
    absence needs prob < 1, a miss needs prob > 0 and q_D > 0, a detection
    needs prob > 0 and p_D > 0.  Gaussian likelihoods are positive
    everywhere, however small, so they never restrict the support.
    """
    mask = np.zeros((len(rows), n_meas + 2), dtype=bool)
    for i, row in enumerate(rows):
        mask[i, 0] = row.prob < 1.0
        mask[i, 1] = row.prob > 0.0 and sensor.p_d < 1.0
        mask[i, 2:] = row.prob > 0.0 and sensor.p_d > 0.0
    return mask


def enumerate_gammas(table: CostTable, support: np.ndarray | None = None) -> list[AssocVector]:
    """All valid positive 1-1 vectors over the admissible options.

    By default an option is admissible when its cost entry is positive;
    passing an explicit ``support`` mask avoids dropping options whose
    entries merely underflowed.  Exponential in the number of rows; guarded
    for use on small instances (exhaustive truncation mode and test
    oracles).
    """
    P, m = table.n_rows, table.n_meas
    if P * math.log2(m + 2) > 18:
        raise ValueError(f"enumeration guard exceeded: {P} rows x {m} measurements")
    allowed = support if support is not None else table.eta > 0.0
    out: list[AssocVector] = []

    def recurse(i: int, used: set[int], prefix: list[int]) -> None:
        if i == P:
            out.append(tuple(prefix))
            return
        for j in range(-1, m + 1):
            if j >= 1 and j in used:
                continue
            if not allowed[i, j + 1]:
                continue
            if j >= 1:
                used.add(j)
            prefix.append(j)
            recurse(i + 1, used, prefix)
            prefix.pop()
            if j >= 1:
                used.discard(j)

    recurse(0, set(), [])
    return out
