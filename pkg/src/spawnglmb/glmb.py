"""Multi-object filtering recursion with spawning.

The filtering density is a weighted mixture of components, each holding a
label set I, an association history xi, and one density per label.  A scan
update runs joint prediction and update: per prior component it builds the
candidate-track rows (births, survivors, candidate spawns), samples
significant association vectors with the Gibbs sampler over the tempered
cost table (or enumerates them exhaustively at test scale), scores every
candidate hypothesis exactly, and merges duplicates.

Exact hypothesis weights factor over births and over per-parent families.
A family couples a parent's survived next state with the states it spawns;
its members share the parent's pre-transition randomness, so detections of
one member inform the others.  Each family contributes its evidence to the
hypothesis weight exactly once, and each present member receives the
normalized marginal of the jointly-updated family density.  With spawning
disabled this reduces term-by-term to the standard fast joint
prediction-update recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from . import assignment
from .assignment import CostRow, CostTable
from .gaussian import (
    GaussianMixture,
    build_family,
    cap_mixture,
    marginalize,
    min_eigenvalue_ratio,
    predict_mixture,
    update_mixture,
)
from .labels import Label, make_birth_label, make_spawn_label
from .models import FilterParams, Scenario, spawn_offset_mixture

LOG_KAPPA_FLOOR = math.log(1e-300)  # stand-in clutter density for out-of-region measurements


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True, eq=False)
class GlmbComponent:
    """One hypothesis: label set, association history, weight, track densities."""

    labels: tuple[Label, ...]
    history: tuple
    log_weight: float
    track_densities: Mapping[Label, GaussianMixture]


@dataclass(frozen=True, eq=False)
class GlmbDensity:
    components: tuple[GlmbComponent, ...]
    scan_time: int = 0


def empty_density() -> GlmbDensity:
    """Prior before any scan: certainly no objects."""
    return GlmbDensity((GlmbComponent((), (), 0.0, {}),), scan_time=0)


def component_weights(density: GlmbDensity) -> np.ndarray:
    return np.exp(np.array([c.log_weight for c in density.components]))


class _ScanContext:
    """Per-scan caches shared across prior components.

    Components that share a track density object (the common case after
    branching) share its predicted density, measurement likelihood row,
    single-track posteriors and family posteriors.  Keys use object ids,
    which are stable here because every keyed object is kept alive by the
    prior density or by the cache itself for the scan's duration.
    """

    def __init__(self, measurements: np.ndarray, scenario: Scenario, params: FilterParams, time: int):
        self.Z = (
            np.atleast_2d(np.asarray(measurements, dtype=float))
            if np.size(measurements)
            else np.empty((0, 2))
        )
        self.scenario = scenario
        self.params = params
        self.time = time
        sensor = scenario.sensor
        if self.Z.shape[0]:
            raw = np.array([sensor.clutter_loglik(z) for z in self.Z])
            self.log_kappa = np.where(np.isfinite(raw), raw, LOG_KAPPA_FLOOR)
        else:
            self.log_kappa = np.empty(0)
        self.row_cache: dict = {"pred": {}, "spawn_pred": {}}
        self.loglik_cache: dict[int, np.ndarray] = {}
        self.eta_cache: dict[tuple, np.ndarray] = {}
        self.single_post: dict[tuple[int, int], GaussianMixture] = {}
        self.family_cache: dict[tuple, tuple[float, dict[int, GaussianMixture]]] = {}
        self.birth_rows = {
            make_birth_label(time, region.label_index): region
            for region in scenario.birth.regions
        }

    def tempered_table(self, rows: Sequence[CostRow]) -> CostTable:
        """Cost table assembled from per-density cached rows."""
        temper = (self.params.temper_s, self.params.temper_d, self.params.temper_t)
        eta = np.empty((len(rows), self.Z.shape[0] + 2))
        for i, row in enumerate(rows):
            key = (id(row.predicted), row.kind, row.prob)
            cached = self.eta_cache.get(key)
            if cached is None:
                loglik = self.loglik_row(row.predicted) if self.Z.shape[0] else None
                cached = assignment.eta_row_for(
                    row, self.Z, self.scenario.sensor, self.log_kappa, temper, True, loglik
                )
                self.eta_cache[key] = cached
            eta[i] = cached
        return CostTable(rows=tuple(rows), eta=eta, n_meas=self.Z.shape[0])

    def loglik_row(self, predicted: GaussianMixture) -> np.ndarray:
        """log <predicted, N(z_j; H., R)> for all measurements, cached."""
        key = id(predicted)
        row = self.loglik_cache.get(key)
        if row is None:
            from .gaussian import loglik_batch

            sensor = self.scenario.sensor
            row = loglik_batch(predicted, self.Z, sensor.H, sensor.R)
            self.loglik_cache[key] = row
        return row

    def log_psi(self, predicted: GaussianMixture, j: int) -> float:
        """log psi^(j): miss factor for j=0, detection likelihood ratio for j>=1."""
        sensor = self.scenario.sensor
        if j == 0:
            return _log(1.0 - sensor.p_d)
        row = self.loglik_row(predicted)
        return _log(sensor.p_d) + float(row[j - 1]) - float(self.log_kappa[j - 1])

    def posterior_single(self, predicted: GaussianMixture, j: int) -> GaussianMixture:
        """Posterior of one track under association j (cached, capped)."""
        if j == 0:
            return predicted
        key = (id(predicted), j)
        post = self.single_post.get(key)
        if post is None:
            sensor = self.scenario.sensor
            updated, _ = update_mixture(predicted, self.Z[j - 1], sensor.H, sensor.R)
            post, _ = cap_mixture(updated, self.params.mixture_cap, self.params.mixture_prune)
            self.single_post[key] = post
        return post


def _family_posterior(
    ctx: _ScanContext,
    parent_prior: GaussianMixture,
    surv_assign: int,
    spawn_assigns: tuple[int, ...],
    surv_predicted: GaussianMixture | None,
    spawn_predicted: GaussianMixture | None,
) -> tuple[float, dict[int, GaussianMixture]]:
    """Evidence and per-member marginals for one family assignment pattern.

    ``surv_assign`` is the parent's association (-1 absent, 0 miss, j >= 1)
    and ``spawn_assigns`` one association per spawn slot.  Marginals are
    keyed by member slot: -1 for the survived parent, s >= 0 for spawn slot
    s.  The evidence counts the family exactly once: discrete
    survival/spawn factors times miss factors times the joint Gaussian
    evidence of all assigned measurements.
    """
    key = (id(parent_prior), surv_assign, spawn_assigns)
    cached = ctx.family_cache.get(key)
    if cached is not None:
        return cached

    scn = ctx.scenario
    p_s, p_t, p_d = scn.survival.p_s, scn.spawn.p_t, scn.sensor.p_d
    survived = surv_assign >= 0
    present_slots = [s for s, a in enumerate(spawn_assigns) if a >= 0]
    log_e = _log(p_s) if survived else _log(1.0 - p_s)
    n_absent = len(spawn_assigns) - len(present_slots)
    if present_slots:
        log_e += len(present_slots) * _log(p_t)
    if n_absent:
        log_e += n_absent * _log(1.0 - p_t)

    marginals: dict[int, GaussianMixture] = {}
    members: list[tuple[int, int]] = []  # (slot, association)
    if survived:
        members.append((-1, surv_assign))
    members.extend((s, spawn_assigns[s]) for s in present_slots)

    if not members or not math.isfinite(log_e):
        result = (log_e, marginals)
        ctx.family_cache[key] = result
        return result

    if len(members) == 1:
        slot, a = members[0]
        predicted = surv_predicted if slot == -1 else spawn_predicted
        log_e += ctx.log_psi(predicted, a)
        marginals[slot] = ctx.posterior_single(predicted, a)
        result = (log_e, marginals)
        ctx.family_cache[key] = result
        return result

    # two or more members present: joint update over the stacked family state
    offsets = [
        (lambda m_c: spawn_offset_mixture(scn.spawn, m_c)) for _ in present_slots
    ]
    family = build_family(
        parent_prior,
        survived,
        offsets,
        scn.motion.F,
        scn.motion.Q,
        scn.spawn.Q_T,
        member_labels=tuple(slot for slot, _ in members),
    )
    d = family.member_dim
    detected = [(idx, a) for idx, (_, a) in enumerate(members) if a >= 1]
    joint = family.joint
    if detected:
        sensor = scn.sensor
        z_dim = sensor.H.shape[0]
        H_stack = np.zeros((z_dim * len(detected), d * len(members)))
        R_stack = np.zeros((z_dim * len(detected), z_dim * len(detected)))
        z_stack = np.empty(z_dim * len(detected))
        for r, (idx, a) in enumerate(detected):
            H_stack[r * z_dim : (r + 1) * z_dim, idx * d : (idx + 1) * d] = sensor.H
            R_stack[r * z_dim : (r + 1) * z_dim, r * z_dim : (r + 1) * z_dim] = sensor.R
            z_stack[r * z_dim : (r + 1) * z_dim] = ctx.Z[a - 1]
        joint, log_ev = update_mixture(joint, z_stack, H_stack, R_stack)
        log_e += log_ev
        log_e += sum(_log(p_d) - float(ctx.log_kappa[a - 1]) for _, a in detected)
    log_e += sum(_log(1.0 - p_d) for _, a in members if a == 0)

    from .gaussian import FamilyBlock

    fam_post = FamilyBlock(family.member_labels, joint, d, log_e)
    for idx, (slot, _) in enumerate(members):
        marg = marginalize(fam_post, idx)
        marg, _ = cap_mixture(marg, ctx.params.mixture_cap, ctx.params.mixture_prune)
        marginals[slot] = marg
    result = (log_e, marginals)
    ctx.family_cache[key] = result
    return result


def compute_family_posteriors(
    parent_label: Label,
    prior_density: GaussianMixture,
    hypothesis: tuple[Sequence[Label], Mapping[Label, int]],
    measurements: np.ndarray,
    scenario: Scenario,
    time: int,
    params: FilterParams | None = None,
) -> tuple[dict[Label, GaussianMixture], float]:
    """Per-member posterior marginals and log-evidence of one parent family.

    The family membership is read off the hypothesis: the parent is present
    iff its label is, and each of its spawn slots at ``time`` contributes a
    present member when the corresponding spawn label is.  Absent members
    contribute their non-survival/non-spawn probability to the evidence.
    """
    params = params or scenario.filter_params
    labels, theta = hypothesis
    present = set(labels)
    ctx = _ScanContext(measurements, scenario, params, time)
    surv_assign = theta[parent_label] if parent_label in present else -1
    slot_labels = [
        make_spawn_label(parent_label, time, j)
        for j in range(1, scenario.spawn.per_parent + 1)
    ]
    spawn_assigns = tuple(
        theta[lab] if lab in present else -1 for lab in slot_labels
    )
    surv_pred = predict_mixture(prior_density, scenario.motion.F, scenario.motion.Q)
    spawn_pred = assignment.spawn_predicted_mixture(prior_density, scenario)
    log_e, marg_by_slot = _family_posterior(
        ctx, prior_density, surv_assign, spawn_assigns, surv_pred, spawn_pred
    )
    marginals = {}
    for slot, mix in marg_by_slot.items():
        marginals[parent_label if slot == -1 else slot_labels[slot]] = mix
    return marginals, log_e


def _component_rows(
    component: GlmbComponent, ctx: _ScanContext
) -> tuple[list[CostRow], dict[Label, GaussianMixture], dict[Label, GaussianMixture]]:
    """Cost rows in canonical order plus per-label predicted mixtures."""
    scn = ctx.scenario
    rows: list[CostRow] = [
        CostRow(label=lab, kind="birth", prob=region.prob, predicted=region.density)
        for lab, region in sorted(ctx.birth_rows.items())
    ]
    surv_pred: dict[Label, GaussianMixture] = {}
    spawn_pred: dict[Label, GaussianMixture] = {}
    for lab in sorted(component.labels):
        prior = component.track_densities[lab]
        pred = ctx.row_cache["pred"].get(id(prior))
        if pred is None:
            pred = predict_mixture(prior, scn.motion.F, scn.motion.Q)
            ctx.row_cache["pred"][id(prior)] = pred
        surv_pred[lab] = pred
        rows.append(CostRow(label=lab, kind="survive", prob=scn.survival.p_s, predicted=pred))
    for parent in sorted(component.labels):
        prior = component.track_densities[parent]
        spred = ctx.row_cache["spawn_pred"].get(id(prior))
        if spred is None:
            spred = assignment.spawn_predicted_mixture(prior, scn)
            ctx.row_cache["spawn_pred"][id(prior)] = spred
        spawn_pred[parent] = spred
    spawn_rows = [
        CostRow(
            label=make_spawn_label(parent, ctx.time, j),
            kind="spawn",
            prob=scn.spawn.p_t,
            predicted=spawn_pred[parent],
            parent=parent,
        )
        for parent in sorted(component.labels)
        for j in range(1, scn.spawn.per_parent + 1)
    ]
    rows.extend(sorted(spawn_rows, key=lambda r: r.label))
    return rows, surv_pred, spawn_pred


def _score_candidate(
    component: GlmbComponent,
    rows: Sequence[CostRow],
    gamma: assignment.AssocVector,
    ctx: _ScanContext,
    surv_pred: Mapping[Label, GaussianMixture],
    spawn_pred: Mapping[Label, GaussianMixture],
) -> tuple[float, tuple[Label, ...], tuple, dict[Label, GaussianMixture]] | None:
    """Exact log-weight and posterior densities of one candidate hypothesis."""
    scn = ctx.scenario
    log_w = component.log_weight
    densities: dict[Label, GaussianMixture] = {}
    # birth factors
    surv_assign: dict[Label, int] = {}
    spawn_assigns: dict[Label, dict[int, int]] = {}
    for row, g in zip(rows, gamma):
        if row.kind == "birth":
            region = ctx.birth_rows[row.label]
            if g < 0:
                log_w += _log(1.0 - region.prob)
            else:
                log_w += _log(region.prob) + ctx.log_psi(region.density, g)
                densities[row.label] = ctx.posterior_single(region.density, g)
        elif row.kind == "survive":
            surv_assign[row.label] = g
        else:
            slot = row.label.path[-1] - 1
            spawn_assigns.setdefault(row.parent, {})[slot] = g
    if not math.isfinite(log_w):
        return None
    # family factors, one per existing track
    for parent in component.labels:
        slots = spawn_assigns.get(parent, {})
        pattern = tuple(slots[s] for s in sorted(slots))
        prior = component.track_densities[parent]
        log_e, marg = _family_posterior(
            ctx,
            prior,
            surv_assign.get(parent, -1),
            pattern,
            surv_pred.get(parent),
            spawn_pred.get(parent),
        )
        log_w += log_e
        if not math.isfinite(log_w):
            return None
        for slot, mix in marg.items():
            label = parent if slot == -1 else make_spawn_label(parent, ctx.time, slot + 1)
            densities[label] = mix
    labels = tuple(sorted(densities))
    theta_entry = tuple(
        sorted((row.label, int(g)) for row, g in zip(rows, gamma) if g >= 0)
    )
    history = component.history + (theta_entry,)
    if ctx.params.validate:
        present = set(labels)
        for lab in present:
            if lab.generation > 0 and lab.last_time == ctx.time:
                parent = Label(lab.path[:-2])
                if parent not in component.labels:
                    raise AssertionError(f"spawn {lab} lacks parent {parent} in prior component")
    return log_w, labels, history, densities


def joint_predict_update(
    prior: GlmbDensity,
    measurements: np.ndarray,
    scenario: Scenario,
    time: int,
    rng: np.random.Generator | None = None,
    params: FilterParams | None = None,
) -> tuple[GlmbDensity, dict]:
    """One scan of the joint prediction and update recursion.

    Steps: allocate the Gibbs sweep budget over prior components by
    multinomial sampling (with a per-component floor); per component, build
    the spawning-augmented cost table and collect the distinct association
    vectors it proposes; score every candidate exactly; normalize, merge
    duplicate (label set, history) pairs, and cap the component count.

    Returns the posterior density and a per-scan diagnostics record.
    """
    params = params or scenario.filter_params
    if not prior.components:
        raise ValueError("prior density has no components")
    if rng is None and not params.exhaustive:
        raise ValueError("rng is required unless running in exhaustive mode")

    ctx = _ScanContext(measurements, scenario, params, time)
    weights = component_weights(prior)
    weights = weights / weights.sum()
    if params.exhaustive:
        budgets = np.zeros(len(prior.components), dtype=int)
    else:
        budgets = rng.multinomial(params.h_max, weights)
        budgets = np.maximum(budgets, params.gibbs_floor)

    candidates = []
    total_sweeps = 0
    for h, component in enumerate(prior.components):
        rows, surv_pred, spawn_pred = _component_rows(component, ctx)
        if params.exhaustive:
            table = assignment.build_cost_table(
                rows, ctx.Z, scenario.sensor, temper=(1.0, 1.0, 1.0), clamp=False,
                loglik_cache=ctx.loglik_cache, log_kappa=ctx.log_kappa,
            )
            mask = assignment.support_mask(rows, table.n_meas, scenario.sensor)
            gammas = assignment.enumerate_gammas(table, support=mask)
        else:
            table = ctx.tempered_table(rows)
            sweeps = int(budgets[h])
            total_sweeps += sweeps
            raw = assignment.gibbs_sample(table, assignment.default_init(table), sweeps, rng)
            gammas, _, _ = assignment.unique(raw)
        for gamma in gammas:
            scored = _score_candidate(component, rows, gamma, ctx, surv_pred, spawn_pred)
            if scored is not None:
                candidates.append(scored)

    if not candidates:
        raise RuntimeError(f"no feasible hypothesis at scan {time}")
    log_ws = np.array([c[0] for c in candidates])
    log_norm = float(logsumexp(log_ws))
    merged = aggregate(
        [
            GlmbComponent(labels, history, lw - log_norm, densities)
            for (lw, labels, history, densities) in candidates
        ],
        history_depth=params.history_depth,
    )
    density, discarded = _cap_component_list(merged, params.cap)
    out = GlmbDensity(tuple(density), scan_time=time)

    w = component_weights(out)
    diag = {
        "scan": time,
        "n_meas": int(ctx.Z.shape[0]),
        "hypotheses": len(candidates),
        "components": len(out.components),
        "ess": float(1.0 / np.sum(w**2)),
        "discarded_mass": discarded,
        "gibbs_sweeps": total_sweeps,
    }
    return out, diag


def aggregate(components: Sequence[GlmbComponent], history_depth: int | None = None) -> list[GlmbComponent]:
    """Merge components with equal (label set, association history).

    Weights of duplicates are summed in the log domain; densities are taken
    from the first occurrence (duplicates share the same association
    history, hence analytically equal densities).  Output weights are
    renormalized; first-occurrence order is preserved.
    """
    merged: dict[tuple, int] = {}
    out: list[GlmbComponent] = []
    for comp in components:
        hist_key = comp.history if history_depth is None else comp.history[-history_depth:]
        key = (comp.labels, hist_key)
        pos = merged.get(key)
        if pos is None:
            merged[key] = len(out)
            out.append(comp)
        else:
            prev = out[pos]
            out[pos] = GlmbComponent(
                prev.labels,
                prev.history,
                np.logaddexp(prev.log_weight, comp.log_weight),
                prev.track_densities,
            )
    log_ws = np.array([c.log_weight for c in out])
    log_norm = float(logsumexp(log_ws))
    return [
        GlmbComponent(c.labels, c.history, c.log_weight - log_norm, c.track_densities)
        for c in out
    ]


def _cap_component_list(components: list[GlmbComponent], cap: int) -> tuple[list[GlmbComponent], float]:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    order = sorted(
        range(len(components)),
        key=lambda i: (-components[i].log_weight, components[i].labels, components[i].history),
    )
    keep = order[:cap]
    kept_mass = float(np.sum(np.exp([components[i].log_weight for i in keep])))
    total_mass = float(np.sum(np.exp([c.log_weight for c in components])))
    log_norm = _log(kept_mass)
    out = [
        GlmbComponent(
            components[i].labels,
            components[i].history,
            components[i].log_weight - log_norm,
            components[i].track_densities,
        )
        for i in keep
    ]
    return out, total_mass - kept_mass


def cap_components(density: GlmbDensity, cap: int) -> GlmbDensity:
    """Keep the top-``cap`` components by weight and renormalize."""
    out, _ = _cap_component_list(list(density.components), cap)
    return GlmbDensity(tuple(out), scan_time=density.scan_time)


def validate_density(density: GlmbDensity, tol: float = 1e-9) -> list[str]:
    """Structural invariant check; returns human-readable violations."""
    problems: list[str] = []
    total = float(np.sum(np.exp([c.log_weight for c in density.components])))
    if abs(total - 1.0) > tol:
        problems.append(f"weights sum to {total!r}, not 1")
    for idx, comp in enumerate(density.components):
        if len(set(comp.labels)) != len(comp.labels):
            problems.append(f"component {idx}: duplicate labels")
        if set(comp.track_densities) != set(comp.labels):
            problems.append(f"component {idx}: density keys do not match label set")
        for lab, mix in comp.track_densities.items():
            if abs(mix.total_weight - 1.0) > 1e-6:
                problems.append(f"component {idx}, track {lab}: mixture not normalized")
            for c in range(mix.size):
                if min_eigenvalue_ratio(mix.covs[c]) < -1e-9:
                    problems.append(f"component {idx}, track {lab}: covariance not PSD")
    return problems
