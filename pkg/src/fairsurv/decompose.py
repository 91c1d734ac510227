"""Decompositions of the group disparity in a time-to-event functional.

The total variation (TV) between two groups is split into a direct, an
indirect (mediator-borne), and a spurious (confounder-borne) channel by
contrasting four potential-outcome curves.  Writing po(a, b, c) for the
curve whose outcome law follows group a, mediator law group b, and
covariate mix group c:

    direct    = po(x1, x0, x0) - po(x0, x0, x0)
    indirect  = po(x1, x0, x0) - po(x1, x1, x0)
    spurious  = po(x1, x1, x0) - po(x1, x1, x1)
    tv        = po(x1, x1, x1) - po(x0, x0, x0)

so that tv = direct - indirect - spurious holds exactly at every grid
time.  The indirect and spurious contrasts run against the transition
direction, hence the minus signs: a positive indirect effect means the
mediator shift *away* from x1 raises the functional.

On the ratio scale the same four curves give

    direct    = po(x1, x0, x0) / po(x0, x0, x0)
    indirect  = po(x1, x0, x0) / po(x1, x1, x0)
    spurious  = po(x1, x1, x0) / po(x1, x1, x1)
    tv        = po(x1, x1, x1) / po(x0, x0, x0)

with the multiplicative identity tv = direct * indirect^-1 * spurious^-1.

Standard errors for composite effects are computed from the per-row
influence difference of the two curves entering the contrast -- not by
adding variances -- so the correlation induced by shared rows and
shared nuisance fits is accounted for.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .curves import StepCurve
from .dr import DRCurveEstimate, Z_CRITICAL, assign_folds, crossfit_dr_many
from .errors import DataError, RatioUndefinedError
from .identify import (
    _validate_grid,
    default_grid,
    fit_plugin_nuisances,
    outcome_target,
    plugin_po,
)
from .nuisance import fit_conditional_survival
from .queries import Functional, PotentialOutcomeQuery

EFFECT_NAMES = ("tv", "direct", "indirect", "spurious")

ESTIMATOR_KINDS = ("plugin", "doubly_robust", "oracle")

# Each effect contrasts two queries, written as role triples where 1
# stands for the target group x1 and 0 for the baseline x0.
_EFFECT_PAIRS = {
    "direct": ((1, 0, 0), (0, 0, 0)),
    "indirect": ((1, 0, 0), (1, 1, 0)),
    "spurious": ((1, 1, 0), (1, 1, 1)),
    "tv": ((1, 1, 1), (0, 0, 0)),
}


def _role_query(roles, x0, x1):
    return PotentialOutcomeQuery(*(x1 if r else x0 for r in roles))


def _check_arms(x0, x1):
    if x0 not in (0, 1) or x1 not in (0, 1):
        raise DataError("group labels must be 0 or 1")
    if x0 == x1:
        raise DataError("the two comparison groups must differ")
    return int(x0), int(x1)


def _normalize_po(po_curves):
    out = {}
    for key, value in po_curves.items():
        query = key if isinstance(key, PotentialOutcomeQuery) \
            else PotentialOutcomeQuery(*key)
        out[query] = value
    return out


def _entry_grid(entry):
    if isinstance(entry, DRCurveEstimate):
        return np.asarray(entry.grid, dtype=float)
    if isinstance(entry, StepCurve):
        return np.asarray(entry.breakpoints, dtype=float)
    return None


def _po_arrays(entry, grid, query):
    """(values, influence matrix or None, fold ids or None) on `grid`."""
    if isinstance(entry, DRCurveEstimate):
        if not np.array_equal(np.asarray(entry.grid, float), grid):
            raise DataError(
                f"curve for query {query.as_tuple()} is on a different grid")
        return (np.asarray(entry.estimate, dtype=float),
                np.asarray(entry.if_matrix, dtype=float), entry.fold_ids)
    if isinstance(entry, StepCurve):
        if not np.array_equal(np.asarray(entry.breakpoints, float), grid):
            raise DataError(
                f"curve for query {query.as_tuple()} is on a different grid")
        return np.asarray(entry.values, dtype=float), None, None
    arr = np.asarray(entry, dtype=float)
    if arr.shape != (grid.size,):
        raise DataError(
            f"curve for query {query.as_tuple()} has {arr.shape} values "
            f"but the grid has {grid.size} points")
    return arr, None, None


def _collect(po_curves, x0, x1, grid):
    """Pull the four required curves onto one shared grid."""
    po_map = _normalize_po(po_curves)
    needed = [_role_query(r, x0, x1)
              for r in ((0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1))]
    for query in needed:
        if query not in po_map:
            raise DataError(
                f"missing potential-outcome curve for query {query.as_tuple()}")
    if grid is None:
        for query in needed:
            grid = _entry_grid(po_map[query])
            if grid is not None:
                break
        if grid is None:
            raise DataError(
                "a grid is required when curves are plain value arrays")
    grid = _validate_grid(grid)

    values, influence, folds = {}, {}, {}
    for query in needed:
        v, m, f = _po_arrays(po_map[query], grid, query)
        values[query], influence[query], folds[query] = v, m, f

    have_if = all(influence[q] is not None for q in needed)
    if have_if:
        shapes = {influence[q].shape for q in needed}
        if len(shapes) != 1:
            raise DataError(
                "influence matrices must cover the same rows for every query")
        fold_arrays = [folds[q] for q in needed if folds[q] is not None]
        for other in fold_arrays[1:]:
            if not np.array_equal(fold_arrays[0], other):
                raise DataError(
                    "influence matrices come from different fold assignments; "
                    "estimate all four queries in one cross-fitting pass")
    return grid, values, influence, have_if


def _resolve_estimator(estimator, have_if):
    if estimator is None:
        estimator = "doubly_robust" if have_if else "plugin"
    if estimator not in ESTIMATOR_KINDS:
        raise DataError(f"unknown estimator kind {estimator!r}")
    if estimator == "doubly_robust" and not have_if:
        raise DataError(
            "doubly robust series need influence matrices for every query")
    return estimator


def _band(if_matrix):
    n = if_matrix.shape[0]
    se = if_matrix.std(axis=0, ddof=1) / np.sqrt(n)
    return se


@dataclass
class EffectSeries:
    """One effect curve with its normal-approximation band."""

    name: str
    estimate: np.ndarray
    se: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    if_matrix: np.ndarray | None = None


@dataclass
class DecompositionSeries:
    """Per-time tv/direct/indirect/spurious curves on one grid."""

    grid: np.ndarray
    effects: dict
    scale: str
    functional: Functional
    estimator: str
    x0: int
    x1: int
    diagnostics: dict

    def effect(self, name):
        if name not in self.effects:
            raise DataError(f"unknown effect name {name!r}")
        return self.effects[name]

    def to_csv(self, header_comment=None):
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("t,effect,estimate,se,lo,hi")
        for name in EFFECT_NAMES:
            eff = self.effects[name]
            for j in range(self.grid.size):
                cells = ["%.12g" % self.grid[j], name,
                         "%.12g" % eff.estimate[j]]
                for arr in (eff.se, eff.lo, eff.hi):
                    cells.append("" if arr is None else "%.12g" % arr[j])
                lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self, indent=2):
        def arr(values):
            return None if values is None else [float(v) for v in values]

        payload = {
            "scale": self.scale,
            "estimator": self.estimator,
            "x0": self.x0,
            "x1": self.x1,
            "functional": {
                "kind": self.functional.kind,
                "cause": self.functional.cause,
                "horizon": self.functional.horizon,
            },
            "grid": [float(v) for v in self.grid],
            "effects": {
                name: {
                    "estimate": arr(eff.estimate),
                    "se": arr(eff.se),
                    "lo": arr(eff.lo),
                    "hi": arr(eff.hi),
                }
                for name, eff in self.effects.items()
            },
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload, indent=indent, sort_keys=True)


def _infer_functional(po_curves):
    for entry in po_curves.values():
        if isinstance(entry, DRCurveEstimate):
            return entry.functional
    return Functional("survival")


def decompose_difference(po_curves, x0, x1, *, functional=None,
                         estimator=None, grid=None, diagnostics=None):
    """Additive decomposition tv = direct - indirect - spurious.

    `po_curves` maps each of the four queries to a curve: a cross-fitted
    estimate (carrying per-row influence values, which yield standard
    errors), a step curve, or a plain value array on `grid`.  All four
    must share one grid and, when influence matrices are present, one
    fold assignment.
    """
    x0, x1 = _check_arms(x0, x1)
    grid, values, influence, have_if = _collect(po_curves, x0, x1, grid)
    estimator = _resolve_estimator(estimator, have_if)
    if functional is None:
        functional = _infer_functional(_normalize_po(po_curves))

    effects = {}
    for name in EFFECT_NAMES:
        pos_roles, neg_roles = _EFFECT_PAIRS[name]
        q_pos = _role_query(pos_roles, x0, x1)
        q_neg = _role_query(neg_roles, x0, x1)
        estimate = values[q_pos] - values[q_neg]
        if estimator == "doubly_robust":
            if_eff = influence[q_pos] - influence[q_neg]
            se = _band(if_eff)
            effects[name] = EffectSeries(
                name=name, estimate=estimate, se=se,
                lo=estimate - Z_CRITICAL * se,
                hi=estimate + Z_CRITICAL * se,
                if_matrix=if_eff)
        else:
            effects[name] = EffectSeries(name=name, estimate=estimate)

    info = {"n_rows": influence[q_pos].shape[0]} if have_if else {}
    if diagnostics:
        info.update(diagnostics)
    return DecompositionSeries(
        grid=grid, effects=effects, scale="difference",
        functional=functional, estimator=estimator, x0=x0, x1=x1,
        diagnostics=info)


def decompose_ratio(po_curves, x0, x1, *, functional=None, estimator=None,
                    grid=None, diagnostics=None):
    """Multiplicative decomposition tv = direct / (indirect * spurious).

    Every potential-outcome value must be strictly positive on the grid;
    the first nonpositive value aborts with the offending query and
    time.  Standard errors (when influence matrices are present) follow
    the delta method for a ratio, again from per-row influence
    differences.
    """
    x0, x1 = _check_arms(x0, x1)
    grid, values, influence, have_if = _collect(po_curves, x0, x1, grid)
    estimator = _resolve_estimator(estimator, have_if)
    if functional is None:
        functional = _infer_functional(_normalize_po(po_curves))

    for query, vals in values.items():
        bad = np.flatnonzero(vals <= 0.0)
        if bad.size:
            j = int(bad[0])
            raise RatioUndefinedError(
                f"potential outcome for query {query.as_tuple()} is "
                f"{vals[j]:.6g} at t={grid[j]:g}; ratio-scale effects need "
                "strictly positive curves")

    effects = {}
    for name in EFFECT_NAMES:
        pos_roles, neg_roles = _EFFECT_PAIRS[name]
        q_pos = _role_query(pos_roles, x0, x1)
        q_neg = _role_query(neg_roles, x0, x1)
        ratio = values[q_pos] / values[q_neg]
        if estimator == "doubly_robust":
            if_eff = (influence[q_pos] - ratio[None, :] * influence[q_neg]) \
                / values[q_neg][None, :]
            se = _band(if_eff)
            effects[name] = EffectSeries(
                name=name, estimate=ratio, se=se,
                lo=ratio - Z_CRITICAL * se,
                hi=ratio + Z_CRITICAL * se,
                if_matrix=if_eff)
        else:
            effects[name] = EffectSeries(name=name, estimate=ratio)

    info = {"n_rows": influence[q_pos].shape[0]} if have_if else {}
    if diagnostics:
        info.update(diagnostics)
    return DecompositionSeries(
        grid=grid, effects=effects, scale="ratio",
        functional=functional, estimator=estimator, x0=x0, x1=x1,
        diagnostics=info)


def decompose_cr(cohort, x0, x1, causes=None, estimator="plugin", *,
                 grid=None, learner="stratified",
                 propensity_learner="frequency_table", epsilon=0.01,
                 n_folds=2, seed=0, learners=None, cap=50.0,
                 learner_params=None):
    """Per-cause incidence decompositions plus the all-cause survival one.

    Returns one difference-scale series per requested cause (on the
    cause's incidence scale) followed by one for all-cause survival.
    All series share the outcome-model weights — under the plugin
    estimator also the exact propensity fits — so the per-time identity

        sum_k tv_k(t) = -tv_all_cause(t)

    holds up to floating rounding whenever no propensity was clipped.
    """
    x0, x1 = _check_arms(x0, x1)
    if cohort.n_causes < 2:
        raise DataError(
            "competing-cause decomposition needs at least two causes")
    if causes is None:
        causes = list(range(1, cohort.n_causes + 1))
    else:
        causes = [int(k) for k in causes]
        if not causes:
            raise DataError("causes must name at least one event type")
        if len(set(causes)) != len(causes):
            raise DataError("causes must not repeat")
        for k in causes:
            if not 1 <= k <= cohort.n_causes:
                raise DataError(
                    f"cause {k} outside 1..{cohort.n_causes}")
    if estimator not in ("plugin", "doubly_robust"):
        raise DataError(f"unknown estimator kind {estimator!r}")

    grid = default_grid(cohort) if grid is None else _validate_grid(grid)
    queries = [_role_query(r, x0, x1)
               for r in ((0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1))]
    functionals = [Functional("cif", cause=k) for k in causes]
    functionals.append(Functional("all_cause_survival"))

    series = []
    if estimator == "plugin":
        params = dict(learner_params or {})
        base = fit_plugin_nuisances(
            cohort, Functional("all_cause_survival"), learner=learner,
            propensity_learner=propensity_learner, epsilon=epsilon, **params)
        outcome_by_target = {"event": base.outcome}
        for functional in functionals:
            target = outcome_target(functional)
            if target not in outcome_by_target:
                outcome_by_target[target] = fit_conditional_survival(
                    cohort, target=target, learner=learner, **params)
            nuis = replace(base, outcome=outcome_by_target[target])
            po, reports = {}, {}
            for query in queries:
                curve, report = plugin_po(
                    nuis, cohort, query, functional, grid,
                    return_report=True)
                po[query] = curve
                reports[str(query.as_tuple())] = report
            series.append(decompose_difference(
                po, x0, x1, functional=functional, estimator="plugin",
                grid=grid, diagnostics={"plugin_reports": reports}))
    else:
        fold = assign_folds(cohort, n_folds, seed)
        for functional in functionals:
            estimates = crossfit_dr_many(
                cohort, queries, functional, grid=grid, learners=learners,
                seed=seed, epsilon=epsilon, cap=cap, fold_ids=fold)
            series.append(decompose_difference(
                estimates, x0, x1, functional=functional,
                estimator="doubly_robust", grid=grid))
    return series
