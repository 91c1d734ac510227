"""Plug-in estimation of interventional potential-outcome curves.

A query (x_outcome, x_mediator, x_condition) asks for the expected
structural functional when the direct path follows x_outcome, the
mediator law follows x_mediator, and the covariate mix is that of group
x_condition.  The weighted estimator averages the outcome model's
per-stratum functional over rows, reweighting each row by propensity
ratios so the mediator and conditioning arms land on the requested
groups; the summation form evaluates the same expression directly from
frequency tables when covariates are discrete.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import StepCurve, restricted_mean
from .errors import CohortSchemaError, DataError, EmptyCohortError
from .nuisance import (
    ConditionalSurvivalModel,
    PropensityModel,
    fit_conditional_survival,
    fit_propensity,
)
from .queries import Functional, PotentialOutcomeQuery


def outcome_target(functional):
    """Which conditional model a functional reads from."""
    if functional.kind == "cif":
        return functional.cause
    return "event"


def functional_from_curve(curve, functional, grid):
    """Evaluate a structural functional of one conditional curve."""
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if functional.kind in ("survival", "all_cause_survival", "cif"):
        return np.asarray(curve.evaluate(g), dtype=float)
    if functional.kind == "rmst":
        out = np.empty(g.size)
        for j, t in enumerate(g):
            cap = min(float(t), functional.horizon)
            out[j] = restricted_mean(curve, cap) if cap > 0.0 else 0.0
        return out
    if functional.kind == "cumulative_hazard":
        bp, vals = curve.breakpoints, curve.values
        if bp.size == 0:
            return np.zeros(g.size)
        prev = np.concatenate(([curve.value_at_zero], vals[:-1]))
        inc = np.where(prev > 0.0, 1.0 - vals / np.where(prev > 0.0, prev, 1.0), 0.0)
        chf = np.cumsum(inc)
        idx = np.searchsorted(bp, g, side="right") - 1
        return np.where(idx >= 0, chf[np.maximum(idx, 0)], 0.0)
    raise DataError(f"unsupported functional kind {functional.kind!r}")


def _validate_grid(grid):
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise DataError("grid must be a nonempty 1-d array")
    if np.any(~np.isfinite(g)) or np.any(g < 0.0):
        raise DataError("grid points must be finite and nonnegative")
    if g.size > 1 and np.any(np.diff(g) <= 0.0):
        raise DataError("grid must be strictly increasing")
    return g


def default_grid(cohort, user_grid=None, percentile=95.0):
    """Distinct observed event times up to a percentile of M, plus extras."""
    event_times = np.unique(cohort.m[cohort.delta > 0])
    cap = float(np.percentile(cohort.m, percentile))
    pts = event_times[event_times <= cap]
    if user_grid is not None:
        extra = _validate_grid(user_grid)
        pts = np.unique(np.concatenate((pts, extra)))
    if pts.size == 0:
        raise EmptyCohortError("no event times available to build a grid")
    return pts


def _pava_nonincreasing(values):
    """Pool-adjacent-violators projection onto nonincreasing sequences."""
    vals, counts = [], []
    for v in values:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            pooled = vals[-1] * counts[-1] + vals[-2] * counts[-2]
            cnt = counts[-1] + counts[-2]
            vals[-2:] = [pooled / cnt]
            counts[-2:] = [cnt]
    out = np.empty(len(values))
    pos = 0
    for v, c in zip(vals, counts):
        out[pos:pos + c] = v
        pos += c
    return out


def _project(values, kind):
    """Clamp and monotone-project raw averages into a valid curve."""
    raw = np.asarray(values, dtype=float)
    if kind == "survival":
        fixed = _pava_nonincreasing(np.clip(raw, 0.0, 1.0))
    elif kind == "cif":
        fixed = -_pava_nonincreasing(-np.clip(raw, 0.0, 1.0))
    elif kind == "hazard":
        fixed = -_pava_nonincreasing(-np.maximum(raw, 0.0))
    else:
        fixed = raw
    return fixed, float(np.max(np.abs(fixed - raw))) if raw.size else 0.0


@dataclass(frozen=True)
class PluginNuisances:
    """The fitted pieces the weighted estimator consumes."""

    outcome: ConditionalSurvivalModel
    propensity_zw: PropensityModel
    propensity_z: PropensityModel
    propensity_marginal: PropensityModel


def fit_plugin_nuisances(cohort, functional, learner="stratified",
                         propensity_learner="frequency_table",
                         epsilon=0.01, **learner_params):
    """Fit the outcome model and all three propensities on one cohort."""
    outcome = fit_conditional_survival(
        cohort, target=outcome_target(functional), learner=learner,
        **learner_params,
    )
    return PluginNuisances(
        outcome=outcome,
        propensity_zw=fit_propensity(
            cohort, "zw", learner=propensity_learner, epsilon=epsilon),
        propensity_z=fit_propensity(
            cohort, "z", learner=propensity_learner, epsilon=epsilon),
        propensity_marginal=fit_propensity(
            cohort, "marginal", learner=propensity_learner, epsilon=epsilon),
    )


def plugin_po(nuisances, cohort, query, functional, grid,
              return_report=False):
    """Weighted plug-in estimate of one potential-outcome curve.

    Each row i contributes f(x_outcome, z_i, w_i; t) times

        P(x_mediator | z_i, w_i)   P(x_condition | z_i)
        ------------------------ * --------------------
        P(x_mediator | z_i)          P(x_condition)

    and the average is clamped/monotone-projected into a valid curve.
    Rows whose covariates the outcome model cannot serve are dropped and
    counted in the report.
    """
    g = _validate_grid(grid)
    weight_cache = {}
    groups = {}
    for i in range(cohort.n):
        key = (cohort.z_items[i], cohort.w_items[i])
        if key not in weight_cache:
            zi, wi = key
            ratio_med = (
                nuisances.propensity_zw.predict_group(query.x_mediator, zi, wi)
                / nuisances.propensity_z.predict_group(query.x_mediator, zi)
            )
            ratio_cond = (
                nuisances.propensity_z.predict_group(query.x_condition, zi)
                / nuisances.propensity_marginal.predict_group(query.x_condition)
            )
            weight_cache[key] = ratio_med * ratio_cond
        stat = groups.setdefault(key, [0.0, 0])
        stat[0] += weight_cache[key]
        stat[1] += 1

    totals = np.zeros(g.size)
    n_included = 0
    weight_total = 0.0
    n_excluded = 0
    max_weight = 0.0
    for (zi, wi), (weight_sum, count) in groups.items():
        try:
            curve = nuisances.outcome.predict(query.x_outcome, zi, wi)
        except CohortSchemaError:
            n_excluded += count
            continue
        totals += weight_sum * functional_from_curve(curve, functional, g)
        n_included += count
        weight_total += weight_sum
        max_weight = max(max_weight, weight_cache[(zi, wi)])
    if n_included == 0:
        raise EmptyCohortError("every row was outside the outcome model schema")
    raw = totals / n_included

    kind = functional.curve_kind
    fixed, distance = _project(raw, kind)
    curve = StepCurve(
        g, fixed, value_at_zero=1.0 if kind == "survival" else 0.0, kind=kind
    )
    if not return_report:
        return curve
    report = {
        "n_rows": cohort.n,
        "n_excluded": n_excluded,
        "mean_weight": weight_total / n_included,
        "max_weight": max_weight,
        "projection_distance": distance,
    }
    return curve, report


# ---------------------------------------------------------------------------
# Direct summation over discrete tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CohortTables:
    """Empirical frequency tables of a discrete cohort."""

    group: dict          # {x: P(x)}
    confounder: dict     # {x: {z: P(z | x)}}
    mediator: dict       # {(x, z): {w: P(w | x, z)}}


def empirical_tables(cohort):
    n_x = {0: 0, 1: 0}
    n_xz = {}
    n_xzw = {}
    for i in range(cohort.n):
        x = int(cohort.x[i])
        z, w = cohort.z_items[i], cohort.w_items[i]
        n_x[x] += 1
        n_xz[(x, z)] = n_xz.get((x, z), 0) + 1
        n_xzw[(x, z, w)] = n_xzw.get((x, z, w), 0) + 1
    group = {x: n_x[x] / cohort.n for x in (0, 1)}
    confounder = {x: {} for x in (0, 1)}
    for (x, z), c in n_xz.items():
        confounder[x][z] = c / n_x[x] if n_x[x] else 0.0
    mediator = {}
    for (x, z, w), c in n_xzw.items():
        mediator.setdefault((x, z), {})[w] = c / n_xz[(x, z)]
    return CohortTables(group=group, confounder=confounder, mediator=mediator)


def exact_plugin_po(outcome_model, tables, query, functional, grid):
    """Direct evaluation of sum_z P(z|x_cond) sum_w P(w|x_med,z) f(...).

    Matches plugin_po with unclipped frequency-table propensities up to
    floating rounding; exists as the transparent summation form.
    """
    g = _validate_grid(grid)
    conf = tables.confounder.get(query.x_condition)
    if conf is None:
        raise DataError("confounder table missing the conditioning group")
    totals = np.zeros(g.size)
    for z, pz in conf.items():
        med = tables.mediator.get((query.x_mediator, z))
        if med is None:
            raise DataError(
                f"mediator table missing stratum {(query.x_mediator, z)!r}"
            )
        for w, pw in med.items():
            f = functional_from_curve(
                outcome_model.predict(query.x_outcome, z, w), functional, g
            )
            totals += pz * pw * f
    kind = functional.curve_kind
    fixed, _ = _project(totals, kind)
    return StepCurve(
        g, fixed, value_at_zero=1.0 if kind == "survival" else 0.0, kind=kind
    )
