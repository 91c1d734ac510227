"""Cross-fitted one-step debiased estimation of potential-outcome curves.

The estimator combines an outcome-regression / mediator-standardization
plug-in with inverse-propensity and inverse-censoring corrections.  Its
per-row influence contribution has five pieces:

* an IPCW core ``1(M > t)/G(t|.) - S(t|.)`` (survival scale) or
  ``1(M <= t, delta = k)/G(M-|.) - F_k(t|.)`` (cumulative-incidence
  scale), weighted by a propensity odds ratio,
* two censoring-martingale terms ``xi_1`` and ``xi_2`` (survival scale
  only) that debias the censoring model,
* a mediator-centering term comparing the cross-arm outcome prediction
  with its confounder-level average ``nu(Z)``,
* a conditioning-centering term comparing ``nu(Z)`` with the estimand.

All nuisance curves are step functions, so the correction integrals are
finite sums over curve atoms and the algebra below is exact for the
fitted models: with a correctly specified censoring model the row mean
is unbiased for any monotone outcome table whose atoms avoid the
censoring support, and with a correct outcome model it is unbiased for
any censoring table.  Denominators are floored at ``epsilon`` and rows
whose evaluation exceeds ``cap`` in magnitude are rescaled and counted
in the diagnostics; neither safeguard fires on well-behaved cohorts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DegenerateGroupError,
    EstimationError,
    FoldAssignmentError,
)
from .identify import _validate_grid, default_grid
from .nuisance import (
    ConditionalSurvivalModel,
    PropensityModel,
    fit_conditional_survival,
    fit_propensity,
    predict_censoring_hazard_increments,
    propensity_from_spec,
    survival_model_from_spec,
)
from .queries import Functional, PotentialOutcomeQuery

COMPONENT_NAMES = (
    "ipcw_core",
    "xi_one",
    "xi_two",
    "mediator_centering",
    "conditioning_centering",
)

Z_CRITICAL = 1.959963984540054  # two-sided 95% normal quantile


# ---------------------------------------------------------------------------
# Nuisance bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DRNuisances:
    """Everything the influence function needs, fitted or injected.

    ``mediator_rows`` holds the (x, z, w) columns of the rows the bundle
    was fitted on; ``nu(Z)`` is their per-confounder group mean.  When an
    exact mediator law is known instead (generative-spec tables, or a
    deliberate misspecification study), pass ``mediator_table`` mapping
    ``(x, z) -> {w: probability}`` and it takes precedence.
    """

    outcome: ConditionalSurvivalModel
    censoring: ConditionalSurvivalModel
    propensity_zw: PropensityModel
    propensity_z: PropensityModel
    mediator_rows: tuple = None
    mediator_table: dict = None

    def group_marginal(self, x):
        p1 = self.propensity_z.marginal
        return p1 if int(x) == 1 else 1.0 - p1


def fit_dr_nuisances(cohort, functional, *, outcome_learner="stratified",
                     censoring_learner="stratified",
                     propensity_learner="frequency_table", epsilon=0.01,
                     outcome_params=None, censoring_params=None):
    """Fit the full nuisance bundle on one cohort (or fold complement)."""
    target = _outcome_target(functional, cohort.n_causes)
    outcome = fit_conditional_survival(
        cohort, target=target, learner=outcome_learner,
        **(outcome_params or {}),
    )
    censoring = fit_conditional_survival(
        cohort, target="censoring", learner=censoring_learner,
        **(censoring_params or {}),
    )
    propensity_zw = fit_propensity(
        cohort, "zw", learner=propensity_learner, epsilon=epsilon)
    propensity_z = fit_propensity(
        cohort, "z", learner=propensity_learner, epsilon=epsilon)
    return DRNuisances(
        outcome=outcome,
        censoring=censoring,
        propensity_zw=propensity_zw,
        propensity_z=propensity_z,
        mediator_rows=(cohort.x.copy(), cohort.z_items, cohort.w_items),
    )


def dr_nuisances_from_spec(spec, functional):
    """Exact nuisance bundle read off a generative spec (no estimation)."""
    target = _outcome_target(functional, spec.n_causes)
    return DRNuisances(
        outcome=survival_model_from_spec(spec, target),
        censoring=survival_model_from_spec(spec, "censoring"),
        propensity_zw=propensity_from_spec(spec, "zw"),
        propensity_z=propensity_from_spec(spec, "z"),
        mediator_table=dict(spec.p_w_given_xz),
    )


def _outcome_target(functional, n_causes):
    if functional.kind == "cif":
        cause = int(functional.cause or 1)
        if not 1 <= cause <= n_causes:
            raise DataError(
                f"cause {cause} outside the recorded {n_causes} cause(s)")
        return cause
    if functional.kind in ("survival", "all_cause_survival", "rmst"):
        return "event"
    raise DataError(
        "one-step estimation supports survival, all_cause_survival, cif "
        "and rmst functionals; request cumulative hazards from the "
        "plug-in path instead"
    )


def _base_kind(functional):
    """Scale the influence function is evaluated on ("survival"/"cif")."""
    return "cif" if functional.kind == "cif" else "survival"


# ---------------------------------------------------------------------------
# Influence evaluation
# ---------------------------------------------------------------------------

@dataclass
class InfluenceEvaluation:
    """Per-row influence values on a grid, split into named components.

    ``values`` is rows x grid and always equals the sum of the five
    ``components`` arrays entrywise.  The conditioning-centering
    component is reported relative to the ``psi`` the evaluation was
    centered at (zero when uncentered).
    """

    grid: np.ndarray
    values: np.ndarray
    components: dict
    fold_ids: np.ndarray
    n_flagged: int

    def component_gap(self):
        total = sum(self.components[name] for name in COMPONENT_NAMES)
        return float(np.max(np.abs(total - self.values), initial=0.0))


def _nu_values(nuisances, query, base, grid, z_wanted):
    """nu(z) = mean of the cross-arm prediction over the x_w group.

    Returns ({z: (T,) array}, n_fallback) where the fallback pools over
    every x_w row when a confounder value never co-occurs with X = x_w
    in the rows the bundle was fitted on.
    """
    x_y = query.x_outcome
    x_w = query.x_mediator
    cache = {}

    def f_hat(z, w):
        key = (z, w)
        if key not in cache:
            cache[key] = _outcome_values(nuisances.outcome, base,
                                         x_y, z, w, grid)
        return cache[key]

    out = {}
    n_fallback = 0
    if nuisances.mediator_table is not None:
        for z in z_wanted:
            law = nuisances.mediator_table.get((x_w, z))
            if law is None:
                raise EstimationError(
                    f"mediator law missing for group {x_w} at z={z!r}")
            out[z] = sum(p * f_hat(z, w) for w, p in law.items())
        return out, 0
    if nuisances.mediator_rows is None:
        raise EstimationError(
            "nuisance bundle carries neither mediator rows nor a table")
    x_arr, z_items, w_items = nuisances.mediator_rows
    counts = {}
    pooled = {}
    for i in range(len(x_arr)):
        if int(x_arr[i]) != x_w:
            continue
        counts.setdefault(z_items[i], {})
        counts[z_items[i]][w_items[i]] = (
            counts[z_items[i]].get(w_items[i], 0) + 1)
        pooled[(z_items[i], w_items[i])] = (
            pooled.get((z_items[i], w_items[i]), 0) + 1)
    if not pooled:
        raise DegenerateGroupError(
            f"no rows with X={x_w} available to average the mediator over")
    pooled_total = sum(pooled.values())
    pooled_value = None
    for z in z_wanted:
        table = counts.get(z)
        if table is None:
            if pooled_value is None:
                pooled_value = sum(
                    c * f_hat(zj, wj) for (zj, wj), c in pooled.items()
                ) / pooled_total
            out[z] = pooled_value
            n_fallback += 1
            continue
        total = sum(table.values())
        out[z] = sum(c * f_hat(z, w) for w, c in table.items()) / total
    return out, n_fallback


def _outcome_values(model, base, x, z, w, grid):
    curve = (model.predict_cif(x, z, w) if base == "cif"
             else model.predict_survival(x, z, w))
    return curve.evaluate(grid)


def _contribution_components(cohort, nuisances, query, functional, grid,
                             p_condition, epsilon, cap):
    """Uncentered component arrays (rows x grid) plus trim diagnostics."""
    base = _base_kind(functional)
    if base == "cif":
        cause = int(functional.cause or 1)
        if nuisances.outcome.curve_kind != "cif" or \
                nuisances.outcome.target != cause:
            raise EstimationError(
                "outcome model does not predict the requested cause")
    elif nuisances.outcome.curve_kind != "survival":
        raise EstimationError("outcome model predicts cumulative incidence "
                              "but a survival-scale functional was requested")
    if nuisances.censoring.target != "censoring":
        raise EstimationError(
            "censoring bundle entry was not fitted with target='censoring'")

    grid = np.asarray(grid, dtype=float)
    n = cohort.n
    n_t = grid.size
    x_y, x_w, x_z = query.as_tuple()

    comps = {name: np.zeros((n, n_t)) for name in COMPONENT_NAMES}

    cells = {}
    for i in range(n):
        cells.setdefault((cohort.z_items[i], cohort.w_items[i]),
                         []).append(i)

    z_wanted = sorted({z for z, _ in cells}, key=repr)
    nu_map, n_fallback = _nu_values(nuisances, query, base, grid, z_wanted)

    for (z, w), members in cells.items():
        idx = np.asarray(members)
        xs = cohort.x[idx]
        p_xz_z = nuisances.propensity_z.predict_group(x_z, z=z)
        p_xw_z = nuisances.propensity_z.predict_group(x_w, z=z)
        p_xw_zw = nuisances.propensity_zw.predict_group(x_w, z=z, w=w)
        p_xy_zw = nuisances.propensity_zw.predict_group(x_y, z=z, w=w)
        f_y = _outcome_values(nuisances.outcome, base, x_y, z, w, grid)

        sel1 = idx[xs == x_y]
        if sel1.size:
            weight = p_xz_z * p_xw_zw / (p_condition * p_xw_z * p_xy_zw)
            m_rows = cohort.m[sel1]
            d_rows = cohort.delta[sel1]
            g_curve = nuisances.censoring.predict_survival(x_y, z, w)
            if base == "survival":
                s_curve = nuisances.outcome.predict_survival(x_y, z, w)
                g_grid = np.maximum(g_curve.evaluate(grid), epsilon)
                core = (m_rows[:, None] > grid[None, :]) / g_grid[None, :]
                comps["ipcw_core"][sel1] = weight * (core - f_y[None, :])

                cens = d_rows == 0
                if np.any(cens):
                    s_m = np.maximum(s_curve.evaluate(m_rows), epsilon)
                    g_m = np.maximum(g_curve.evaluate(m_rows), epsilon)
                    before = m_rows[:, None] <= grid[None, :]
                    xi1 = (cens[:, None] & before) * (
                        f_y[None, :] / (s_m * g_m)[:, None])
                    comps["xi_one"][sel1] = weight * xi1

                times, lams = _censor_increments(
                    nuisances.censoring, (x_y, z, w), grid)
                if times.size:
                    s_left = np.maximum(s_curve.left_limit(times), epsilon)
                    g_at = np.maximum(g_curve.evaluate(times), epsilon)
                    prefix = np.concatenate(
                        ([0.0], np.cumsum(lams / (s_left * g_at))))
                    i_m = np.searchsorted(times, m_rows, side="right")
                    i_t = np.searchsorted(times, grid, side="right")
                    xi2 = f_y[None, :] * prefix[
                        np.minimum(i_m[:, None], i_t[None, :])]
                    comps["xi_two"][sel1] = -weight * xi2
            else:
                g_left = np.maximum(g_curve.left_limit(m_rows), epsilon)
                hit = ((d_rows == cause)[:, None]
                       & (m_rows[:, None] <= grid[None, :]))
                core = hit / g_left[:, None]
                comps["ipcw_core"][sel1] = weight * (core - f_y[None, :])

        sel2 = idx[xs == x_w]
        if sel2.size:
            weight = p_xz_z / (p_condition * p_xw_z)
            comps["mediator_centering"][sel2] = weight * (
                f_y[None, :] - nu_map[z][None, :])

        sel3 = idx[xs == x_z]
        if sel3.size:
            comps["conditioning_centering"][sel3] = (
                nu_map[z][None, :] / p_condition)

    total = sum(comps[name] for name in COMPONENT_NAMES)
    bad = ~np.isfinite(total)
    over = np.abs(total) > cap
    flagged_rows = np.flatnonzero(np.any(bad | over, axis=1))
    if flagged_rows.size:
        scale = np.ones_like(total)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale[over] = cap / np.abs(total[over])
        scale[bad] = 0.0
        for name in COMPONENT_NAMES:
            comps[name] *= scale
            comps[name][bad] = 0.0
    return comps, int(flagged_rows.size), n_fallback


def _censor_increments(model, covariates, grid):
    pairs = predict_censoring_hazard_increments(model, covariates, grid)
    if not pairs:
        return np.empty(0), np.empty(0)
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0], arr[:, 1]


def evaluate_influence(cohort, nuisances, query, functional, grid, *,
                       psi=0.0, p_condition=None, epsilon=0.01, cap=50.0,
                       fold_ids=None):
    """Influence values for every row at every grid time, centered at psi.

    ``p_condition`` defaults to the nuisance bundle's marginal for the
    conditioning group; cross-fitting passes the full-sample fraction
    explicitly so that centering is exact.
    """
    grid = _validate_grid(grid)
    query = _as_query(query)
    if p_condition is None:
        p_condition = nuisances.group_marginal(query.x_condition)
    if not p_condition > 0.0:
        raise DegenerateGroupError("conditioning group has probability zero")
    comps, n_flagged, _ = _contribution_components(
        cohort, nuisances, query, functional, grid, p_condition, epsilon,
        cap)
    psi_arr = np.broadcast_to(np.asarray(psi, dtype=float), grid.shape)
    ind_z = (cohort.x == query.x_condition).astype(float)
    comps["conditioning_centering"] = comps["conditioning_centering"] - (
        ind_z[:, None] / p_condition) * psi_arr[None, :]
    values = sum(comps[name] for name in COMPONENT_NAMES)
    if fold_ids is None:
        fold_ids = np.zeros(cohort.n, dtype=int)
    return InfluenceEvaluation(
        grid=grid, values=values, components=comps,
        fold_ids=np.asarray(fold_ids, dtype=int), n_flagged=n_flagged,
    )


def _as_query(query):
    if isinstance(query, PotentialOutcomeQuery):
        return query
    return PotentialOutcomeQuery(*query)


def _row_cohort(row, n_causes):
    from .scm import Cohort

    return Cohort(
        x=[row["x"]], z=[row["z"]], w=[row["w"]],
        m=[row["m"]], delta=[row["delta"]], n_causes=n_causes,
    )


def influence_survival(row, nuisances, query, t, *, psi=0.0,
                       p_condition=None, epsilon=0.01, cap=50.0):
    """Survival-scale influence value for a single row at one time.

    ``row`` is a mapping with keys x, z, w, m, delta.  ``psi`` is the
    centering value; the default 0 returns the uncentered contribution.
    """
    cohort = _row_cohort(row, nuisances.outcome.n_causes)
    kind = ("survival" if nuisances.outcome.n_causes == 1
            else "all_cause_survival")
    ev = evaluate_influence(
        cohort, nuisances, query, Functional(kind), [float(t)], psi=psi,
        p_condition=p_condition, epsilon=epsilon, cap=cap,
    )
    return float(ev.values[0, 0])


def influence_cif(row, nuisances, query, k, t, *, psi=0.0,
                  p_condition=None, epsilon=0.01, cap=50.0):
    """Cumulative-incidence influence value for a single row at one time."""
    cohort = _row_cohort(row, nuisances.outcome.n_causes)
    ev = evaluate_influence(
        cohort, nuisances, query, Functional("cif", cause=int(k)),
        [float(t)], psi=psi, p_condition=p_condition, epsilon=epsilon,
        cap=cap,
    )
    return float(ev.values[0, 0])


# ---------------------------------------------------------------------------
# Cross-fitting
# ---------------------------------------------------------------------------

def assign_folds(cohort, n_folds=2, seed=0):
    """Shuffled round-robin fold labels, stratified on (X, any-event)."""
    if n_folds < 2:
        raise DataError("cross-fitting needs at least two folds")
    if n_folds > cohort.n:
        raise DataError("more folds than rows")
    rng = np.random.default_rng(seed)
    fold = np.full(cohort.n, -1, dtype=int)
    for xv in (0, 1):
        for has_event in (False, True):
            sel = np.flatnonzero(
                (cohort.x == xv) & ((cohort.delta > 0) == has_event))
            if sel.size == 0:
                continue
            sel = sel[rng.permutation(sel.size)]
            fold[sel] = np.arange(sel.size) % n_folds
    _check_folds(cohort, fold, n_folds)
    return fold


def _check_folds(cohort, fold, n_folds):
    for f in range(n_folds):
        xs = cohort.x[fold == f]
        if xs.size == 0 or xs.min() == xs.max():
            raise FoldAssignmentError(
                f"fold {f} does not contain both groups")


def crossfit_dr(cohort, query, functional, grid=None, n_folds=2,
                learners=None, seed=0, *, nuisances=None, epsilon=0.01,
                cap=50.0, fold_ids=None):
    """Cross-fitted one-step estimate of one potential-outcome curve."""
    query = _as_query(query)
    result = crossfit_dr_many(
        cohort, [query], functional, grid=grid, n_folds=n_folds,
        learners=learners, seed=seed, nuisances=nuisances, epsilon=epsilon,
        cap=cap, fold_ids=fold_ids,
    )
    return result[query]


def crossfit_dr_many(cohort, queries, functional, grid=None, n_folds=2,
                     learners=None, seed=0, *, nuisances=None, epsilon=0.01,
                     cap=50.0, fold_ids=None):
    """Shared-nuisance cross-fitting for several queries at once.

    All queries are evaluated against the same fold assignment and the
    same per-fold nuisance fits, so differences of the returned per-row
    influence matrices are valid influence functions for contrasts.
    Passing ``nuisances`` skips fitting entirely and evaluates the fixed
    bundle on every row (single pass, fold id 0 everywhere).
    """
    if grid is None:
        grid = default_grid(cohort)
    grid = _validate_grid(grid)
    queries = [_as_query(q) for q in queries]
    seen = {}
    for q in queries:
        seen.setdefault(q, None)
    queries = list(seen)

    n = cohort.n
    base_functional = functional
    if functional.kind == "rmst":
        base_functional = Functional(
            "survival" if cohort.n_causes == 1 else "all_cause_survival")

    p_cond = {}
    for q in queries:
        frac = float(np.mean(cohort.x == q.x_condition))
        if frac == 0.0:
            raise DegenerateGroupError(
                f"no rows in conditioning group {q.x_condition}")
        p_cond[q] = frac

    unc = {q: np.zeros((n, grid.size)) for q in queries}
    n_flagged = {q: 0 for q in queries}
    n_fallback = {q: 0 for q in queries}

    if nuisances is not None:
        fold = np.zeros(n, dtype=int)
        fold_plan = [(nuisances, np.arange(n))]
        n_folds_used = 0
    else:
        if fold_ids is not None:
            fold = np.asarray(fold_ids, dtype=int)
            if fold.shape != (n,):
                raise DataError("fold ids must give one label per row")
            n_folds_used = int(fold.max()) + 1
            if n_folds_used < 2:
                raise DataError("cross-fitting needs at least two folds")
            _check_folds(cohort, fold, n_folds_used)
        else:
            fold = assign_folds(cohort, n_folds, seed)
            n_folds_used = n_folds
        fold_plan = []
        for f in range(n_folds_used):
            train = cohort.subset(fold != f)
            bundle = fit_dr_nuisances(
                train, base_functional, epsilon=epsilon,
                **(learners or {}))
            fold_plan.append((bundle, np.flatnonzero(fold == f)))

    for bundle, rows in fold_plan:
        part = cohort.subset(rows)
        for q in queries:
            comps, flags, fallbacks = _contribution_components(
                part, bundle, q, base_functional, grid, p_cond[q],
                epsilon, cap)
            unc[q][rows] = sum(comps[name] for name in COMPONENT_NAMES)
            n_flagged[q] += flags
            n_fallback[q] += fallbacks

    out = {}
    for q in queries:
        estimate = unc[q].mean(axis=0)
        ind_z = (cohort.x == q.x_condition).astype(float)
        if_matrix = unc[q] - np.outer(ind_z / p_cond[q], estimate)
        work_grid = grid
        if functional.kind == "rmst":
            shift, weights = _rmst_weights(grid, functional.horizon)
            estimate = shift + weights @ estimate
            if_matrix = if_matrix @ weights.T
        se = if_matrix.std(axis=0, ddof=1) / np.sqrt(n)
        diagnostics = {
            "n_rows": n,
            "n_folds": n_folds_used,
            "fold_sizes": np.bincount(fold, minlength=max(
                n_folds_used, 1)).tolist(),
            "p_condition": p_cond[q],
            "n_flagged": n_flagged[q],
            "n_mediator_fallback": n_fallback[q],
            "epsilon": epsilon,
            "cap": cap,
            "seed": seed,
            "fixed_nuisances": nuisances is not None,
        }
        out[q] = DRCurveEstimate(
            grid=work_grid,
            estimate=estimate,
            se=se,
            lo=estimate - Z_CRITICAL * se,
            hi=estimate + Z_CRITICAL * se,
            query=q,
            functional=functional,
            if_matrix=if_matrix,
            fold_ids=fold,
            diagnostics=diagnostics,
        )
    return out


def _rmst_weights(grid, horizon):
    """Linear map taking survival values on the grid to running RMST.

    The estimate is treated as a right-continuous step curve that equals
    one before the first grid time, so the integral to t is an exact
    finite sum; the same weights transport the per-row influence
    matrix.  ``horizon`` (when given) caps the integration time of every
    grid point.
    """
    n_t = grid.size
    shift = np.zeros(n_t)
    weights = np.zeros((n_t, n_t))
    cap = float("inf") if horizon is None else float(horizon)
    for j in range(n_t):
        t_eff = min(float(grid[j]), cap)
        shift[j] = min(t_eff, float(grid[0]))
        for l in range(j):
            left = float(grid[l])
            right = min(float(grid[l + 1]), t_eff) if l + 1 < n_t else t_eff
            right = min(right, t_eff)
            if right > left:
                weights[j, l] = right - left
    return shift, weights


# ---------------------------------------------------------------------------
# Result container
# ---------------------------------------------------------------------------

@dataclass
class DRCurveEstimate:
    """Point estimates, normal-approximation band, and per-row influence."""

    grid: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    query: PotentialOutcomeQuery
    functional: Functional
    if_matrix: np.ndarray
    fold_ids: np.ndarray
    diagnostics: dict

    def to_csv(self, header_comment=None):
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("t,estimate,se,lo,hi")
        for j in range(self.grid.size):
            lines.append(",".join(
                "%.12g" % v for v in (
                    self.grid[j], self.estimate[j], self.se[j],
                    self.lo[j], self.hi[j])))
        return "\n".join(lines) + "\n"

    def to_json(self, indent=2):
        payload = {
            "query": list(self.query.as_tuple()),
            "functional": {
                "kind": self.functional.kind,
                "cause": self.functional.cause,
                "horizon": self.functional.horizon,
            },
            "grid": [float(v) for v in self.grid],
            "estimate": [float(v) for v in self.estimate],
            "se": [float(v) for v in self.se],
            "lo": [float(v) for v in self.lo],
            "hi": [float(v) for v in self.hi],
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload, indent=indent, sort_keys=True)
