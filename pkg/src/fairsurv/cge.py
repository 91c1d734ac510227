"""Reconstruction of latent survival under informative censoring.

When the event time T and the censoring time C are dependent, their
joint survival is modeled by an Archimedean copula on the marginals,
H(t, c) = C_tau(S(t), G(c)), so phi(H) = phi(S) + phi(G).  Everything
observable is carried by the pair of sub-distribution incidence curves
CIF_T(t) = P(M <= t, event) and CIF_C(t) = P(M <= t, censored), whose
sum fixes the joint survival S_all = 1 - CIF_T - CIF_C on the diagonal.
The recursions here invert that relation step by step to recover the
latent marginals S and G for a fixed dependence strength tau.

Two variants are provided.  The classical recursion assumes at most one
of the two incidence curves jumps per step and is exact under that
assumption.  When both move inside one grid step the inversion is no
longer unique; the bounded variant computes sharp per-step lower and
upper bounds for both marginals (attained by letting one cause's
increment happen first within the step), takes midpoints as point
estimates, re-projects them onto the additive identity, and iterates.
Bounds collapse as the grid refines.

Route I applies the bounded recursion inside covariate strata and
aggregates with the same propensity weighting as the plug-in estimator;
Route II applies it to population-level potential-outcome incidence
curves estimated by cross-fitted one-step correction (censoring recoded
as a competing event, so no row is treated as incomplete), and wraps
the result in an uncertainty envelope built from band corners plus
uniformly sampled admissible incidence trajectories.  The envelope is a
sensitivity band: it propagates the incidence-band uncertainty through
a nonlinear map and carries no formal coverage guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .copulas import CopulaSpec, generator, generator_inverse
from .curves import StepCurve
from .dr import Z_CRITICAL, assign_folds, crossfit_dr_many
from .errors import (
    CoincidentJumpError,
    DataError,
    InfeasibleBandsError,
)
from .identify import _validate_grid, default_grid
from .queries import Functional
from .scm import Cohort

_SUM_SLACK = 1e-12


def _phi(spec, u):
    return float(generator(spec, u))


def _phi_inv(spec, s):
    return float(generator_inverse(spec, s))


def _invert_nonneg(spec, difference):
    """phi-inverse of a generator difference, clamped into [0, inf).

    Exact arithmetic keeps the difference nonnegative; float noise can
    push it slightly below zero, and saturated generators (both inputs
    at the clip floor) can produce nan.  Both cases are mapped to the
    nearest meaningful value and flagged so callers can count them.
    """
    if math.isnan(difference):
        return 0.0, True
    if difference < 0.0:
        return _phi_inv(spec, 0.0), True
    return _phi_inv(spec, difference), False


def _jump_times(curve):
    """Breakpoints where the curve actually moves."""
    seq = np.concatenate(([curve.value_at_zero], curve.values))
    moved = np.diff(seq) != 0.0
    return curve.breakpoints[moved]


def _check_cif_inputs(cif_t, cif_c):
    for name, curve in (("event", cif_t), ("censoring", cif_c)):
        if not isinstance(curve, StepCurve):
            raise DataError(f"{name} incidence must be a step curve")
        if curve.value_at_zero != 0.0:
            raise DataError(f"{name} incidence must start at zero")


def cge_classical(cif_t, cif_c, spec):
    """Single-jump recursion: exact when the two curves never move together.

    Walks the merged jump times; an event jump updates S through
    phi(S) = phi(S_all) - phi(G), a censoring jump updates G
    symmetrically.  Returns the pair (S, G) of latent marginal survival
    curves on the merged jump grid.
    """
    _check_cif_inputs(cif_t, cif_c)
    jumps_t = _jump_times(cif_t)
    jumps_c = _jump_times(cif_c)
    shared = np.intersect1d(jumps_t, jumps_c)
    if shared.size:
        raise CoincidentJumpError(
            f"event and censoring incidence jump together at t={shared[0]:g}; "
            "the single-jump recursion does not apply — use the bounded "
            "variant")
    merged = np.union1d(jumps_t, jumps_c)
    if merged.size == 0:
        raise DataError("both incidence curves are identically zero")

    is_event = np.isin(merged, jumps_t)
    s_vals = np.empty(merged.size)
    g_vals = np.empty(merged.size)
    s_prev, g_prev = 1.0, 1.0
    for i, t in enumerate(merged):
        s_all = 1.0 - cif_t.evaluate(t) - cif_c.evaluate(t)
        if s_all < -_SUM_SLACK:
            raise DataError(
                f"incidence curves sum above one at t={t:g}")
        s_all = max(s_all, 0.0)
        if is_event[i]:
            if s_all <= 0.0:
                s_prev = 0.0
            else:
                value, _ = _invert_nonneg(
                    spec, _phi(spec, s_all) - _phi(spec, g_prev))
                s_prev = min(value, s_prev)
        else:
            if s_all <= 0.0:
                g_prev = 0.0
            else:
                value, _ = _invert_nonneg(
                    spec, _phi(spec, s_all) - _phi(spec, s_prev))
                g_prev = min(value, g_prev)
        s_vals[i] = s_prev
        g_vals[i] = g_prev
    s_vals = np.clip(s_vals, 0.0, 1.0)
    g_vals = np.clip(g_vals, 0.0, 1.0)
    return (StepCurve(merged, s_vals, value_at_zero=1.0, kind="survival"),
            StepCurve(merged, g_vals, value_at_zero=1.0, kind="survival"))


@dataclass
class CGEState:
    """Grid-wise bounds, midpoints, and inputs of one bounded recursion."""

    grid: np.ndarray
    s_lo: np.ndarray
    s_hi: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray
    s_hat: np.ndarray
    g_hat: np.ndarray
    cif_t: StepCurve
    cif_c: StepCurve
    s_all: StepCurve
    spec: CopulaSpec
    diagnostics: dict

    @property
    def survival(self):
        return StepCurve(self.grid, self.s_hat, value_at_zero=1.0,
                         kind="survival")

    @property
    def censoring_survival(self):
        return StepCurve(self.grid, self.g_hat, value_at_zero=1.0,
                         kind="survival")

    def max_width(self):
        width_s = float(np.max(self.s_hi - self.s_lo))
        width_g = float(np.max(self.g_hi - self.g_lo))
        return max(width_s, width_g)

    def identity_gap(self):
        """sup |phi(S_all) - phi(S) - phi(G)| over points where finite."""
        worst = 0.0
        for j in range(self.grid.size):
            total = _phi(self.spec, self.s_all.values[j])
            parts = _phi(self.spec, self.s_hat[j]) \
                + _phi(self.spec, self.g_hat[j])
            if math.isfinite(total) and math.isfinite(parts):
                worst = max(worst, abs(total - parts))
        return worst


def cge_bounded(cif_t, cif_c, spec, grid):
    """Sharp per-step bounds plus midpoint estimates on an explicit grid.

    Per step the extremes attribute the whole joint decrease to one
    cause first: holding the censoring share fixed maximizes G and
    minimizes S, and symmetrically.  Midpoints are re-projected onto
    the additive identity (G solved from S via phi) before the next
    step, so drift cannot compound; the stored bound sequences are
    monotonized by a running minimum, which keeps them valid and keeps
    the midpoints inside.

    Where the two incidences sum to one, follow-up is exhausted and the
    latent marginal is no longer identified: the sharp interval there
    is [0, previous value] and the midpoint halves.  Grids meant for
    point reconstruction should stay inside follow-up.
    """
    _check_cif_inputs(cif_t, cif_c)
    grid = _validate_grid(grid)
    for name, curve in (("event", cif_t), ("censoring", cif_c)):
        missing = np.setdiff1d(_jump_times(curve), grid)
        if missing.size:
            raise DataError(
                f"grid must contain every jump of the {name} incidence; "
                f"missing t={missing[0]:g}")

    ct = np.asarray(cif_t.evaluate(grid), dtype=float)
    cc = np.asarray(cif_c.evaluate(grid), dtype=float)
    sums = ct + cc
    over = np.flatnonzero(sums > 1.0 + _SUM_SLACK)
    if over.size:
        j = int(over[0])
        raise DataError(
            f"incidence curves sum to {sums[j]:.6g} > 1 at t={grid[j]:g}")
    s_all_vals = np.clip(1.0 - sums, 0.0, 1.0)
    d_t = np.diff(np.concatenate(([0.0], ct)))
    d_c = np.diff(np.concatenate(([0.0], cc)))

    m = grid.size
    s_lo = np.empty(m)
    s_hi = np.empty(m)
    g_lo = np.empty(m)
    g_hi = np.empty(m)
    s_hat = np.empty(m)
    g_hat = np.empty(m)
    n_clamps = 0

    s_prev, g_prev = 1.0, 1.0
    s_all_prev = 1.0
    for i in range(m):
        s_all_i = float(s_all_vals[i])
        h_low = max(s_all_prev - float(d_c[i]), 0.0)
        h_up = max(s_all_prev - float(d_t[i]), 0.0)
        phi_s_prev = _phi(spec, s_prev)
        phi_g_prev = _phi(spec, g_prev)
        phi_all = _phi(spec, s_all_i)

        hi_g, c1 = _invert_nonneg(spec, _phi(spec, h_low) - phi_s_prev)
        if hi_g > 0.0:
            lo_s, c2 = _invert_nonneg(spec, phi_all - _phi(spec, hi_g))
        else:
            lo_s, c2 = s_all_i, False
        hi_s, c3 = _invert_nonneg(spec, _phi(spec, h_up) - phi_g_prev)
        if hi_s > 0.0:
            lo_g, c4 = _invert_nonneg(spec, phi_all - _phi(spec, hi_s))
        else:
            lo_g, c4 = s_all_i, False
        n_clamps += sum((c1, c2, c3, c4))

        mid_s = min(0.5 * (lo_s + hi_s), s_prev)
        if mid_s <= 0.0:
            mid_g = 0.0 if s_all_i <= 0.0 else g_prev
        else:
            mid_g, _ = _invert_nonneg(spec, phi_all - _phi(spec, mid_s))
        mid_g = min(mid_g, g_prev)

        s_lo[i], s_hi[i] = lo_s, hi_s
        g_lo[i], g_hi[i] = lo_g, hi_g
        s_hat[i], g_hat[i] = mid_s, mid_g
        s_prev, g_prev, s_all_prev = mid_s, mid_g, s_all_i

    s_lo = np.minimum.accumulate(np.clip(s_lo, 0.0, 1.0))
    s_hi = np.minimum.accumulate(np.clip(s_hi, 0.0, 1.0))
    g_lo = np.minimum.accumulate(np.clip(g_lo, 0.0, 1.0))
    g_hi = np.minimum.accumulate(np.clip(g_hi, 0.0, 1.0))
    s_lo = np.minimum(s_lo, s_hat)
    s_hi = np.maximum(s_hi, s_hat)
    g_lo = np.minimum(g_lo, g_hat)
    g_hi = np.maximum(g_hi, g_hat)

    state = CGEState(
        grid=grid, s_lo=s_lo, s_hi=s_hi, g_lo=g_lo, g_hi=g_hi,
        s_hat=s_hat, g_hat=g_hat,
        cif_t=cif_t.restrict(grid), cif_c=cif_c.restrict(grid),
        s_all=StepCurve(grid, s_all_vals, value_at_zero=1.0,
                        kind="survival"),
        spec=spec,
        diagnostics={"n_negative_phi_clamps": n_clamps},
    )
    state.diagnostics["max_width"] = state.max_width()
    state.diagnostics["identity_gap"] = state.identity_gap()
    return state


# ---------------------------------------------------------------------------
# Route I: per-stratum reconstruction, aggregated by propensity weights
# ---------------------------------------------------------------------------

def _empirical_cif_pair(m, delta, grid):
    """Sub-distribution incidence curves of observed rows on a grid."""
    ct = np.array([np.mean((m <= t) & (delta == 1)) for t in grid])
    cc = np.array([np.mean((m <= t) & (delta == 0)) for t in grid])
    return (StepCurve(grid, ct, value_at_zero=0.0, kind="cif"),
            StepCurve(grid, cc, value_at_zero=0.0, kind="cif"))


def route1_conditional(cohort, spec, nuisances, query, grid):
    """Stratum-wise bounded reconstruction, plug-in weighted into a PO curve.

    Within every covariate cell of the outcome arm the observed rows
    give empirical event/censoring incidence on the grid; the bounded
    recursion turns each pair into a latent survival midpoint, and the
    stratum curves are averaged with the same mediator/conditioning
    propensity ratios as the plug-in estimator.  Cells unseen in the
    outcome arm fall back to the arm pooled on the confounder, then to
    the whole arm.
    """
    if cohort.n_causes != 1:
        raise DataError(
            "informative-censoring reconstruction covers a single event "
            "type")
    grid = _validate_grid(grid)

    arm = query.x_outcome
    arm_rows = np.flatnonzero(cohort.x == arm)
    if arm_rows.size == 0:
        raise DataError(f"no rows in outcome arm {arm}")
    by_zw = {}
    by_z = {}
    for i in arm_rows:
        by_zw.setdefault((cohort.z_items[i], cohort.w_items[i]),
                         []).append(i)
        by_z.setdefault(cohort.z_items[i], []).append(i)

    curve_cache = {}

    def stratum_curve(z, w):
        key = (z, w)
        if key not in curve_cache:
            rows = by_zw.get(key) or by_z.get(z) or list(arm_rows)
            idx = np.asarray(rows)
            cif_t, cif_c = _empirical_cif_pair(
                cohort.m[idx], cohort.delta[idx], grid)
            curve_cache[key] = cge_bounded(cif_t, cif_c, spec, grid).s_hat
        return curve_cache[key]

    totals = np.zeros(grid.size)
    weight_cache = {}
    for i in range(cohort.n):
        zi, wi = cohort.z_items[i], cohort.w_items[i]
        key = (zi, wi)
        if key not in weight_cache:
            ratio_med = (
                nuisances.propensity_zw.predict_group(query.x_mediator, zi, wi)
                / nuisances.propensity_z.predict_group(query.x_mediator, zi)
            )
            ratio_cond = (
                nuisances.propensity_z.predict_group(query.x_condition, zi)
                / nuisances.propensity_marginal.predict_group(
                    query.x_condition)
            )
            weight_cache[key] = ratio_med * ratio_cond
        totals += weight_cache[key] * stratum_curve(zi, wi)
    values = np.clip(totals / cohort.n, 0.0, 1.0)
    return StepCurve(grid, values, value_at_zero=1.0, kind="survival")


# ---------------------------------------------------------------------------
# Route II: population-level incidence with an uncertainty envelope
# ---------------------------------------------------------------------------

def _suffix_min(values):
    return np.minimum.accumulate(values[::-1])[::-1]


def _sanitize_cif_pair(ct, cc):
    """Force a pair of value arrays into admissible incidence curves.

    Clips into [0, 1], enforces non-decreasing values by a running
    maximum, and scales both curves proportionally wherever their sum
    exceeds one.  Scaling can dent monotonicity, so it is followed by a
    suffix minimum — the largest non-decreasing curve that never rises
    above the scaled values — which cannot push a sum back over one.
    Returns the arrays plus the number of scaled points.
    """
    ct = np.maximum.accumulate(np.clip(np.asarray(ct, float), 0.0, 1.0))
    cc = np.maximum.accumulate(np.clip(np.asarray(cc, float), 0.0, 1.0))
    sums = ct + cc
    scale = np.where(sums > 1.0, 1.0 / np.where(sums > 1.0, sums, 1.0), 1.0)
    n_scaled = int(np.sum(sums > 1.0 + _SUM_SLACK))
    ct = _suffix_min(ct * scale)
    cc = _suffix_min(cc * scale)
    return ct, cc, n_scaled


def _midpoint_curve(ct, cc, spec, grid):
    cif_t = StepCurve(grid, ct, value_at_zero=0.0, kind="cif")
    cif_c = StepCurve(grid, cc, value_at_zero=0.0, kind="cif")
    return cge_bounded(cif_t, cif_c, spec, grid)


@dataclass
class Route2Result:
    """Central latent-survival curve plus its sensitivity envelope.

    The envelope is the pointwise min/max of reconstructions over the
    four band corners, the accepted sampled incidence trajectories, and
    the central curve itself; it propagates incidence uncertainty and
    is not a calibrated confidence band.
    """

    grid: np.ndarray
    central: np.ndarray
    env_lo: np.ndarray
    env_hi: np.ndarray
    tau: float
    family: str
    state: CGEState
    cif_t_estimate: object
    cif_c_estimate: object
    diagnostics: dict

    @property
    def survival(self):
        return StepCurve(self.grid, self.central, value_at_zero=1.0,
                         kind="survival")

    def to_csv(self, header_comment=None):
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("t,central,env_lo,env_hi,tau")
        for j in range(self.grid.size):
            lines.append(",".join(
                "%.12g" % v for v in (
                    self.grid[j], self.central[j], self.env_lo[j],
                    self.env_hi[j], self.tau)))
        return "\n".join(lines) + "\n"


def route2_population(cohort, spec, query, grid=None, dr_config=None,
                      envelope_config=None, *, cif_estimates=None):
    """Population-route reconstruction of one latent potential outcome.

    Censoring is recoded as a second competing event, so the whole
    sample is fully observed and the cross-fitted one-step estimator
    yields incidence curves (with bands) for both the event and the
    censoring cause under the query.  The bounded recursion on the
    central curves gives the point reconstruction; corners of the
    bands and uniformly sampled admissible trajectories within them
    span the envelope.  Pass `cif_estimates=(event, censoring)` with
    objects carrying grid/estimate/se to skip the estimation step.
    """
    dr_config = dict(dr_config or {})
    envelope_config = dict(envelope_config or {})
    n_samples = int(envelope_config.pop("n_samples", 200))
    sample_seed = int(envelope_config.pop("seed", 0))
    if envelope_config:
        raise DataError(
            f"unknown envelope options {sorted(envelope_config)!r}")
    if n_samples < 0:
        raise DataError("n_samples must be nonnegative")

    if cif_estimates is None:
        if cohort.n_causes != 1:
            raise DataError(
                "informative-censoring reconstruction covers a single "
                "event type")
        recoded = Cohort(
            cohort.x,
            cohort.z_items,
            cohort.w_items,
            cohort.m,
            np.where(cohort.delta == 1, 1, 2),
            n_causes=2,
        )
        if grid is None:
            # the recoded cohort: censoring times are jump points of the
            # second incidence curve, so the grid must resolve them too
            grid = default_grid(recoded)
        grid = _validate_grid(grid)
        n_folds = int(dr_config.pop("n_folds", 2))
        seed = int(dr_config.pop("seed", 0))
        fold = assign_folds(recoded, n_folds, seed)
        est_t = crossfit_dr_many(
            recoded, [query], Functional("cif", cause=1), grid=grid,
            fold_ids=fold, seed=seed, **dr_config)[query]
        est_c = crossfit_dr_many(
            recoded, [query], Functional("cif", cause=2), grid=grid,
            fold_ids=fold, seed=seed, **dr_config)[query]
    else:
        est_t, est_c = cif_estimates
        grid = _validate_grid(est_t.grid if grid is None else grid)
        if (not np.array_equal(np.asarray(est_t.grid, float), grid)
                or not np.array_equal(np.asarray(est_c.grid, float), grid)):
            raise DataError("incidence estimates must share the grid")

    lo_t = np.clip(np.asarray(est_t.estimate) - Z_CRITICAL
                   * np.asarray(est_t.se), 0.0, 1.0)
    hi_t = np.clip(np.asarray(est_t.estimate) + Z_CRITICAL
                   * np.asarray(est_t.se), 0.0, 1.0)
    lo_c = np.clip(np.asarray(est_c.estimate) - Z_CRITICAL
                   * np.asarray(est_c.se), 0.0, 1.0)
    hi_c = np.clip(np.asarray(est_c.estimate) + Z_CRITICAL
                   * np.asarray(est_c.se), 0.0, 1.0)
    lo_t = np.maximum.accumulate(lo_t)
    hi_t = np.maximum.accumulate(hi_t)
    lo_c = np.maximum.accumulate(lo_c)
    hi_c = np.maximum.accumulate(hi_c)

    infeasible = np.flatnonzero(lo_t + lo_c > 1.0 + _SUM_SLACK)
    if infeasible.size:
        j = int(infeasible[0])
        raise InfeasibleBandsError(
            f"incidence bands force a sum above one at t={grid[j]:g}; no "
            "admissible trajectory exists")

    ct_central, cc_central, n_scaled = _sanitize_cif_pair(
        np.asarray(est_t.estimate), np.asarray(est_c.estimate))
    state = _midpoint_curve(ct_central, cc_central, spec, grid)
    central = state.s_hat

    member_curves = [central]
    corner_scaled = 0
    for band_t in (lo_t, hi_t):
        for band_c in (lo_c, hi_c):
            ct, cc, scaled = _sanitize_cif_pair(band_t, band_c)
            corner_scaled += scaled
            member_curves.append(_midpoint_curve(ct, cc, spec, grid).s_hat)

    rng = np.random.default_rng(sample_seed)
    accepted = 0
    attempts = 0
    max_attempts = max(500 * n_samples, 1)
    while accepted < n_samples and attempts < max_attempts:
        attempts += 1
        draw_t = np.sort(lo_t + rng.random(grid.size) * (hi_t - lo_t))
        draw_c = np.sort(lo_c + rng.random(grid.size) * (hi_c - lo_c))
        ok = (np.all(draw_t >= lo_t) and np.all(draw_t <= hi_t)
              and np.all(draw_c >= lo_c) and np.all(draw_c <= hi_c)
              and np.all(draw_t + draw_c <= 1.0 + _SUM_SLACK))
        if not ok:
            continue
        member_curves.append(
            _midpoint_curve(draw_t, draw_c, spec, grid).s_hat)
        accepted += 1
    if n_samples > 0 and accepted < n_samples:
        raise InfeasibleBandsError(
            f"only {accepted} of {n_samples} sampled incidence "
            f"trajectories were admissible after {attempts} attempts")

    stack = np.vstack(member_curves)
    return Route2Result(
        grid=grid,
        central=central,
        env_lo=stack.min(axis=0),
        env_hi=stack.max(axis=0),
        tau=spec.kendall_tau,
        family=spec.family,
        state=state,
        cif_t_estimate=est_t,
        cif_c_estimate=est_c,
        diagnostics={
            "n_samples_accepted": accepted,
            "n_sample_attempts": attempts,
            "n_central_scaled_points": n_scaled,
            "n_corner_scaled_points": corner_scaled,
            "sample_seed": sample_seed,
        },
    )
