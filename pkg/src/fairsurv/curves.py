"""Right-continuous step curves and classical survival estimators.

The step curve is the common currency of the package: Kaplan-Meier and
Aalen-Johansen output, conditional model predictions, potential-outcome
curves, and decomposition series all evaluate through it.  Curves are
right-continuous with left limits; ties between events and censorings at
the same time are resolved events-first throughout.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .errors import DataError, EmptyCohortError

_MONOTONE_SLACK = 1e-12

# Curve kinds and the shape constraint each one enforces.
_KINDS = ("survival", "cif", "hazard", "generic")


class StepCurve:
    """A right-continuous piecewise-constant function on [0, inf).

    Parameters
    ----------
    breakpoints : array-like
        Strictly increasing, nonnegative, finite jump locations.
    values : array-like
        Value attained at (and after) each breakpoint.
    value_at_zero : float
        Value on [0, breakpoints[0]).  Defaults to 1.0 which suits
        survival curves; cumulative-incidence curves pass 0.0.
    kind : str
        One of ``survival`` (non-increasing, within [0, 1]), ``cif``
        (non-decreasing, within [0, 1]), ``hazard`` (non-decreasing,
        nonnegative) or ``generic`` (unconstrained).
    """

    __slots__ = ("breakpoints", "values", "value_at_zero", "kind")

    def __init__(self, breakpoints, values, value_at_zero=1.0, kind="survival"):
        bp = np.asarray(breakpoints, dtype=float)
        vals = np.asarray(values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size:
            raise DataError("breakpoints and values must be 1-d and equally long")
        if bp.size and (not np.all(np.isfinite(bp)) or bp[0] < 0.0):
            raise DataError("breakpoints must be finite and nonnegative")
        if bp.size > 1 and np.any(np.diff(bp) <= 0.0):
            raise DataError("breakpoints must be strictly increasing")
        if kind not in _KINDS:
            raise DataError(f"unknown curve kind {kind!r}")
        v0 = float(value_at_zero)
        seq = np.concatenate(([v0], vals))
        if kind == "survival":
            if np.any(np.diff(seq) > _MONOTONE_SLACK):
                raise DataError("survival curve must be non-increasing")
            if np.any(seq > 1.0 + _MONOTONE_SLACK) or np.any(seq < -_MONOTONE_SLACK):
                raise DataError("survival curve must stay within [0, 1]")
        elif kind == "cif":
            if np.any(np.diff(seq) < -_MONOTONE_SLACK):
                raise DataError("cumulative incidence must be non-decreasing")
            if np.any(seq > 1.0 + _MONOTONE_SLACK) or np.any(seq < -_MONOTONE_SLACK):
                raise DataError("cumulative incidence must stay within [0, 1]")
        elif kind == "hazard":
            if np.any(np.diff(seq) < -_MONOTONE_SLACK) or v0 < -_MONOTONE_SLACK:
                raise DataError("cumulative hazard must be non-decreasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "value_at_zero", v0)
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):  # curves are immutable once built
        raise AttributeError("StepCurve is immutable")

    def __repr__(self):
        return (
            f"StepCurve(kind={self.kind!r}, jumps={self.breakpoints.size}, "
            f"v0={self.value_at_zero:g})"
        )

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, t):
        """Value at time(s) t; scalar in, scalar out."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise DataError("evaluation times must be nonnegative")
        idx = np.searchsorted(self.breakpoints, t_arr, side="right") - 1
        out = np.where(
            idx >= 0,
            self.values[np.maximum(idx, 0)] if self.values.size else 0.0,
            self.value_at_zero,
        )
        if np.ndim(t) == 0:
            return float(out)
        return out

    def left_limit(self, t):
        """Value just before time(s) t."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0):
            raise DataError("evaluation times must be nonnegative")
        idx = np.searchsorted(self.breakpoints, t_arr, side="left") - 1
        out = np.where(
            idx >= 0,
            self.values[np.maximum(idx, 0)] if self.values.size else 0.0,
            self.value_at_zero,
        )
        if np.ndim(t) == 0:
            return float(out)
        return out

    def restrict(self, grid):
        """Resample the curve onto an explicit grid (kind preserved)."""
        g = np.asarray(grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise DataError("grid must be a nonempty 1-d array")
        if np.any(np.diff(g) <= 0.0):
            raise DataError("grid must be strictly increasing")
        return StepCurve(g, self.evaluate(g), self.value_at_zero, self.kind)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "kind": self.kind,
            "value_at_zero": self.value_at_zero,
            "t": self.breakpoints.tolist(),
            "value": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            payload["t"],
            payload["value"],
            payload.get("value_at_zero", 1.0),
            payload.get("kind", "generic"),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self, header_comment=None):
        """Render as `t,value` CSV text, optionally with a comment line."""
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("t,value\n")
        buf.write(f"{0.0:.12g},{self.value_at_zero:.12g}\n")
        for t, v in zip(self.breakpoints, self.values):
            buf.write(f"{t:.12g},{v:.12g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, kind="generic"):
        rows = [
            line.split(",")
            for line in text.strip().splitlines()
            if line and not line.startswith("#") and not line.startswith("t,")
        ]
        t = np.array([float(r[0]) for r in rows])
        v = np.array([float(r[1]) for r in rows])
        if t.size and t[0] == 0.0:
            return cls(t[1:], v[1:], value_at_zero=v[0], kind=kind)
        return cls(t, v, kind=kind)


class RiskTable:
    """Per-distinct-time risk set and event counts for a cohort."""

    __slots__ = ("times", "at_risk", "events", "censored", "n_causes")

    def __init__(self, times, at_risk, events, censored, n_causes):
        self.times = times
        self.at_risk = at_risk
        self.events = events          # shape (n_times, n_causes)
        self.censored = censored
        self.n_causes = n_causes


def _as_cohort_arrays(times, deltas):
    t = np.asarray(times, dtype=float)
    d = np.asarray(deltas, dtype=int)
    if t.size == 0:
        raise EmptyCohortError("estimator received zero rows")
    if t.shape != d.shape or t.ndim != 1:
        raise DataError("times and event indicators must be 1-d and aligned")
    if np.any(~np.isfinite(t)) or np.any(t < 0.0):
        raise DataError("observed times must be finite and nonnegative")
    if np.any(d < 0):
        raise DataError("event indicators must be nonnegative integers")
    return t, d


def risk_table(times, deltas, n_causes=None):
    """Tabulate at-risk counts, per-cause events, and censorings.

    The at-risk set at a distinct time u is everyone with observed time
    >= u, so tied censorings are still at risk for tied events.
    """
    t, d = _as_cohort_arrays(times, deltas)
    if n_causes is None:
        n_causes = max(int(d.max()), 1)
    if np.any(d > n_causes):
        raise DataError("event indicator exceeds the declared number of causes")
    order = np.argsort(t, kind="mergesort")
    t, d = t[order], d[order]
    uniq, start = np.unique(t, return_index=True)
    n = t.size
    at_risk = n - start
    events = np.zeros((uniq.size, n_causes), dtype=np.int64)
    censored = np.zeros(uniq.size, dtype=np.int64)
    slot = np.searchsorted(uniq, t)
    for k in range(1, n_causes + 1):
        np.add.at(events[:, k - 1], slot[d == k], 1)
    np.add.at(censored, slot[d == 0], 1)
    return RiskTable(uniq, at_risk, events, censored, n_causes)


def kaplan_meier(times, events):
    """Product-limit estimate of the survival function.

    `events` is the 0/1 indicator of the terminal event; any positive
    integer is treated as an event so all-cause curves can reuse this
    entry point with multi-cause labels.
    """
    t, d = _as_cohort_arrays(times, events)
    rt = risk_table(t, (d >= 1).astype(int), n_causes=1)
    dj = rt.events[:, 0]
    keep = dj > 0
    factors = 1.0 - dj[keep] / rt.at_risk[keep]
    surv = np.cumprod(factors)
    return StepCurve(rt.times[keep], surv, value_at_zero=1.0, kind="survival")


def nelson_aalen(times, events):
    """Cumulative-hazard estimate, the running sum of d_j / n_j."""
    t, d = _as_cohort_arrays(times, events)
    rt = risk_table(t, (d >= 1).astype(int), n_causes=1)
    dj = rt.events[:, 0]
    keep = dj > 0
    chf = np.cumsum(dj[keep] / rt.at_risk[keep])
    return StepCurve(rt.times[keep], chf, value_at_zero=0.0, kind="hazard")


def aalen_johansen_cif(times, deltas, cause, n_causes=None):
    """Cumulative incidence of one cause under competing risks.

    dCIF_k(u) = S_all(u-) * d_k(u) / n(u), with S_all the all-cause
    product-limit curve; summing over causes complements S_all exactly.
    """
    t, d = _as_cohort_arrays(times, deltas)
    if cause < 1:
        raise DataError("cause labels start at 1 (0 is censoring)")
    rt = risk_table(t, d, n_causes=n_causes)
    if cause > rt.n_causes:
        raise DataError("cause exceeds the declared number of causes")
    d_all = rt.events.sum(axis=1)
    s_all_left = np.concatenate(([1.0], np.cumprod(1.0 - d_all / rt.at_risk)))[:-1]
    inc = s_all_left * rt.events[:, cause - 1] / rt.at_risk
    keep = d_all > 0  # curve only moves at event times
    cif = np.cumsum(inc)[keep]
    return StepCurve(rt.times[keep], cif, value_at_zero=0.0, kind="cif")


def restricted_mean(curve, horizon):
    """Exact integral of a survival step curve from 0 to `horizon`."""
    if curve.kind not in ("survival", "generic"):
        raise DataError("restricted mean expects a survival-like curve")
    h = float(horizon)
    if not np.isfinite(h) or h <= 0.0:
        raise DataError("horizon must be positive and finite")
    bp = curve.breakpoints
    inside = bp[bp < h]
    knots = np.concatenate(([0.0], inside, [h]))
    widths = np.diff(knots)
    heights = np.asarray(curve.evaluate(knots[:-1]), dtype=float)
    return float(np.sum(widths * heights))


def survival_from_cumhazard(chf_curve):
    """exp(-CHF) as a survival curve (ensemble predictions use this)."""
    vals = np.exp(-chf_curve.values)
    v0 = float(np.exp(-chf_curve.value_at_zero))
    return StepCurve(chf_curve.breakpoints, vals, value_at_zero=v0, kind="survival")
