"""Discrete structural causal model simulator and its exact oracle.

The model follows the standard two-group layout: group label X in {0, 1}
with confounders Z (association with X left unrestricted), mediators W
drawn given (X, Z), latent event times for one or more causes drawn given
(X, Z, W), and a latent censoring time.  Event and censoring times may be
independent given covariates or coupled through an Archimedean copula on
the survival scale.  All laws live on finite grids, so every population
functional is computable by exact enumeration; the `oracle_*` functions
are the ground truth the estimator tests compare against.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math

import numpy as np

from .copulas import CopulaSpec, sample_uniform_pairs
from .curves import StepCurve, restricted_mean
from .errors import (
    CohortSchemaError,
    DataError,
    DegenerateGroupError,
    EmptyCohortError,
    SpecValidationError,
)
from .queries import Functional, PotentialOutcomeQuery

_PROB_TOL = 1e-12


def _canonical_value(v):
    """Coerce numpy scalars to plain python so table keys hash stably."""
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return int(v)
    return v


def _check_distribution(table, name):
    total = 0.0
    for key, p in table.items():
        if not np.isfinite(p) or p < -_PROB_TOL:
            raise SpecValidationError(f"{name}: negative or non-finite mass at {key!r}")
        total += p
    if abs(total - 1.0) > _PROB_TOL:
        raise SpecValidationError(f"{name}: masses sum to {total!r}, not 1")


def _canonical_law(law, name):
    """Sort a {time: prob} law, validate the grid, return (times, probs)."""
    times = []
    for t in law:
        t = float(t)
        if math.isnan(t) or t < 0.0:
            raise SpecValidationError(f"{name}: time grid must be nonnegative")
        times.append(t)
    if len(set(times)) != len(times):
        raise SpecValidationError(f"{name}: duplicate time grid entries")
    order = np.argsort(times)
    t_arr = np.asarray(times, dtype=float)[order]
    p_arr = np.asarray([law[k] for k in law], dtype=float)[order]
    _check_distribution(dict(zip(t_arr.tolist(), p_arr.tolist())), name)
    return t_arr, p_arr


class SCMSpec:
    """Full parameterization of the simulator.

    Parameters
    ----------
    z_support, w_support : sequences of hashable values.
    p_xz : dict {(x, z): prob}, the joint law of group and confounder.
    p_w_given_xz : dict {(x, z): {w: prob}}.
    event_laws : dict {(x, z, w): {time: prob}} for a single cause, or a
        list of such dicts for competing causes (cause k = list index + 1).
        Time grids may include math.inf for never-occurring mass.
    censor_law : dict {(x, z, w): {time: prob}}.
    coupling : CopulaSpec or None (independent censoring).  Dependent
        coupling is only supported with a single cause.
    """

    def __init__(self, z_support, w_support, p_xz, p_w_given_xz,
                 event_laws, censor_law, coupling=None):
        self.z_support = [_canonical_value(z) for z in z_support]
        self.w_support = [_canonical_value(w) for w in w_support]
        if len(set(map(str, self.z_support))) != len(self.z_support):
            raise SpecValidationError("z support values collide when rendered")
        if len(set(map(str, self.w_support))) != len(self.w_support):
            raise SpecValidationError("w support values collide when rendered")

        self.p_xz = {
            (int(x), _canonical_value(z)): float(p) for (x, z), p in p_xz.items()
        }
        _check_distribution(self.p_xz, "p_xz")
        for x, z in self.p_xz:
            if x not in (0, 1) or z not in self.z_support:
                raise SpecValidationError(f"p_xz key ({x}, {z!r}) outside supports")

        self.p_w_given_xz = {}
        for x in (0, 1):
            for z in self.z_support:
                if (x, z) not in p_w_given_xz:
                    raise SpecValidationError(f"p_w_given_xz missing stratum ({x}, {z!r})")
                tab = {
                    _canonical_value(w): float(p)
                    for w, p in p_w_given_xz[(x, z)].items()
                }
                for w in tab:
                    if w not in self.w_support:
                        raise SpecValidationError(f"mediator value {w!r} outside support")
                _check_distribution(tab, f"p_w_given_xz[{x},{z!r}]")
                self.p_w_given_xz[(x, z)] = tab

        if isinstance(event_laws, dict):
            event_laws = [event_laws]
        self.n_causes = len(event_laws)
        if self.n_causes < 1:
            raise SpecValidationError("at least one cause is required")

        self._event = []  # per cause: {(x,z,w): (times, probs)}
        for k, law_table in enumerate(event_laws, start=1):
            canon = {}
            for x, z, w in self.strata():
                if (x, z, w) not in law_table:
                    raise SpecValidationError(
                        f"event law (cause {k}) missing stratum ({x}, {z!r}, {w!r})"
                    )
                canon[(x, z, w)] = _canonical_law(
                    law_table[(x, z, w)], f"event law cause {k} ({x},{z!r},{w!r})"
                )
            self._event.append(canon)

        self._censor = {}
        for x, z, w in self.strata():
            if (x, z, w) not in censor_law:
                raise SpecValidationError(f"censor law missing stratum ({x}, {z!r}, {w!r})")
            self._censor[(x, z, w)] = _canonical_law(
                censor_law[(x, z, w)], f"censor law ({x},{z!r},{w!r})"
            )

        if coupling is None:
            coupling = CopulaSpec("independence", 0.0)
        if not isinstance(coupling, CopulaSpec):
            raise SpecValidationError("coupling must be a CopulaSpec")
        if coupling.family != "independence" and self.n_causes != 1:
            raise SpecValidationError(
                "dependent event-censoring coupling requires a single cause"
            )
        self.coupling = coupling

    # -- bookkeeping ---------------------------------------------------------

    def strata(self):
        """All (x, z, w) cells in a fixed deterministic order."""
        return [
            (x, z, w)
            for x in (0, 1)
            for z in self.z_support
            for w in self.w_support
        ]

    def group_probability(self, x):
        return sum(p for (xx, _), p in self.p_xz.items() if xx == x)

    def confounder_given_group(self, x):
        px = self.group_probability(x)
        if px <= 0.0:
            raise DegenerateGroupError(f"group {x} has zero probability")
        return {z: self.p_xz.get((x, z), 0.0) / px for z in self.z_support}

    def event_support(self):
        """Sorted union of finite event-time atoms across strata and causes."""
        pts = set()
        for canon in self._event:
            for times, probs in canon.values():
                pts.update(t for t, p in zip(times, probs) if np.isfinite(t) and p > 0)
        return np.array(sorted(pts))

    def censor_support(self):
        pts = set()
        for times, probs in self._censor.values():
            pts.update(t for t, p in zip(times, probs) if np.isfinite(t) and p > 0)
        return np.array(sorted(pts))

    # -- conditional laws ----------------------------------------------------

    def _law(self, which, x, z, w):
        if which == "censor":
            return self._censor[(x, z, w)]
        return self._event[which - 1][(x, z, w)]

    def conditional_survival(self, x, z, w, cause=1):
        """P(T_cause > t | x, z, w) as a step curve on the finite atoms."""
        times, probs = self._law(cause, x, z, w)
        finite = np.isfinite(times)
        surv = 1.0 - np.cumsum(probs[finite])
        surv = np.clip(surv, 0.0, 1.0)
        return StepCurve(times[finite], surv, value_at_zero=1.0, kind="survival")

    def conditional_censor_survival(self, x, z, w):
        times, probs = self._censor[(x, z, w)]
        finite = np.isfinite(times)
        surv = np.clip(1.0 - np.cumsum(probs[finite]), 0.0, 1.0)
        return StepCurve(times[finite], surv, value_at_zero=1.0, kind="survival")

    def censor_hazard_increments(self, x, z, w):
        """Discrete censoring hazard P(C = u) / P(C >= u) at each atom."""
        times, probs = self._censor[(x, z, w)]
        finite = np.isfinite(times) & (probs > 0)
        t = times[finite]
        p = probs[finite]
        at_risk = 1.0 - np.concatenate(([0.0], np.cumsum(p)[:-1]))
        return t, p / at_risk

    def conditional_cif(self, x, z, w, cause):
        """P(cause wins by t | x, z, w) by enumeration over cause products.

        Competing causes are independent given covariates; ties go to the
        lowest cause index, matching the sampler.
        """
        if not 1 <= cause <= self.n_causes:
            raise DataError("cause outside the declared range")
        per_cause = [
            list(zip(*self._law(k, x, z, w)))
            for k in range(1, self.n_causes + 1)
        ]
        mass = {}
        for combo in itertools.product(*per_cause):
            times = [c[0] for c in combo]
            prob = math.prod(c[1] for c in combo)
            if prob == 0.0:
                continue
            t_min = min(times)
            if not np.isfinite(t_min):
                continue
            winner = times.index(t_min) + 1  # lowest index wins ties
            if winner == cause:
                mass[t_min] = mass.get(t_min, 0.0) + prob
        if not mass:
            return StepCurve([], [], value_at_zero=0.0, kind="cif")
        t_sorted = sorted(mass)
        cif = np.cumsum([mass[t] for t in t_sorted])
        return StepCurve(t_sorted, np.clip(cif, 0.0, 1.0), value_at_zero=0.0, kind="cif")

    def conditional_all_cause_survival(self, x, z, w):
        """P(min_k T_k > t | x, z, w); product form over independent causes."""
        grids = [self.conditional_survival(x, z, w, k) for k in range(1, self.n_causes + 1)]
        pts = np.unique(np.concatenate([g.breakpoints for g in grids]))
        if pts.size == 0:
            return StepCurve([], [], value_at_zero=1.0, kind="survival")
        vals = np.ones_like(pts)
        for g in grids:
            vals = vals * g.evaluate(pts)
        return StepCurve(pts, vals, value_at_zero=1.0, kind="survival")

    def conditional_cum_hazard(self, x, z, w):
        """Discrete cumulative hazard sum_{u<=t} P(T=u)/P(T>=u); one cause only."""
        if self.n_causes != 1:
            raise DataError("cumulative hazard functional requires a single cause")
        times, probs = self._law(1, x, z, w)
        finite = np.isfinite(times) & (probs > 0)
        t = times[finite]
        p = probs[finite]
        at_risk = 1.0 - np.concatenate(([0.0], np.cumsum(p)[:-1]))
        return StepCurve(t, np.cumsum(p / at_risk), value_at_zero=0.0, kind="hazard")

    def functional_values(self, x, z, w, functional, t_arr):
        """E[functional at each t | x, z, w], exact; expects a 1-d grid."""
        t_arr = np.atleast_1d(np.asarray(t_arr, dtype=float))
        kind = functional.kind
        if kind == "survival":
            return self.conditional_survival(x, z, w).evaluate(t_arr)
        if kind == "cif":
            return self.conditional_cif(x, z, w, functional.cause).evaluate(t_arr)
        if kind == "all_cause_survival":
            return self.conditional_all_cause_survival(x, z, w).evaluate(t_arr)
        if kind == "cumulative_hazard":
            return self.conditional_cum_hazard(x, z, w).evaluate(t_arr)
        # rmst: integrate survival up to min(t, horizon)
        surv = self.conditional_survival(x, z, w)
        cap = functional.horizon if functional.horizon is not None else np.inf
        out = np.empty_like(t_arr)
        for i, ti in enumerate(t_arr):
            h = min(float(ti), cap)
            out[i] = 0.0 if h <= 0.0 else restricted_mean(surv, h)
        return out

    # -- serialization -------------------------------------------------------

    def to_json(self, indent=2):
        def law_out(canon):
            return {
                f"{x}|{z}|{w}": {repr(float(t)): float(p) for t, p in zip(*canon[(x, z, w)])}
                for (x, z, w) in self.strata()
            }

        payload = {
            "z_support": self.z_support,
            "w_support": self.w_support,
            "p_xz": {f"{x}|{z}": p for (x, z), p in sorted(self.p_xz.items(), key=str)},
            "p_w_given_xz": {
                f"{x}|{z}": {str(w): p for w, p in tab.items()}
                for (x, z), tab in sorted(self.p_w_given_xz.items(), key=str)
            },
            "censor_law": law_out(self._censor),
            "coupling": {
                "family": self.coupling.family,
                "kendall_tau": self.coupling.kendall_tau,
            },
        }
        if self.n_causes == 1:
            payload["event_law"] = law_out(self._event[0])
        else:
            payload["event_laws"] = [law_out(c) for c in self._event]
        return json.dumps(payload, sort_keys=True, indent=indent)

    @classmethod
    def from_json(cls, text):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecValidationError(f"spec is not valid JSON: {exc}") from exc
        z_support = payload.get("z_support")
        w_support = payload.get("w_support")
        if z_support is None or w_support is None:
            raise SpecValidationError("spec must declare z_support and w_support")
        z_lookup = {str(z): _canonical_value(z) for z in z_support}
        w_lookup = {str(w): _canonical_value(w) for w in w_support}

        def xz_key(key):
            x_str, z_str = key.split("|", 1)
            return int(x_str), z_lookup[z_str]

        def xzw_key(key):
            x_str, z_str, w_str = key.split("|", 2)
            return int(x_str), z_lookup[z_str], w_lookup[w_str]

        def law_in(table):
            return {
                xzw_key(k): {float(t): p for t, p in sub.items()}
                for k, sub in table.items()
            }

        p_xz = {xz_key(k): p for k, p in payload["p_xz"].items()}
        p_w = {
            xz_key(k): {w_lookup[w]: p for w, p in sub.items()}
            for k, sub in payload["p_w_given_xz"].items()
        }
        if "event_laws" in payload:
            event = [law_in(tab) for tab in payload["event_laws"]]
        else:
            event = law_in(payload["event_law"])
        censor = law_in(payload["censor_law"])
        coupling = None
        if "coupling" in payload:
            coupling = CopulaSpec(
                payload["coupling"].get("family", "independence"),
                payload["coupling"].get("kendall_tau", 0.0),
            )
        return cls(z_support, w_support, p_xz, p_w, event, censor, coupling)


# ---------------------------------------------------------------------------
# Cohort
# ---------------------------------------------------------------------------

def _canonical_items(column, n, name):
    """Normalize a covariate column (or 2-d block) to a list of hashables."""
    if isinstance(column, np.ndarray) and column.ndim == 2:
        if column.shape[1] == 1:
            return [_canonical_value(v) for v in column[:, 0]]
        return [tuple(_canonical_value(v) for v in row) for row in column]
    items = [
        tuple(_canonical_value(u) for u in v)
        if isinstance(v, (tuple, list))
        else _canonical_value(v)
        for v in column
    ]
    if len(items) != n:
        raise CohortSchemaError(f"{name} column length mismatch")
    return items


class Cohort:
    """Observed rows: group, confounders, mediators, time, event label.

    delta = 0 marks censoring; labels 1..K mark event causes.  Confounder
    and mediator entries are hashable scalars, or tuples for the
    multi-column layout.
    """

    def __init__(self, x, z, w, m, delta, n_causes=None):
        self.x = np.asarray(x, dtype=int)
        n = self.x.size
        if n == 0:
            raise EmptyCohortError("cohort has no rows")
        if np.any((self.x != 0) & (self.x != 1)):
            raise CohortSchemaError("group labels must be 0 or 1")
        self.z_items = _canonical_items(z, n, "z")
        self.w_items = _canonical_items(w, n, "w")
        self.m = np.asarray(m, dtype=float)
        self.delta = np.asarray(delta, dtype=int)
        if self.m.shape != (n,) or self.delta.shape != (n,):
            raise CohortSchemaError("m and delta must align with x")
        if np.any(~np.isfinite(self.m)) or np.any(self.m < 0.0):
            raise CohortSchemaError("observed times must be finite and nonnegative")
        if np.any(self.delta < 0):
            raise CohortSchemaError("delta must be a nonnegative integer")
        inferred = max(1, int(self.delta.max(initial=0)))
        self.n_causes = int(n_causes) if n_causes is not None else inferred
        if self.n_causes < inferred:
            raise CohortSchemaError("delta exceeds the declared number of causes")

    @property
    def n(self):
        return self.x.size

    def subset(self, index):
        idx = np.asarray(index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return Cohort(
            self.x[idx],
            [self.z_items[i] for i in idx],
            [self.w_items[i] for i in idx],
            self.m[idx],
            self.delta[idx],
            n_causes=self.n_causes,
        )

    # -- CSV ------------------------------------------------------------------

    @staticmethod
    def _width(items):
        first = items[0]
        return len(first) if isinstance(first, tuple) else 1

    def to_csv(self, header_comment=None):
        pz, pw = self._width(self.z_items), self._width(self.w_items)
        z_cols = ["z"] if pz == 1 else [f"z{i + 1}" for i in range(pz)]
        w_cols = ["w"] if pw == 1 else [f"w{i + 1}" for i in range(pw)]
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", *z_cols, *w_cols, "m", "delta"])

        def render(v):
            return f"{v:.12g}" if isinstance(v, float) else str(v)

        for i in range(self.n):
            z = self.z_items[i] if pz > 1 else (self.z_items[i],)
            w = self.w_items[i] if pw > 1 else (self.w_items[i],)
            writer.writerow(
                [
                    str(self.x[i]),
                    *map(render, z),
                    *map(render, w),
                    f"{self.m[i]:.12g}",
                    str(self.delta[i]),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, n_causes=None):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise EmptyCohortError("cohort CSV has no rows")
        rows = list(csv.reader(lines))
        header = [h.strip() for h in rows[0]]

        def block(prefix):
            exact = [i for i, h in enumerate(header) if h == prefix]
            if exact:
                return exact
            numbered = [
                (int(h[len(prefix):]), i)
                for i, h in enumerate(header)
                if h.startswith(prefix) and h[len(prefix):].isdigit()
            ]
            return [i for _, i in sorted(numbered)]

        try:
            x_col = header.index("x")
            m_col = header.index("m")
            d_col = header.index("delta")
        except ValueError as exc:
            raise CohortSchemaError("cohort CSV must include x, m, delta columns") from exc
        z_cols = block("z")
        w_cols = block("w")
        if not z_cols or not w_cols:
            raise CohortSchemaError("cohort CSV must include z and w columns")

        def parse(token):
            token = token.strip()
            try:
                return int(token)
            except ValueError:
                pass
            try:
                return float(token)
            except ValueError:
                return token

        body = rows[1:]
        if not body:
            raise EmptyCohortError("cohort CSV has a header but no rows")
        x, m, d, z, w = [], [], [], [], []
        for row in body:
            if len(row) != len(header):
                raise CohortSchemaError("cohort CSV row width does not match header")
            x.append(int(row[x_col]))
            m.append(float(row[m_col]))
            d.append(int(row[d_col]))
            zv = [parse(row[i]) for i in z_cols]
            wv = [parse(row[i]) for i in w_cols]
            z.append(zv[0] if len(zv) == 1 else tuple(zv))
            w.append(wv[0] if len(wv) == 1 else tuple(wv))
        return cls(x, z, w, m, d, n_causes=n_causes)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _invert_survival(times, probs, u):
    """Map uniforms to law atoms so that {T > t} = {u <= P(T > t)}."""
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, 1.0 - u, side="right")
    idx = np.minimum(idx, times.size - 1)
    return times[idx]


def sample_cohort(spec, n, seed=None, return_latents=False):
    """Draw a cohort of size n; deterministic given the seed.

    Ties between an event time and the censoring time go to the event;
    ties among competing causes go to the lowest cause index.
    """
    if n <= 0:
        raise DataError("cohort size must be positive")
    rng = np.random.default_rng(seed)

    xz_keys = [(x, z) for x in (0, 1) for z in spec.z_support]
    xz_probs = np.array([spec.p_xz.get(k, 0.0) for k in xz_keys])
    xz_idx = rng.choice(len(xz_keys), size=n, p=xz_probs)
    x_arr = np.array([xz_keys[i][0] for i in xz_idx])
    z_list = [xz_keys[i][1] for i in xz_idx]

    w_slot = np.empty(n, dtype=int)
    for i, key in enumerate(xz_keys):
        rows = np.flatnonzero(xz_idx == i)
        if rows.size == 0:
            continue
        tab = spec.p_w_given_xz[key]
        probs = np.array([tab.get(w, 0.0) for w in spec.w_support])
        w_slot[rows] = rng.choice(len(spec.w_support), size=rows.size, p=probs)
    w_list = [spec.w_support[s] for s in w_slot]

    if spec.coupling.family == "independence":
        u_event = rng.random((n, spec.n_causes))
        u_censor = rng.random(n)
    else:
        u_t, u_c = sample_uniform_pairs(spec.coupling, n, rng)
        u_event = u_t[:, None]
        u_censor = u_c

    t_event = np.empty((n, spec.n_causes))
    c_time = np.empty(n)
    w_support_index = {w: j for j, w in enumerate(spec.w_support)}
    for i, (x, z) in enumerate(xz_keys):
        for w in spec.w_support:
            rows = np.flatnonzero((xz_idx == i) & (w_slot == w_support_index[w]))
            if rows.size == 0:
                continue
            for k in range(1, spec.n_causes + 1):
                times, probs = spec._law(k, x, z, w)
                t_event[rows, k - 1] = _invert_survival(times, probs, u_event[rows, k - 1])
            ct, cp = spec._law("censor", x, z, w)
            c_time[rows] = _invert_survival(ct, cp, u_censor[rows])

    t_min = t_event.min(axis=1)
    winner = t_event.argmin(axis=1)  # argmin takes the lowest index on ties
    m = np.minimum(t_min, c_time)
    delta = np.where(t_min <= c_time, winner + 1, 0)
    if np.any(~np.isfinite(m)):
        raise SpecValidationError(
            "event and censoring laws both put mass at infinity in some stratum"
        )
    cohort = Cohort(x_arr, z_list, w_list, m, delta, n_causes=spec.n_causes)
    if return_latents:
        return cohort, {"event_times": t_event, "censor_times": c_time}
    return cohort


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def oracle_potential_outcome(spec, query, functional, t):
    """Exact value of the identified potential-outcome functional.

    Sums E[functional | x_outcome, z, w] * P(w | x_mediator, z)
    * P(z | x_condition) over the finite supports.
    """
    if not isinstance(query, PotentialOutcomeQuery):
        raise DataError("query must be a PotentialOutcomeQuery")
    if functional.kind == "cif" and functional.cause > spec.n_causes:
        raise DataError("cif cause outside the spec's causes")
    p_z = spec.confounder_given_group(query.x_condition)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    total = np.zeros_like(t_arr)
    for z in spec.z_support:
        if p_z[z] == 0.0:
            continue
        med = spec.p_w_given_xz[(query.x_mediator, z)]
        for w in spec.w_support:
            pw = med.get(w, 0.0)
            if pw == 0.0:
                continue
            vals = spec.functional_values(query.x_outcome, z, w, functional, t_arr)
            total += p_z[z] * pw * np.atleast_1d(vals)
    return float(total[0]) if np.ndim(t) == 0 else total


def oracle_po_curve(spec, query, functional, grid):
    g = np.asarray(grid, dtype=float)
    vals = oracle_potential_outcome(spec, query, functional, g)
    zero = oracle_potential_outcome(spec, query, functional, 0.0)
    return StepCurve(g, vals, value_at_zero=zero, kind="generic")


def decomposition_queries(x0, x1):
    """The four potential-outcome queries every decomposition rests on."""
    return {
        "factual_base": PotentialOutcomeQuery(x0, x0, x0),
        "direct_shift": PotentialOutcomeQuery(x1, x0, x0),
        "full_shift": PotentialOutcomeQuery(x1, x1, x0),
        "factual_target": PotentialOutcomeQuery(x1, x1, x1),
    }


def oracle_decomposition(spec, grid, functional, x0=0, x1=1):
    """Ground-truth effect curves on `grid`; keys tv/direct/indirect/spurious.

    tv = direct - indirect - spurious holds exactly by construction.
    """
    g = np.asarray(grid, dtype=float)
    q = decomposition_queries(x0, x1)
    po = {
        name: oracle_potential_outcome(spec, query, functional, g)
        for name, query in q.items()
    }
    effects = {
        "direct": po["direct_shift"] - po["factual_base"],
        "indirect": po["direct_shift"] - po["full_shift"],
        "spurious": po["full_shift"] - po["factual_target"],
        "tv": po["factual_target"] - po["factual_base"],
    }
    return {
        name: StepCurve(g, vals, value_at_zero=0.0, kind="generic")
        for name, vals in effects.items()
    }
