"""Simulator and oracle tests, checked against the brute-force enumerator."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import kendalltau

from fairsurv.copulas import CopulaSpec
from fairsurv.errors import (
    CohortSchemaError,
    DataError,
    DegenerateGroupError,
    SpecValidationError,
)
from fairsurv.queries import Functional, PotentialOutcomeQuery
from fairsurv.scm import (
    Cohort,
    SCMSpec,
    decomposition_queries,
    oracle_decomposition,
    oracle_potential_outcome,
    sample_cohort,
)

from testkit import (
    brute_po,
    geometric_law,
    make_cr_two_cause,
    make_ic_clayton,
    make_nic_balanced,
    spec_of,
)

ALL_QUERIES = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1), (0, 1, 1), (0, 0, 1)]


def _tiny_spec(event_law=None, censor_law=None, coupling=None, p_xz=None):
    """One-confounder, one-mediator shell for targeted edge cases."""
    strata = {(x, 0, 0): None for x in (0, 1)}
    event = {k: dict(event_law or {2.0: 1.0}) for k in strata}
    censor = {k: dict(censor_law or {math.inf: 1.0}) for k in strata}
    return SCMSpec(
        z_support=[0],
        w_support=[0],
        p_xz=p_xz or {(0, 0): 0.5, (1, 0): 0.5},
        p_w_given_xz={(0, 0): {0: 1.0}, (1, 0): {0: 1.0}},
        event_laws=event,
        censor_law=censor,
        coupling=coupling,
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def test_spec_rejects_bad_probability_sums():
    raw = make_nic_balanced()
    raw["p_xz"][(0, 0)] += 0.01
    with pytest.raises(SpecValidationError):
        spec_of(raw)


def test_spec_rejects_negative_mass():
    raw = make_nic_balanced()
    key = (0, 0, 0)
    raw["event_laws"][key][1.0] = -0.05
    raw["event_laws"][key][math.inf] += 0.05
    with pytest.raises(SpecValidationError):
        spec_of(raw)


def test_spec_rejects_missing_stratum():
    raw = make_nic_balanced()
    del raw["censor_law"][(1, 1, 1)]
    with pytest.raises(SpecValidationError):
        spec_of(raw)


def test_spec_rejects_coupled_competing_risks():
    raw = make_cr_two_cause()
    raw["coupling"] = CopulaSpec("clayton", 0.5)
    with pytest.raises(SpecValidationError):
        spec_of(raw)


def test_spec_rejects_colliding_support_rendering():
    raw = make_nic_balanced()
    raw["z_support"] = [1, "1"]
    with pytest.raises(SpecValidationError):
        spec_of(raw)


# ---------------------------------------------------------------------------
# Sampling mechanics
# ---------------------------------------------------------------------------

def test_sampling_is_deterministic_given_seed():
    spec = spec_of(make_nic_balanced())
    a = sample_cohort(spec, 500, seed=11)
    b = sample_cohort(spec, 500, seed=11)
    c = sample_cohort(spec, 500, seed=12)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.m, b.m)
    assert np.array_equal(a.delta, b.delta)
    assert a.z_items == b.z_items and a.w_items == b.w_items
    assert not np.array_equal(a.m, c.m)


def test_sampled_frequencies_match_tables():
    raw = make_nic_balanced()
    spec = spec_of(raw)
    cohort = sample_cohort(spec, 60000, seed=3)
    z = np.array(cohort.z_items)
    w = np.array(cohort.w_items)
    for (x, zv), p in raw["p_xz"].items():
        assert abs(np.mean((cohort.x == x) & (z == zv)) - p) < 0.01
    for (x, zv), tab in raw["p_w_given_xz"].items():
        rows = (cohort.x == x) & (z == zv)
        for wv, pw in tab.items():
            assert abs(np.mean(w[rows] == wv) - pw) < 0.02


def test_sampled_latents_follow_event_law():
    spec = spec_of(make_nic_balanced())
    cohort, latents = sample_cohort(spec, 60000, seed=5, return_latents=True)
    z = np.array(cohort.z_items)
    w = np.array(cohort.w_items)
    for x, zv, wv in [(0, 0, 0), (1, 1, 1)]:
        rows = (cohort.x == x) & (z == zv) & (w == wv)
        emp = np.mean(latents["event_times"][rows, 0] > 2.0)
        assert abs(emp - spec.conditional_survival(x, zv, wv).evaluate(2.0)) < 0.02


def test_all_events_when_censoring_never_happens():
    spec = _tiny_spec(event_law={1.0: 0.4, 2.0: 0.6}, censor_law={math.inf: 1.0})
    cohort = sample_cohort(spec, 200, seed=0)
    assert np.all(cohort.delta >= 1)


def test_all_censored_when_event_never_happens():
    spec = _tiny_spec(event_law={math.inf: 1.0}, censor_law={1.5: 1.0})
    cohort = sample_cohort(spec, 200, seed=0)
    assert np.all(cohort.delta == 0)
    assert np.all(cohort.m == 1.5)


def test_tie_between_event_and_censoring_goes_to_event():
    spec = _tiny_spec(event_law={2.0: 1.0}, censor_law={2.0: 1.0})
    cohort = sample_cohort(spec, 50, seed=0)
    assert np.all(cohort.delta == 1)
    assert np.all(cohort.m == 2.0)


def test_independent_coupling_has_zero_latent_kendall_tau():
    # Pooled T and C are dependent through shared (x, z, w); the coupling
    # property is conditional, so test within a single stratum.
    spec = spec_of(make_nic_balanced())
    cohort, latents = sample_cohort(spec, 50000, seed=9, return_latents=True)
    rows = (
        (cohort.x == 1)
        & (np.array(cohort.z_items) == 0)
        & (np.array(cohort.w_items) == 1)
    )
    est, _ = kendalltau(
        latents["event_times"][rows, 0], latents["censor_times"][rows]
    )
    assert abs(est) <= 0.02


def test_clayton_coupling_produces_positive_dependence():
    spec = spec_of(make_ic_clayton(0.5))
    _, latents = sample_cohort(spec, 50000, seed=9, return_latents=True)
    est, _ = kendalltau(latents["event_times"][:, 0], latents["censor_times"])
    assert est > 0.25  # discrete ties attenuate tau; sign and size must show


def test_group_specific_censor_law_shifts_delta_rate():
    raw = make_nic_balanced()
    spec = spec_of(raw)
    cohort = sample_cohort(spec, 40000, seed=21)
    d0 = np.mean(cohort.delta[cohort.x == 0] == 0)
    d1 = np.mean(cohort.delta[cohort.x == 1] == 0)
    assert d0 != pytest.approx(d1, abs=1e-3)


# ---------------------------------------------------------------------------
# Oracle vs brute force
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("arms", ALL_QUERIES)
def test_oracle_survival_matches_brute_force(arms):
    raw = make_nic_balanced()
    spec = spec_of(raw)
    q = PotentialOutcomeQuery(*arms)
    for t in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 9.0]:
        expect = brute_po(raw, *arms, t, kind="survival")
        got = oracle_potential_outcome(spec, q, Functional("survival"), t)
        assert_allclose(got, expect, atol=1e-12)


def test_oracle_rmst_matches_brute_force():
    raw = make_nic_balanced()
    spec = spec_of(raw)
    q = PotentialOutcomeQuery(1, 0, 0)
    for t in [1.0, 2.5, 4.0, 6.0]:
        expect = brute_po(raw, 1, 0, 0, t, kind="rmst")
        got = oracle_potential_outcome(spec, q, Functional("rmst"), t)
        assert_allclose(got, expect, atol=1e-12)
    capped = oracle_potential_outcome(spec, q, Functional("rmst", horizon=2.0), 6.0)
    assert_allclose(capped, brute_po(raw, 1, 0, 0, 6.0, kind="rmst", horizon=2.0), atol=1e-12)


def test_oracle_cum_hazard_matches_brute_force():
    raw = make_nic_balanced()
    spec = spec_of(raw)
    q = PotentialOutcomeQuery(0, 1, 1)
    for t in [1.0, 3.0, 5.0]:
        expect = brute_po(raw, 0, 1, 1, t, kind="cumulative_hazard")
        got = oracle_potential_outcome(spec, q, Functional("cumulative_hazard"), t)
        assert_allclose(got, expect, atol=1e-12)


@pytest.mark.parametrize("cause", [1, 2])
def test_oracle_cif_matches_brute_force(cause):
    raw = make_cr_two_cause()
    spec = spec_of(raw)
    q = PotentialOutcomeQuery(1, 0, 0)
    for t in [0.5, 1.0, 2.0, 3.0, 8.0]:
        expect = brute_po(raw, 1, 0, 0, t, kind="cif", cause=cause)
        got = oracle_potential_outcome(spec, q, Functional("cif", cause=cause), t)
        assert_allclose(got, expect, atol=1e-12)


def test_oracle_all_cause_matches_brute_force_and_complements_cifs():
    raw = make_cr_two_cause()
    spec = spec_of(raw)
    q = PotentialOutcomeQuery(1, 1, 0)
    for t in [1.0, 2.0, 3.0]:
        s_all = oracle_potential_outcome(spec, q, Functional("all_cause_survival"), t)
        assert_allclose(s_all, brute_po(raw, 1, 1, 0, t, kind="all_cause_survival"), atol=1e-12)
        total = sum(
            oracle_potential_outcome(spec, q, Functional("cif", cause=k), t)
            for k in (1, 2)
        )
        assert_allclose(total, 1.0 - s_all, atol=1e-12)


def test_oracle_decomposition_identity_and_antisymmetry():
    spec = spec_of(make_nic_balanced())
    grid = np.array([0.5, 1.0, 2.0, 3.0, 4.0])
    eff = oracle_decomposition(spec, grid, Functional("survival"))
    lhs = eff["tv"].evaluate(grid)
    rhs = (
        eff["direct"].evaluate(grid)
        - eff["indirect"].evaluate(grid)
        - eff["spurious"].evaluate(grid)
    )
    assert_allclose(lhs, rhs, atol=1e-12)
    flipped = oracle_decomposition(spec, grid, Functional("survival"), x0=1, x1=0)
    assert_allclose(flipped["tv"].evaluate(grid), -lhs, atol=1e-12)


def test_oracle_ic_spec_reads_latent_marginal():
    # Coupling must not distort the latent event marginal.
    raw_nic = make_ic_clayton(0.5)
    raw_nic["coupling"] = None
    coupled = spec_of(make_ic_clayton(0.5))
    uncoupled = spec_of(raw_nic)
    q = PotentialOutcomeQuery(1, 0, 0)
    f = Functional("survival")
    for t in [1.0, 2.0, 3.0]:
        assert_allclose(
            oracle_potential_outcome(coupled, q, f, t),
            oracle_potential_outcome(uncoupled, q, f, t),
            atol=1e-15,
        )


def test_oracle_degenerate_group_raises():
    spec = _tiny_spec(p_xz={(0, 0): 0.0, (1, 0): 1.0})
    with pytest.raises(DegenerateGroupError):
        oracle_potential_outcome(
            spec, PotentialOutcomeQuery(1, 1, 0), Functional("survival"), 1.0
        )


def test_decomposition_queries_layout():
    q = decomposition_queries(0, 1)
    assert q["factual_base"].as_tuple() == (0, 0, 0)
    assert q["direct_shift"].as_tuple() == (1, 0, 0)
    assert q["full_shift"].as_tuple() == (1, 1, 0)
    assert q["factual_target"].as_tuple() == (1, 1, 1)


# ---------------------------------------------------------------------------
# Serialization round trips
# ---------------------------------------------------------------------------

def test_spec_json_round_trip():
    spec = spec_of(make_ic_clayton(0.5))
    text = spec.to_json()
    back = SCMSpec.from_json(text)
    assert back.to_json() == text
    a = sample_cohort(spec, 300, seed=4)
    b = sample_cohort(back, 300, seed=4)
    assert np.array_equal(a.m, b.m) and np.array_equal(a.delta, b.delta)


def test_spec_json_round_trips_infinity_atoms():
    spec = spec_of(make_nic_balanced())
    back = SCMSpec.from_json(spec.to_json())
    s1 = spec.conditional_survival(1, 0, 1)
    s2 = back.conditional_survival(1, 0, 1)
    assert_allclose(s1.values, s2.values, atol=0)


def test_cohort_csv_round_trip():
    spec = spec_of(make_cr_two_cause())
    cohort = sample_cohort(spec, 120, seed=8)
    text = cohort.to_csv(header_comment="config=abc")
    back = Cohort.from_csv(text)
    assert np.array_equal(back.x, cohort.x)
    assert np.array_equal(back.m, cohort.m)
    assert np.array_equal(back.delta, cohort.delta)
    assert back.z_items == cohort.z_items
    assert back.n_causes == cohort.n_causes


def test_cohort_csv_multicolumn_round_trip():
    cohort = Cohort(
        x=[0, 1, 1],
        z=[(0, 1.5), (1, 2.5), (0, 0.5)],
        w=[2, 0, 1],
        m=[1.0, 2.0, 3.0],
        delta=[1, 0, 1],
    )
    text = cohort.to_csv()
    assert text.splitlines()[0] == "x,z1,z2,w,m,delta"
    back = Cohort.from_csv(text)
    assert back.z_items == cohort.z_items
    assert back.w_items == cohort.w_items


def test_cohort_rejects_bad_rows():
    with pytest.raises(CohortSchemaError):
        Cohort(x=[2], z=[0], w=[0], m=[1.0], delta=[1])
    with pytest.raises(CohortSchemaError):
        Cohort(x=[0], z=[0], w=[0], m=[-1.0], delta=[1])
    with pytest.raises(CohortSchemaError):
        Cohort.from_csv("a,b\n1,2")
    with pytest.raises(DataError):
        sample_cohort(spec_of(make_nic_balanced()), 0, seed=1)


def test_geometric_law_helper_masses_sum_to_one():
    law = geometric_law([1.0, 2.0], 0.3)
    assert_allclose(sum(law.values()), 1.0, atol=1e-15)
    assert_allclose(law[1.0], 0.3)
    assert_allclose(law[2.0], 0.21)
