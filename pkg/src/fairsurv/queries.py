"""Descriptors shared by the oracle and the estimators.

A potential-outcome query names which group drives each of the three
mechanisms: the outcome law, the mediator draw, and the conditioning
population.  A functional names the scale on which curves are reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

FUNCTIONAL_KINDS = (
    "survival",
    "cif",
    "rmst",
    "all_cause_survival",
    "cumulative_hazard",
)


@dataclass(frozen=True)
class PotentialOutcomeQuery:
    """E[outcome under arm `x_outcome` with mediators drawn under
    `x_mediator`, averaged over the group `x_condition`]."""

    x_outcome: int
    x_mediator: int
    x_condition: int

    def __post_init__(self):
        for v in (self.x_outcome, self.x_mediator, self.x_condition):
            if v not in (0, 1):
                raise DataError("query arms must be 0 or 1")

    @classmethod
    def observational(cls, x):
        """The factual query for group x: all three arms equal."""
        return cls(x, x, x)

    def as_tuple(self):
        return (self.x_outcome, self.x_mediator, self.x_condition)


@dataclass(frozen=True)
class Functional:
    """Outcome scale: survival, cause-specific incidence, restricted mean,
    all-cause survival, or cumulative hazard.

    For `cif` the cause label (1-based) is required.  For `rmst` the
    evaluation time is the integration horizon; an explicit `horizon`
    caps it, so curve values flatten beyond the cap.
    """

    kind: str = "survival"
    cause: int | None = None
    horizon: float | None = None

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise DataError(f"unknown functional kind {self.kind!r}")
        if self.kind == "cif":
            if self.cause is None or self.cause < 1:
                raise DataError("cif functional needs a cause label >= 1")
        elif self.cause is not None:
            raise DataError("cause only applies to the cif functional")
        if self.horizon is not None:
            if self.kind != "rmst":
                raise DataError("horizon only applies to the rmst functional")
            if not np.isfinite(self.horizon) or self.horizon <= 0.0:
                raise DataError("rmst horizon must be positive and finite")

    @property
    def curve_kind(self):
        """StepCurve kind appropriate for curves on this scale."""
        return {
            "survival": "survival",
            "cif": "cif",
            "rmst": "generic",
            "all_cause_survival": "survival",
            "cumulative_hazard": "hazard",
        }[self.kind]
