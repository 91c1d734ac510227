"""Command-line front end: simulate cohorts, estimate group curves, and
run pathway decompositions, emitting plot-ready tables.

Three subcommands cover the pipeline:

* ``simulate`` — draw a cohort from a generative spec (JSON) and write it
  as CSV together with an echo of the spec.
* ``curves`` — per-group outcome curves plus their pointwise difference,
  in long format (``t,series,value``).
* ``decompose`` — total-variation pathway decomposition: four potential
  outcomes reduced to direct/indirect/spurious/total effect curves, per
  cause under competing risks, or per dependence strength tau under
  informative censoring (with sensitivity envelopes).

Every output file starts with a comment line carrying the artifact
version and a hash of the resolved configuration; identical
configuration and seed produce byte-identical files.  A JSON file passed
via ``--config`` overrides command-line flags.  Exit codes: 0 success,
2 usage, 3 data validation, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .cge import route1_conditional, route2_population
from .copulas import CopulaSpec
from .curves import aalen_johansen_cif, kaplan_meier
from .decompose import EFFECT_NAMES, decompose_cr, decompose_difference, \
    decompose_ratio
from .dr import crossfit_dr_many
from .errors import DataError, EstimationError
from .identify import default_grid, fit_plugin_nuisances, plugin_po
from .queries import Functional, PotentialOutcomeQuery
from .scm import Cohort, SCMSpec, sample_cohort

_MODES = ("nic", "cr", "ic")
_ESTIMATORS = ("dr", "plugin")
_FLOAT_FMT = "%.12g"


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def _parse_float_list(text):
    try:
        values = [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"not a comma-separated float list: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairsurv",
        description="Pathway decomposition of survival disparities.",
    )
    parser.add_argument("--version", action="version",
                        version=f"fairsurv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file whose entries override flags")
        p.add_argument("--outdir", help="output directory "
                       "(default: $FAIRSURV_OUTDIR or the working directory)")
        p.add_argument("--seed", type=int, default=0)

    sim = sub.add_parser("simulate", help="draw a cohort from a spec")
    common(sim)
    sim.add_argument("--spec", required=True,
                     help="path to a spec JSON, or 'example' for the bundled one")
    sim.add_argument("--n", type=int, required=True, help="cohort size")

    def analysis(p):
        common(p)
        p.add_argument("--cohort", required=True, help="cohort CSV path")
        p.add_argument("--mode", choices=_MODES, default="nic")
        p.add_argument("--estimator", choices=_ESTIMATORS, default="dr")
        p.add_argument("--functional",
                       choices=("survival", "cif", "rmst",
                                "all_cause_survival", "cumulative_hazard"),
                       default="survival")
        p.add_argument("--cause", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--grid", type=_parse_float_list, default=None,
                       help="explicit comma-separated evaluation times")
        p.add_argument("--grid-points", type=int, default=None,
                       help="number of quantile-spaced evaluation times")
        p.add_argument("--n-causes", type=int, default=None,
                       help="number of competing causes in the cohort CSV")
        p.add_argument("--folds", type=int, default=2)
        p.add_argument("--epsilon", type=float, default=0.01)
        p.add_argument("--cap", type=float, default=50.0)
        p.add_argument("--learner", default="stratified")
        p.add_argument("--propensity-learner", default="frequency_table",
                       dest="propensity_learner")
        p.add_argument("--tau", type=_parse_float_list, default=None,
                       help="comma-separated Kendall tau values (ic mode)")
        p.add_argument("--family", default="clayton",
                       choices=("independence", "clayton", "gumbel", "frank"))
        p.add_argument("--envelope-samples", type=int, default=200,
                       dest="envelope_samples")

    dec = sub.add_parser("decompose", help="pathway decomposition tables")
    analysis(dec)
    dec.add_argument("--scale", choices=("difference", "ratio"),
                     default="difference")
    dec.add_argument("--x0", type=int, default=0)
    dec.add_argument("--x1", type=int, default=1)

    cur = sub.add_parser("curves", help="per-group outcome curves")
    analysis(cur)
    return parser


def _resolve_config(args, parser):
    """Merge --config JSON over parsed flags; returns a plain dict."""
    config = {k: v for k, v in vars(args).items() if k != "config"}
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            parser.error(f"config file is not valid JSON: {exc}")
        if not isinstance(overrides, dict):
            parser.error("config file must hold a JSON object")
        for key, value in overrides.items():
            slot = key.replace("-", "_")
            if slot not in config or slot == "command":
                parser.error(f"unknown config entry {key!r}")
            if slot in ("tau", "grid") and isinstance(value, str):
                value = _parse_float_list(value)
            config[slot] = value
    _validate_config(config, parser)
    return config


def _validate_config(config, parser):
    command = config["command"]
    if command == "simulate":
        if config["n"] <= 0:
            parser.error("--n must be a positive integer")
        return
    mode = config["mode"]
    if mode not in _MODES:
        parser.error(f"unknown mode {mode!r}")
    if config["estimator"] not in _ESTIMATORS:
        parser.error(f"unknown estimator {config['estimator']!r}")
    functional = config["functional"]
    if functional == "cif":
        if config.get("cause") is None:
            parser.error("the cif functional needs --cause")
    elif config.get("cause") is not None:
        parser.error("--cause only applies to the cif functional")
    if config.get("horizon") is not None and functional != "rmst":
        parser.error("--horizon only applies to the rmst functional")
    tau = config.get("tau")
    if mode == "ic":
        if not tau:
            parser.error("ic mode needs --tau with at least one value")
        if functional != "survival":
            parser.error("ic mode reconstructs survival curves only")
    elif tau:
        parser.error("--tau only applies to ic mode")
    if config.get("grid") is not None and config.get("grid_points") is not None:
        parser.error("--grid and --grid-points are mutually exclusive")
    if command == "curves" and mode == "nic" \
            and functional not in ("survival", "cif"):
        parser.error("curves reports survival or cif functionals only")
    if command == "decompose":
        if config.get("scale") == "ratio" and mode != "nic":
            parser.error("--scale ratio is only available in nic mode")
        if config["x0"] == config["x1"]:
            parser.error("--x0 and --x1 must name different groups")


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_json_default(v) for v in value]
    return str(value)


def _config_hash(config):
    """Stable short hash of everything that affects output content."""
    payload = {k: v for k, v in sorted(config.items()) if k != "outdir"}
    text = json.dumps(payload, sort_keys=True, default=_json_default)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _header(config):
    return (f"fairsurv {__version__} config sha256:{_config_hash(config)} "
            f"seed={config.get('seed', 0)}")


def _outdir(config):
    target = config.get("outdir") or os.environ.get("FAIRSURV_OUTDIR") or "."
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _flush(writes):
    """Single writer: every command stages (path, text) pairs and all
    files land here, after the computation has fully succeeded."""
    for path, text in writes:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return [path for path, _ in writes]


def _json_payload(config, body):
    return json.dumps(
        {"artifact_version": __version__,
         "config_hash": _config_hash(config), **body},
        sort_keys=True, indent=2, default=_json_default) + "\n"


# ---------------------------------------------------------------------------
# shared analysis helpers
# ---------------------------------------------------------------------------

def _load_cohort(config):
    path = Path(config["cohort"])
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read cohort CSV: {exc}") from exc
    return Cohort.from_csv(text, n_causes=config.get("n_causes"))


def _resolve_grid(config, cohort):
    if config.get("grid") is not None:
        return np.asarray(sorted(set(config["grid"])), dtype=float)
    if config.get("grid_points"):
        qs = np.linspace(0.05, 0.95, int(config["grid_points"]))
        pts = np.unique(np.quantile(cohort.m, qs))
        return pts[pts > 0.0]
    if config.get("mode") == "ic":
        # reconstruction treats censoring as a second event type, so the
        # grid must resolve censoring jumps as well as event jumps
        recoded = Cohort(cohort.x, cohort.z_items, cohort.w_items,
                         cohort.m, np.where(cohort.delta == 1, 1, 2),
                         n_causes=2)
        return default_grid(recoded)
    return default_grid(cohort)


def _functional(config):
    return Functional(config["functional"], cause=config.get("cause"),
                      horizon=config.get("horizon"))


def _learners(config):
    return {"outcome_learner": config["learner"],
            "censoring_learner": config["learner"],
            "propensity_learner": config["propensity_learner"]}


def _dr_config(config):
    return {"n_folds": config["folds"], "seed": config["seed"],
            "epsilon": config["epsilon"], "cap": config["cap"],
            "learners": _learners(config)}


def _queries(x0, x1):
    """The four potential-outcome queries entering the decomposition."""
    return {
        (x1, x0, x0): PotentialOutcomeQuery(x1, x0, x0),
        (x0, x0, x0): PotentialOutcomeQuery(x0, x0, x0),
        (x1, x1, x0): PotentialOutcomeQuery(x1, x1, x0),
        (x1, x1, x1): PotentialOutcomeQuery(x1, x1, x1),
    }


def _tau_tag(tau):
    return f"{tau:g}"


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _load_spec_text(spec_arg):
    if spec_arg == "example":
        return (resources.files("fairsurv.data") / "example_spec.json"
                ).read_text()
    try:
        return Path(spec_arg).read_text()
    except OSError as exc:
        raise DataError(f"cannot read spec file: {exc}") from exc


def cmd_simulate(config):
    spec = SCMSpec.from_json(_load_spec_text(config["spec"]))
    cohort = sample_cohort(spec, config["n"], seed=config["seed"])
    outdir = _outdir(config)
    echo = json.loads(spec.to_json())
    return _flush([
        (outdir / "cohort.csv", cohort.to_csv(header_comment=_header(config))),
        (outdir / "spec.json", _json_payload(config, echo)),
    ])


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def _empirical_group_curve(sub, functional, grid):
    if functional.kind == "cif":
        curve = aalen_johansen_cif(sub.m, sub.delta, functional.cause or 1,
                                   n_causes=sub.n_causes)
    else:
        curve = kaplan_meier(sub.m, (sub.delta > 0).astype(int))
    return np.asarray(curve.evaluate(grid), dtype=float)


def _long_rows(grid, series, values):
    return [(t, series, v) for t, v in zip(grid, values)]


def cmd_curves(config):
    cohort = _load_cohort(config)
    grid = _resolve_grid(config, cohort)
    mode = config["mode"]
    rows = []
    if mode == "nic":
        functional = _functional(config)
        by_group = {g: _empirical_group_curve(
            cohort.subset(cohort.x == g), functional, grid) for g in (0, 1)}
        rows += _long_rows(grid, "x0", by_group[0])
        rows += _long_rows(grid, "x1", by_group[1])
        rows += _long_rows(grid, "tv", by_group[1] - by_group[0])
    elif mode == "cr":
        if cohort.n_causes < 2:
            raise DataError("cr mode needs a cohort with competing causes")
        for k in range(1, cohort.n_causes + 1):
            fk = Functional("cif", cause=k)
            curves = {g: _empirical_group_curve(cohort.subset(cohort.x == g),
                                                fk, grid) for g in (0, 1)}
            rows += _long_rows(grid, f"x0:cause{k}", curves[0])
            rows += _long_rows(grid, f"x1:cause{k}", curves[1])
            rows += _long_rows(grid, f"tv:cause{k}", curves[1] - curves[0])
        fs = Functional("all_cause_survival")
        curves = {g: _empirical_group_curve(cohort.subset(cohort.x == g),
                                            fs, grid) for g in (0, 1)}
        rows += _long_rows(grid, "x0:allcause", curves[0])
        rows += _long_rows(grid, "x1:allcause", curves[1])
        rows += _long_rows(grid, "tv:allcause", curves[1] - curves[0])
    else:  # ic
        nuisances = None
        if config["estimator"] == "plugin":
            nuisances = fit_plugin_nuisances(
                cohort, Functional("survival"), learner=config["learner"],
                propensity_learner=config["propensity_learner"],
                epsilon=config["epsilon"])
        for tau in config["tau"]:
            spec = CopulaSpec(config["family"], tau)
            tag = _tau_tag(tau)
            curves = {}
            for g in (0, 1):
                query = PotentialOutcomeQuery.observational(g)
                if config["estimator"] == "plugin":
                    curves[g] = np.asarray(route1_conditional(
                        cohort, spec, nuisances, query, grid).values,
                        dtype=float)
                else:
                    curves[g] = route2_population(
                        cohort, spec, query, grid=grid,
                        dr_config=_dr_config(config),
                        envelope_config={
                            "n_samples": config["envelope_samples"],
                            "seed": config["seed"]}).central
            rows += _long_rows(grid, f"x0:tau{tag}", curves[0])
            rows += _long_rows(grid, f"x1:tau{tag}", curves[1])
            rows += _long_rows(grid, f"tv:tau{tag}", curves[1] - curves[0])

    lines = [f"# {_header(config)}", "t,series,value"]
    for t, series, value in rows:
        lines.append(f"{_FLOAT_FMT % t},{series},{_FLOAT_FMT % value}")
    outdir = _outdir(config)
    return _flush([(outdir / "curves.csv", "\n".join(lines) + "\n")])


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------

def _nic_series(config, cohort, grid):
    functional = _functional(config)
    x0, x1 = config["x0"], config["x1"]
    queries = _queries(x0, x1)
    if config["estimator"] == "plugin":
        nuisances = fit_plugin_nuisances(
            cohort, functional, learner=config["learner"],
            propensity_learner=config["propensity_learner"],
            epsilon=config["epsilon"])
        po = {key: plugin_po(nuisances, cohort, q, functional, grid)
              for key, q in queries.items()}
    else:
        po = crossfit_dr_many(
            cohort, list(queries.values()), functional, grid=grid,
            n_folds=config["folds"], seed=config["seed"],
            epsilon=config["epsilon"], cap=config["cap"],
            learners=_learners(config))
    reducer = (decompose_ratio if config.get("scale") == "ratio"
               else decompose_difference)
    return reducer(po, x0, x1, functional=functional, grid=grid)


def _decomposition_csv(series_list, header, extra_col):
    """Long CSV across several decomposition series.

    ``extra_col`` is a (name, tags) pair labelling each series, e.g.
    ("cause", ["1", "2", "all"]).
    """
    name, tags = extra_col
    lines = [f"# {header}", f"t,{name},effect,estimate,se,lo,hi"]
    for tag, series in zip(tags, series_list):
        for effect_name in EFFECT_NAMES:
            eff = series.effect(effect_name)
            for j, t in enumerate(series.grid):
                cells = [_FLOAT_FMT % t, str(tag), effect_name,
                         _FLOAT_FMT % eff.estimate[j]]
                for band in (eff.se, eff.lo, eff.hi):
                    cells.append("" if band is None else _FLOAT_FMT % band[j])
                lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _ic_effect_tables(config, cohort, grid, tau, nuisances=None):
    """Central decomposition, plus envelope bounds when dr bands exist."""
    spec = CopulaSpec(config["family"], tau)
    x0, x1 = config["x0"], config["x1"]
    queries = _queries(x0, x1)
    if config["estimator"] == "plugin":
        central = {key: np.asarray(
            route1_conditional(cohort, spec, nuisances, q, grid).values,
            dtype=float) for key, q in queries.items()}
        bands = None
    else:
        central, bands = {}, {}
        for key, q in queries.items():
            result = route2_population(
                cohort, spec, q, grid=grid, dr_config=_dr_config(config),
                envelope_config={"n_samples": config["envelope_samples"],
                                 "seed": config["seed"]})
            central[key] = result.central
            bands[key] = (result.env_lo, result.env_hi)

    pairs = {
        "tv": ((x1, x1, x1), (x0, x0, x0)),
        "direct": ((x1, x0, x0), (x0, x0, x0)),
        "indirect": ((x1, x0, x0), (x1, x1, x0)),
        "spurious": ((x1, x1, x0), (x1, x1, x1)),
    }
    effects = {}
    for name, (pos, neg) in pairs.items():
        estimate = central[pos] - central[neg]
        if bands is None:
            effects[name] = (estimate, None, None)
        else:
            # Interval arithmetic: every pair of admissible trajectories
            # inside the two envelopes yields a difference inside these
            # bounds, so the effect band is conservative but sound.
            lo = bands[pos][0] - bands[neg][1]
            hi = bands[pos][1] - bands[neg][0]
            effects[name] = (estimate, lo, hi)
    return effects


def cmd_decompose(config):
    cohort = _load_cohort(config)
    grid = _resolve_grid(config, cohort)
    outdir = _outdir(config)
    header = _header(config)
    writes = []
    diagnostics = {"command": "decompose", "mode": config["mode"],
                   "estimator": config["estimator"], "n_rows": cohort.n,
                   "grid_points": int(grid.size)}

    if config["mode"] == "nic":
        series = _nic_series(config, cohort, grid)
        writes.append((outdir / "decomposition.csv",
                       series.to_csv(header_comment=header)))
        writes.append((outdir / "decomposition.json",
                       _json_payload(config, json.loads(series.to_json()))))
        diagnostics["series"] = series.diagnostics
    elif config["mode"] == "cr":
        series_list = decompose_cr(
            cohort, config["x0"], config["x1"],
            estimator=("doubly_robust" if config["estimator"] == "dr"
                       else "plugin"),
            grid=grid, learner=config["learner"],
            propensity_learner=config["propensity_learner"],
            epsilon=config["epsilon"], n_folds=config["folds"],
            seed=config["seed"], cap=config["cap"],
            learners=(_learners(config)
                      if config["estimator"] == "dr" else None))
        tags = [str(s.functional.cause) if s.functional.kind == "cif"
                else "all" for s in series_list]
        writes.append((outdir / "decomposition.csv",
                       _decomposition_csv(series_list, header,
                                          ("cause", tags))))
        payload = {"series": {tag: json.loads(s.to_json())
                              for tag, s in zip(tags, series_list)}}
        writes.append((outdir / "decomposition.json",
                       _json_payload(config, payload)))
        diagnostics["causes"] = tags
    else:  # ic
        tau_list = config["tau"]
        nuisances = None
        if config["estimator"] == "plugin":
            nuisances = fit_plugin_nuisances(
                cohort, Functional("survival"), learner=config["learner"],
                propensity_learner=config["propensity_learner"],
                epsilon=config["epsilon"])
        lines = [f"# {header}", "t,tau,effect,estimate,lo,hi"]
        payload = {}
        env_writes = []
        for tau in tau_list:
            effects = _ic_effect_tables(config, cohort, grid, tau,
                                        nuisances=nuisances)
            tag = _tau_tag(tau)
            for name in EFFECT_NAMES:
                estimate, lo, hi = effects[name]
                for j, t in enumerate(grid):
                    cells = [_FLOAT_FMT % t, tag, name,
                             _FLOAT_FMT % estimate[j],
                             "" if lo is None else _FLOAT_FMT % lo[j],
                             "" if hi is None else _FLOAT_FMT % hi[j]]
                    lines.append(",".join(cells))
            payload[tag] = {
                name: {"estimate": [float(v) for v in effects[name][0]],
                       "lo": (None if effects[name][1] is None
                              else [float(v) for v in effects[name][1]]),
                       "hi": (None if effects[name][2] is None
                              else [float(v) for v in effects[name][2]])}
                for name in EFFECT_NAMES}
            if effects["tv"][1] is not None:
                env_lines = [f"# {header}", "t,central,env_lo,env_hi,tau"]
                estimate, lo, hi = effects["tv"]
                for j, t in enumerate(grid):
                    env_lines.append(",".join(
                        _FLOAT_FMT % v
                        for v in (t, estimate[j], lo[j], hi[j], tau)))
                env_writes.append((outdir / f"envelope_tau{tag}.csv",
                                   "\n".join(env_lines) + "\n"))
        writes += env_writes
        writes.append((outdir / "decomposition.csv",
                       "\n".join(lines) + "\n"))
        writes.append((outdir / "decomposition.json",
                       _json_payload(config,
                                     {"grid": [float(t) for t in grid],
                                      "effects": payload})))
        diagnostics["tau"] = [float(t) for t in tau_list]

    writes.append((outdir / "diagnostics.json",
                   _json_payload(config, diagnostics)))
    return _flush(writes)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _resolve_config(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if config["command"] == "simulate":
            paths = cmd_simulate(config)
        elif config["command"] == "curves":
            paths = cmd_curves(config)
        else:
            paths = cmd_decompose(config)
    except DataError as exc:
        print(f"fairsurv: data error: {exc}", file=sys.stderr)
        return 3
    except EstimationError as exc:
        print(f"fairsurv: estimation error: {exc}", file=sys.stderr)
        return 4
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
