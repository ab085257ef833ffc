"""Configuration driven experiments: prediction, simulation and theorem checks.

Usage::

    freeoutliers validate --config bbp_semicircle
    freeoutliers predict  --config my.yaml --output-dir out/
    freeoutliers simulate --config my.yaml --seed 3
    freeoutliers run      --config two_outliers_one_spike -v

``--config`` takes a YAML path or the name of a bundled config.  Exit codes:
0 success, 2 solver non-convergence, 3 configuration error, 4 a theorem
check failed (measured deltas above the configured tolerances).

Config keys (defaults in ``DEFAULTS``)::

    name: str
    kind: additive | positive | circle
    N: int                      matrix size
    trials: int                 Monte Carlo trials (>= 1)
    seed: int                   master seed
    A, B:                       spiked models
      bulk: {family: ..., ...}  measure spec, see measures.make_measure
      spikes: [2.0, {value: 3, multiplicity: 2}, {angle: 2.5}]
      recipe: {source: quantile | diagonal | gue, values, scale, scale_per_n}
    solver: {...}               SolverOptions fields
    predict: {...}              PredictOptions fields
    grid: {points, y}           density grid
    windows: {epsilon: null | [eps per predicted outlier]}
    simulation: {outside_distance, workers, histogram_bins}
    tolerances: {location, overlap, trial_fraction, modulus}
    output_dir: str
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .convolution import density as conv_density
from .errors import BoundaryError, ConfigError, ConvergenceError, MeasureError, ModelError
from .measures import make_measure
from .outliers import PredictOptions, SpikedModel, predict
from .simulation import SimulationConfig, run_monte_carlo
from .subordination import ConvolutionKind, SolverOptions

log = logging.getLogger("freeoutliers")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3, 4

DEFAULTS = {
    "name": "experiment",
    "kind": None,
    "N": 1000,
    "trials": 1,
    "seed": 0,
    "A": None,
    "B": None,
    "solver": {},
    "predict": {},
    "grid": {"points": 2001, "y": 1e-6},
    "windows": {"epsilon": None},
    "simulation": {"outside_distance": 0.1, "workers": 1, "histogram_bins": 200},
    "tolerances": {"location": 0.05, "overlap": 0.05, "trial_fraction": 0.95, "modulus": 1e-10},
    "output_dir": "results",
}
_MODEL_KEYS = {"bulk", "spikes", "recipe"}
_RECIPE_KEYS = {"source", "values", "scale", "scale_per_n"}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    path: str
    message: str

    def __str__(self):
        return f"{self.code} [{self.path}]: {self.message}"


# ---------------------------------------------------------------------------
# config handling


def bundled_configs():
    root = resources.files("freeoutliers") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_config(source):
    """Read a config from a path, a bundled name, or pass a mapping through."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    p = Path(source)
    if not p.exists():
        bundled = resources.files("freeoutliers") / "configs" / f"{source}.yaml"
        if not bundled.is_file():
            raise ConfigError([Diagnostic("config-not-found", "config",
                                          f"no file or bundled config named {source!r}")])
        text = bundled.read_text()
    else:
        text = p.read_text()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([Diagnostic("bad-yaml", "config", str(exc))]) from None
    if not isinstance(cfg, dict):
        raise ConfigError([Diagnostic("bad-yaml", "config", "top level must be a mapping")])
    return cfg


def resolve(cfg):
    """Fill in every default so that the stored config describes the run fully."""
    out = copy.deepcopy(DEFAULTS)
    for k, v in cfg.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    try:
        out["solver"] = SolverOptions.from_dict(out["solver"]).to_dict()
        out["predict"] = PredictOptions.from_dict(out["predict"]).to_dict()
    except (TypeError, ValueError):
        pass
    for side in ("A", "B"):
        m = out.get(side)
        if isinstance(m, dict):
            m.setdefault("spikes", [])
            m["recipe"] = {"source": "quantile", **(m.get("recipe") or {})}
    return out


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _num(v):
    return isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)


def validate(cfg):
    """List every problem with a config; an empty list means it can run."""
    diags = []

    def bad(code, path, msg):
        diags.append(Diagnostic(code, path, msg))

    if not isinstance(cfg, dict):
        return [Diagnostic("bad-config", "config", "config must be a mapping")]
    for k in sorted(set(cfg) - set(DEFAULTS)):
        bad("unknown-key", k, f"unknown top-level key {k!r}")
    cfg = resolve(cfg)

    kind = None
    try:
        kind = ConvolutionKind.parse(cfg["kind"])
    except (ValueError, TypeError):
        bad("bad-kind", "kind", f"unknown model kind {cfg['kind']!r}")
    N, trials = cfg["N"], cfg["trials"]
    if not (_is_int(N) and N >= 1):
        bad("bad-N", "N", f"N must be a positive integer, got {N!r}")
    if not (_is_int(trials) and trials >= 1):
        bad("bad-trials", "trials", f"trials must be an integer >= 1, got {trials!r}")
    if not (_is_int(cfg["seed"]) and cfg["seed"] >= 0):
        bad("bad-seed", "seed", f"seed must be a nonnegative integer, got {cfg['seed']!r}")

    for sec, cls in (("solver", SolverOptions), ("predict", PredictOptions)):
        if not isinstance(cfg[sec], dict):
            bad("bad-section", sec, "must be a mapping")
            continue
        for k in sorted(set(cfg[sec]) - set(cls.__dataclass_fields__)):
            bad("unknown-option", f"{sec}.{k}", f"unknown {sec} option {k!r}")

    g = cfg["grid"]
    if not (_is_int(g.get("points")) and g["points"] >= 2):
        bad("bad-grid", "grid.points", "points must be an integer >= 2")
    if not (_num(g.get("y")) and g["y"] > 0):
        bad("bad-grid", "grid.y", "inversion height must be positive")
    for k in ("location", "overlap", "trial_fraction", "modulus"):
        v = cfg["tolerances"].get(k)
        if not (_num(v) and v > 0):
            bad("bad-tolerance", f"tolerances.{k}", f"must be a positive number, got {v!r}")
    sim = cfg["simulation"]
    if not (_num(sim.get("outside_distance")) and sim["outside_distance"] > 0):
        bad("bad-simulation", "simulation.outside_distance", "must be positive")
    if not (_is_int(sim.get("workers")) and sim["workers"] >= 1):
        bad("bad-simulation", "simulation.workers", "must be an integer >= 1")
    if not (_is_int(sim.get("histogram_bins")) and sim["histogram_bins"] >= 1):
        bad("bad-simulation", "simulation.histogram_bins", "must be an integer >= 1")
    eps = cfg["windows"].get("epsilon")
    if eps is not None and not (isinstance(eps, list) and all(_num(e) and e > 0 for e in eps)):
        bad("bad-window", "windows.epsilon", "must be null or a list of positive numbers")

    models = {}
    for side in ("A", "B"):
        spec = cfg.get(side)
        if not isinstance(spec, dict) or "bulk" not in spec:
            bad("missing-model", side, "needs a mapping with a 'bulk' measure")
            continue
        for k in sorted(set(spec) - _MODEL_KEYS):
            bad("unknown-key", f"{side}.{k}", f"unknown model key {k!r}")
        try:
            bulk = make_measure(spec["bulk"])
        except MeasureError as exc:
            bad(exc.code, f"{side}.bulk", str(exc))
            continue
        try:
            model = SpikedModel.from_dict({"bulk": spec["bulk"], "spikes": spec.get("spikes")})
        except ModelError as exc:
            bad(exc.code, f"{side}.spikes", str(exc))
            continue
        except (TypeError, ValueError, KeyError) as exc:
            bad("bad-spike", f"{side}.spikes", str(exc))
            continue
        models[side] = model
        if kind is not None:
            try:
                model.check_kind(kind)
            except ModelError as exc:
                bad(exc.code, f"{side}.spikes", str(exc))
            if bulk.carrier not in kind.carriers:
                bad("carrier-mismatch", f"{side}.bulk",
                    f"{bulk.carrier} measure cannot enter a {kind.value} model")
            elif kind != ConvolutionKind.ADDITIVE and abs(bulk.mean) < 1e-12:
                shortcut = kind == ConvolutionKind.POSITIVE and bulk.point_location == 0
                if not shortcut:
                    bad("zero-first-moment", f"{side}.bulk",
                        "multiplicative models need a nonzero first moment")
        if _is_int(N) and model.p > N:
            bad("N-too-small", "N", f"N = {N} is smaller than the {model.p} spikes of {side}")
        rec = spec.get("recipe") or {}
        if not isinstance(rec, dict):
            bad("bad-recipe", f"{side}.recipe", "must be a mapping")
            continue
        for k in sorted(set(rec) - _RECIPE_KEYS):
            bad("unknown-key", f"{side}.recipe.{k}", f"unknown recipe key {k!r}")
        src = rec.get("source", "quantile")
        if src not in ("quantile", "diagonal", "gue"):
            bad("bad-recipe", f"{side}.recipe.source", f"unknown source {src!r}")
        elif src == "gue" and kind is not None and kind != ConvolutionKind.ADDITIVE:
            bad("bad-recipe", f"{side}.recipe.source",
                "a GUE block is only allowed in the additive model")
        elif src == "diagonal" and _is_int(N):
            vals = rec.get("values") or []
            if len(vals) != N - model.p:
                bad("bad-recipe", f"{side}.recipe.values",
                    f"needs N - p = {N - model.p} values, got {len(vals)}")
    if (kind == ConvolutionKind.POSITIVE and len(models) == 2
            and models["A"].bulk.point_location == 0 and models["B"].bulk.point_location == 0):
        bad("zero-first-moment", "A.bulk", "both bulks are delta_0")
    return diags


@dataclass
class Experiment:
    config: dict
    kind: ConvolutionKind
    A: SpikedModel
    B: SpikedModel
    solver: SolverOptions
    popts: PredictOptions

    @classmethod
    def from_config(cls, cfg):
        diags = validate(cfg)
        if diags:
            raise ConfigError(diags)
        r = resolve(cfg)
        A = SpikedModel.from_dict(r["A"])
        B = SpikedModel.from_dict(r["B"])
        return cls(r, ConvolutionKind.parse(r["kind"]), A, B,
                   SolverOptions.from_dict(r["solver"]), PredictOptions.from_dict(r["predict"]))

    @property
    def out(self):
        return Path(self.config["output_dir"])


# ---------------------------------------------------------------------------
# stages


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_config(exp):
    exp.out.mkdir(parents=True, exist_ok=True)
    with open(exp.out / "config.resolved.yaml", "w") as fh:
        yaml.safe_dump(exp.config, fh, sort_keys=True)


def do_predict(exp: Experiment):
    """Prediction stage: report (JSON + CSV), support and density grid."""
    _write_config(exp)
    log.info("predicting outliers (%s)", exp.kind.value)
    report = predict(exp.kind, exp.A, exp.B, exp.solver, exp.popts)
    report.to_json(exp.out / "report.json")
    report.to_csv(exp.out / "outliers_predicted.csv")
    report.K.to_json(exp.out / "support.json")
    if report.point_mass_bulk:
        log.info("bulk delta_0 in a positive product: no density grid")
    else:
        g = exp.config["grid"]
        grid = conv_density(exp.A.bulk, exp.B.bulk, exp.kind, y=g["y"], opts=exp.solver,
                            points=g["points"])
        grid.to_csv(exp.out / "density.csv")
    for o in report.outliers:
        log.info("rho = %s  k = %d  ell = %d  weights %.6g / %.6g", o.rho, o.k, o.ell,
                 o.weight_A, o.weight_B)
    return report


def do_simulate(exp: Experiment, report):
    sim = exp.config["simulation"]
    scfg = SimulationConfig(exp.kind, exp.A, exp.B, exp.config["N"], exp.config["trials"],
                            exp.config["seed"], exp.config["A"]["recipe"],
                            exp.config["B"]["recipe"], exp.config["windows"]["epsilon"],
                            sim["outside_distance"], sim["workers"])
    if scfg.epsilon is not None and len(scfg.epsilon) != len(report.outliers):
        raise ConfigError([Diagnostic("bad-window", "windows.epsilon",
                                      f"{len(report.outliers)} outliers predicted, "
                                      f"{len(scfg.epsilon)} epsilons given")])
    log.info("simulating %d trial(s) at N = %d", scfg.trials, scfg.N)
    res = run_monte_carlo(scfg, report)
    exp.out.mkdir(parents=True, exist_ok=True)
    res.write_spectra(exp.out / "spectra.csv")
    res.write_outliers(exp.out / "outliers_measured.csv")
    res.write_overlaps(exp.out / "overlaps.csv")
    res.write_histogram(exp.out / "histogram.csv", bins=sim["histogram_bins"])
    res.write_markers(exp.out / "markers.csv")
    _write_json(exp.out / "simulation.json", res.summary())
    return res


def theorem_checks(exp: Experiment, report, res):
    """Pass/fail lines comparing measured quantities with the prediction."""
    tol = exp.config["tolerances"]
    frac = tol["trial_fraction"]
    n = len(res.trials)
    checks = []

    def add(name, ok, delta, detail):
        checks.append({"check": name, "pass": bool(ok), "delta": delta, "detail": detail})

    good = sum(all(w["count"] == w["expected"] for w in t.windows) for t in res.trials)
    add("outlier-counts", good >= frac * n, n - good,
        f"{good}/{n} trials with k+l eigenvalues in every window")
    good = sum(t.outside_unassigned == 0 for t in res.trials)
    add("no-other-outliers", good >= frac * n, n - good,
        f"{good}/{n} trials without eigenvalues farther than "
        f"{exp.config['simulation']['outside_distance']} from K outside the windows")
    if report.outliers:
        worst = [max(w["location_delta"] for w in t.windows) for t in res.trials]
        good = sum(d <= tol["location"] for d in worst)
        add("outlier-locations", good >= frac * n, float(np.max(worst)),
            f"{good}/{n} trials with every window eigenvalue within {tol['location']} of rho")
    for agg in res.aggregate():
        for side in ("A", "B"):
            w = agg[f"weight{side}"]
            if isinstance(w, str) or (isinstance(w, float) and math.isnan(w)):
                continue
            d = abs(agg[f"overlap{side}_mean"] - w)
            add(f"overlap-{side}[{agg['window']}]", d <= tol["overlap"], d,
                f"mean {agg[f'overlap{side}_mean']:.6f} vs predicted {w:.6f}")
    if exp.kind == ConvolutionKind.CIRCLE:
        m = res.summary()["max_modulus_error"]
        add("unit-modulus", m < tol["modulus"], m, "max | |lambda| - 1 |")
    return checks


def _summary_text(exp, report, checks):
    lines = [f"experiment: {exp.config['name']}", f"kind: {exp.kind.value}",
             f"N = {exp.config['N']}, trials = {exp.config['trials']}, seed = {exp.config['seed']}",
             f"predicted outliers: {len(report.outliers)}"]
    for o in report.outliers:
        pos = o.angle if exp.kind == ConvolutionKind.CIRCLE else float(np.real(o.rho))
        lines.append(f"  rho = {pos!r}  k = {o.k}  ell = {o.ell}  "
                     f"weightA = {o.weight_A!r}  weightB = {o.weight_B!r}  eps = {o.epsilon!r}")
    lines.append("checks:")
    for c in checks:
        lines.append(f"  [{'PASS' if c['pass'] else 'FAIL'}] {c['check']}: {c['detail']} "
                     f"(delta {c['delta']!r})")
    return "\n".join(lines) + "\n"


def run(cfg):
    """Full pipeline; returns (exit status, list of written files)."""
    exp = Experiment.from_config(cfg)
    report = do_predict(exp)
    res = do_simulate(exp, report)
    checks = theorem_checks(exp, report, res)
    _write_json(exp.out / "checks.json", checks)
    text = _summary_text(exp, report, checks)
    (exp.out / "summary.txt").write_text(text)
    print(text, end="")
    status = EXIT_OK if all(c["pass"] for c in checks) else EXIT_CHECK
    return status, sorted(str(p) for p in exp.out.iterdir())


# ---------------------------------------------------------------------------
# command line


def _parser():
    ap = argparse.ArgumentParser(prog="freeoutliers", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("predict", "predict outliers, weights, support and density"),
                      ("simulate", "predict, then run the Monte Carlo trials"),
                      ("run", "predict, simulate and check every theorem statement"),
                      ("validate", "list configuration problems")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", "-c", required=True,
                       help=f"YAML file or bundled name ({', '.join(bundled_configs())})")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--output-dir", "-o", help="override output_dir")
        p.add_argument("--trials", type=int, help="override the number of trials")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.output_dir is not None:
            cfg["output_dir"] = args.output_dir
        if args.trials is not None:
            cfg["trials"] = args.trials
        if args.command == "validate":
            diags = validate(cfg)
            for d in diags:
                print(d)
            if not diags:
                print("ok")
            return EXIT_CONFIG if diags else EXIT_OK
        if args.command == "run":
            return run(cfg)[0]
        exp = Experiment.from_config(cfg)
        report = do_predict(exp)
        if args.command == "simulate":
            res = do_simulate(exp, report)
            print(json.dumps(res.summary(), indent=2, sort_keys=True))
        else:
            print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    except (MeasureError, ModelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, BoundaryError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
