"""Command-line driver.

Every command reads an optional JSON config, overlays the command-line flags,
materialises all defaults (including every sub-seed) and writes its data files
plus a ``manifest-<command>.json`` into the output directory.

Exit codes: 0 success, 1 usage or configuration error, 2 feasibility or test
failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import platform
import sys
from importlib import resources

import numpy as np
import scipy

from . import __version__, control, learning, optimizer, scaling
from .distributions import PhasePrior
from .errors import AQPError, ConfigurationError
from .metrics import check_feasibility, write_scaling_csv
from .plant import InputFamily
from .torus import PolicyOrbit, PolicyVector

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_RUNTIME = 0, 1, 2, 3
CONFIG_VERSION = 1
COMMANDS = ("simulate", "optimize", "orbit", "dataset", "train", "test", "switch-demo", "loop-demo")

DEFAULTS = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "out": "aqplfc-out",
    "threads": 1,
    "plant": {
        "family": "sine",
        "amplitudes": None,
        "n": 4,
        "n_min": 4,
        "n_max": 12,
        # "zeros", an explicit list of angles, or "orbit" to read plant.orbit
        "policy": "zeros",
        "orbit": None,
        "samples": 100_000,
        # "adaptive" runs the policy; "product-ml" is the non-adaptive baseline
        "strategy": "adaptive",
        "mode": "standard",
    },
    "prior": {"family": "uniform", "parameters": []},
    "optimizer": {**optimizer.DEConfig().to_dict(), "seed": None},
    "dataset": {
        "priors": None,
        "grid": {"family": "wrapped-normal", "mu": [0.0], "sigma": [1.0, 1.5, 2.0]},
        "n_max": 10,
        "zeta": 3,
    },
    "model": {
        "kind": "knn",
        "grid": [[1], [2], [3], [4], [6], [8]],
        "model_fraction": 0.8,
        "folds": 5,
        "split_seed": None,
        "max_loss_ratio": 1.0,
        "min_feasible": 0.8,
    },
    "switch": {
        "mode": "threshold",
        "q": 0.5,
        "distance": "total-variation",
        "trials": 10_000,
        "sensor": [1.0, 0.0],
        "external": [0.0, 1.0],
        "classical_y": [0.5, 0.5],
        "classical_r": [0.5, 0.5],
    },
    "loop": {
        "reference": 5,
        "alphabet_size": 16,
        "max_iterations": 20,
        "n": 8,
        "phi": 1.0,
        "policy": None,
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aqplfc", description="Adaptive phase estimation as learned feedback control.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (results never depend on it)")
        p.add_argument("--require-feasible", action="store_true",
                       help="exit with code 2 unless the result passes the feasibility check")
    return parser


def _merge(base, over):
    """Overlay ``over`` on the defaults; sections merge key by key, values replace."""
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config section {key!r} must be an object")
            unknown = set(value) - set(base[key])
            if unknown:
                raise ConfigurationError(f"unknown keys in {key!r}: {sorted(unknown)}")
            out[key].update(copy.deepcopy(value))
        else:
            out[key] = value
    return out


def _validate(cfg):
    """Build every typed object once so that bad values surface as config errors."""
    try:
        _prior(cfg["prior"])
        _family(cfg)
        _de(cfg)
        control.SwitchConfig(cfg["switch"]["mode"], cfg["switch"]["q"], cfg["switch"]["distance"])
        learning.SplitSpec(cfg["model"]["model_fraction"], cfg["model"]["folds"], cfg["model"]["split_seed"])
        if cfg["model"]["kind"] not in learning.KINDS:
            raise ConfigurationError(f"unknown model kind {cfg['model']['kind']!r}")
        plant = cfg["plant"]
        if not 1 <= plant["n_min"] <= plant["n_max"]:
            raise ConfigurationError("need 1 <= plant.n_min <= plant.n_max")
        if plant["samples"] < 1:
            raise ConfigurationError("plant.samples must be positive")
    except ConfigurationError:
        raise
    except (AQPError, ValueError, TypeError, KeyError) as exc:
        raise ConfigurationError(f"{type(exc).__name__}: {exc}") from exc


def load_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigurationError(f"unsupported config version {cfg['version']!r}")
    for flag, key in (("seed", "seed"), ("out", "out"), ("threads", "threads")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    # every sub-seed is explicit from here on
    if cfg["optimizer"]["seed"] is None:
        cfg["optimizer"]["seed"] = cfg["seed"]
    if cfg["model"]["split_seed"] is None:
        cfg["model"]["split_seed"] = cfg["seed"]
    _validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    data = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _family(cfg):
    plant = cfg["plant"]
    return InputFamily(plant["family"], plant["amplitudes"])


def _prior(block):
    return PhasePrior(block["family"], tuple(block.get("parameters", ())))


def _de(cfg):
    return optimizer.DEConfig.from_dict(cfg["optimizer"])


def _json_num(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


class Run:
    """Output bookkeeping for one command."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.out = cfg["out"]
        self.files = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        os.makedirs(self.out, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)

    def finish(self, status):
        manifest = {
            "command": self.command,
            "config_hash": config_hash(self.cfg),
            "config": self.cfg,
            "versions": {"aqplfc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "outputs": sorted(self.files),
            "status": status,
        }
        with open(os.path.join(self.out, f"manifest-{self.command}.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _policy_source(cfg):
    plant = cfg["plant"]
    spec = plant["policy"]
    if spec == "zeros":
        return PolicyVector.zeros
    if spec == "orbit":
        if not plant["orbit"]:
            raise ConfigurationError("plant.policy = 'orbit' needs plant.orbit")
        try:
            with open(plant["orbit"]) as fh:
                orbit = PolicyOrbit.from_json(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read orbit: {exc}") from exc
        return lambda n: orbit[n]
    if isinstance(spec, list):
        fixed = PolicyVector(tuple(spec))
        return lambda n: fixed if n == fixed.n else _bad_n(n, fixed.n)
    raise ConfigurationError(f"unrecognised plant.policy {spec!r}")


def _bad_n(n, have):
    raise ConfigurationError(f"explicit policy has length {have}, scan asked for N={n}")


def cmd_simulate(cfg, run, args):
    plant = cfg["plant"]
    ns = range(plant["n_min"], plant["n_max"] + 1)
    mode = plant["mode"]
    if plant["strategy"] == "product-ml":
        rows = scaling.sql_scan(ns, plant["samples"], cfg["seed"], mode)
    elif plant["strategy"] == "adaptive":
        rows = scaling.variance_scan(_policy_source(cfg), ns, _prior(cfg["prior"]), _family(cfg),
                                     plant["samples"], cfg["seed"], mode)
    else:
        raise ConfigurationError(f"unknown plant.strategy {plant['strategy']!r}")
    write_scaling_csv(run.path("scaling.csv"), rows)
    summary = {"rows": len(rows)}
    feasible = False
    if all(math.isfinite(v) and v > 0 for _, v, _, _ in rows) and len(rows) >= 3:
        fit = scaling.fit_rows(rows, mode)
        feasible = check_feasibility(fit)
        summary.update(exponent=fit.exponent, intercept=fit.intercept, r_squared=fit.r_squared)
    else:
        summary.update(exponent=None, intercept=None, r_squared=None)
    summary["feasible"] = feasible
    run.write_json("fit.json", summary)
    return EXIT_FAIL if args.require_feasible and not feasible else EXIT_OK


def cmd_optimize(cfg, run, args):
    de = _de(cfg)
    prior, family = _prior(cfg["prior"]), _family(cfg)
    rep = optimizer.optimize_policy(cfg["plant"]["n"], prior, family, de)
    out = rep.to_dict()
    out["exact_variance"] = _json_num(optimizer.orbit_variance(rep.best_policy, prior, family, de))
    out["config"] = de.to_dict()
    run.write_json("report.json", out)
    ok = math.isfinite(rep.best_variance)
    return EXIT_FAIL if args.require_feasible and not ok else EXIT_OK


def cmd_orbit(cfg, run, args):
    de = _de(cfg)
    orbit, fit = optimizer.build_orbit(cfg["plant"]["n_max"], _prior(cfg["prior"]), _family(cfg), de)
    run.write_text("orbit.json", orbit.to_json() + "\n")
    with open(run.path("orbit_variance.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "V_N"])
        for n, v in fit.points:
            w.writerow([n, repr(v)])
    feasible = check_feasibility(fit)
    run.write_json("fit.json", {"exponent": fit.exponent, "intercept": fit.intercept,
                                "r_squared": fit.r_squared, "feasible": feasible})
    return EXIT_FAIL if args.require_feasible and not feasible else EXIT_OK


def dataset_priors(block) -> list:
    if block["priors"] is not None:
        return [_prior(p) for p in block["priors"]]
    grid = block["grid"]
    fam = grid.get("family", "wrapped-normal")
    if fam == "wrapped-normal":
        return [PhasePrior.wrapped_normal(m, s) for m in grid["mu"] for s in grid["sigma"]]
    if fam == "von-mises":
        return [PhasePrior.von_mises(m, k) for m in grid["mu"] for k in grid["kappa"]]
    raise ConfigurationError(f"no grid generator for prior family {fam!r}")


def cmd_dataset(cfg, run, args):
    block = cfg["dataset"]
    priors = dataset_priors(block)
    ds = learning.generate_dataset(priors, block["n_max"], block["zeta"], _de(cfg), _family(cfg))
    run.write_text("dataset.jsonl", ds.to_jsonl())
    run.write_json("dataset_summary.json", {"priors": len(priors), "kept": len(ds), "excluded": ds.excluded})
    return EXIT_OK


def _load_dataset(cfg, name):
    path = os.path.join(cfg["out"], name)
    try:
        return learning.Dataset.load(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc


def cmd_train(cfg, run, args):
    m = cfg["model"]
    ds = _load_dataset(cfg, "dataset.jsonl")
    if len(ds) == 0:
        raise learning.EmptyDatasetError("dataset is empty")
    spec = learning.SplitSpec(m["model_fraction"], m["folds"], m["split_seed"])
    model_set, test_set = learning.split_dataset(ds, spec)
    hyper = learning.calibrate(model_set, m["grid"], spec, m["kind"])
    reg = learning.train(model_set, m["kind"], hyper)
    run.write_text("model_set.jsonl", model_set.to_jsonl())
    run.write_text("test_set.jsonl", test_set.to_jsonl())
    run.write_json("model.json", {"kind": m["kind"], "hyper": list(hyper), "n_max": ds.n_max,
                                  "training_loss": learning.mean_loss(reg, model_set)})
    return EXIT_OK


def cmd_test(cfg, run, args):
    m = cfg["model"]
    try:
        with open(os.path.join(cfg["out"], "model.json")) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"no trained model in {cfg['out']}: {exc}") from exc
    reg = learning.train(_load_dataset(cfg, "model_set.jsonl"), spec["kind"], spec["hyper"])
    report = learning.test(reg, _load_dataset(cfg, "test_set.jsonl"), cfg=_de(cfg),
                           max_loss_ratio=m["max_loss_ratio"], min_feasible=m["min_feasible"])
    run.write_json("report.json", report)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_switch_demo(cfg, run, args):
    s = cfg["switch"]
    sc = control.SwitchConfig(s["mode"], s["q"], s["distance"])
    trials, seed = s["trials"], cfg["seed"]
    y, r = control.ClassicalSignal(s["classical_y"]), control.ClassicalSignal(s["classical_r"])
    routed = sum(control.classical_switch(0, y, r, sc, seed, i).control for i in range(trials))
    state = control.JointRegisterState.from_pure(s["sensor"], s["external"])
    bits, posts = control.quantum_switch_trials(state, seed, trials)
    sensor = np.asarray(s["sensor"], dtype=complex)
    external = np.asarray(s["external"], dtype=complex)
    overlap = abs(np.vdot(sensor / np.linalg.norm(sensor), external / np.linalg.norm(external))) ** 2
    valid = all(p is None or control.is_density_operator(p) for p in posts)
    run.write_json("switch.json", {
        "classical": {"mode": sc.mode, "q": sc.q, "distance": sc.distance, "trials": trials,
                      "routed_to_output": int(routed), "fed_back": int(trials - routed)},
        "quantum": {"input_overlap": float(overlap), "trials": trials,
                    "outcome_0": int(trials - bits.sum()), "outcome_1": int(bits.sum()),
                    "post_states_valid": bool(valid)},
    })
    return EXIT_OK


def cmd_loop_demo(cfg, run, args):
    lp = cfg["loop"]
    integ = control.run_control_loop(control.integrator_binding(lp["reference"], lp["alphabet_size"]),
                                     control.SwitchConfig(cfg["switch"]["mode"], cfg["switch"]["q"],
                                                          cfg["switch"]["distance"]),
                                     lp["max_iterations"], cfg["seed"])
    integ.write_csv(run.path("loop_trace.csv"))
    n = lp["n"]
    policy = PolicyVector(tuple(lp["policy"])) if lp["policy"] is not None else PolicyVector.zeros(n)
    aqp = control.run_control_loop(control.bind_aqp(policy, lp["phi"], _family(cfg)), None, policy.n, cfg["seed"])
    aqp.write_csv(run.path("aqp_trace.csv"))
    res = control.aqp_readout(aqp)
    run.write_json("loop.json", {
        "integrator": {"z": integ.z, "iterations": integ.iterations, "timed_out": integ.timed_out,
                       "plant_calls": integ.ledger.plant_calls},
        "aqp": {"bits": list(res.bits), "estimate": res.estimate, "photons": aqp.ledger.photons,
                "terminated": aqp.terminated},
    })
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate, "optimize": cmd_optimize, "orbit": cmd_orbit, "dataset": cmd_dataset,
    "train": cmd_train, "test": cmd_test, "switch-demo": cmd_switch_demo, "loop-demo": cmd_loop_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        run = Run(args.command, cfg)
    except (ConfigurationError, ValueError, TypeError, KeyError) as exc:
        print(f"aqplfc: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        code = HANDLERS[args.command](cfg, run, args)
    except ConfigurationError as exc:
        print(f"aqplfc: config error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (AQPError, ValueError, ArithmeticError, OSError) as exc:
        print(f"aqplfc: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_RUNTIME
    run.finish({EXIT_OK: "ok", EXIT_USAGE: "config-error", EXIT_FAIL: "failed", EXIT_RUNTIME: "error"}[code])
    return code


def report_schema() -> dict:
    return json.loads(resources.files("aqplfc").joinpath("schemas/optimization_report.schema.json").read_text())


if __name__ == "__main__":
    sys.exit(main())
