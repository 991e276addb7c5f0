"""Acceptance checks.

Each test prints one ``CRITERION k: PASS|FAIL`` line (also collected into the
pytest terminal summary) and asserts the same verdict.  The slow criteria run
through the command-line driver, and the determinism check repeats those runs
into fresh directories and compares every data file byte for byte.
"""

import json
import math
import pathlib
import time

import numpy as np
import pytest

from aqplfc import cli
from aqplfc.control import (JointRegisterState, aqp_readout, bind_aqp, is_density_operator,
                            quantum_switch_trials, run_control_loop)
from aqplfc.distributions import PhasePrior, sample_phases
from aqplfc.metrics import EstimateEnsemble, sharpness_and_holevo
from aqplfc.oracle import bruteforce_distribution
from aqplfc.plant import InputFamily, outcome_distribution, run_protocol
from aqplfc.torus import PolicyVector

from conftest import ACCEPTANCE_LINES

SQL_CONFIG = {"plant": {"strategy": "product-ml", "n_min": 4, "n_max": 32, "samples": 100_000}}
ORBIT_CONFIG = {"plant": {"family": "sine", "n_max": 12}, "prior": {"family": "uniform", "parameters": []}}
SL_CONFIG = {
    "plant": {"family": "sine"},
    "optimizer": {"population": 20, "max_generations": 60},
    "dataset": {
        "grid": {"family": "wrapped-normal",
                 "mu": [k * math.pi / 4 for k in range(8)],
                 "sigma": [round(1.0 + 0.1 * k, 10) for k in range(8)]},
        "n_max": 10,
        "zeta": 3,
    },
    "model": {"kind": "knn", "grid": [[1], [2], [3], [4], [6], [8]], "model_fraction": 0.8, "folds": 5,
              "max_loss_ratio": 0.9, "min_feasible": 0.8},
}
SL_STAGES = ("dataset", "train", "test")


def verdict(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def cli_run(root: pathlib.Path, name, config, commands):
    out = root / name
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out.parent / f"{name}.json"
    cfg_path.write_text(json.dumps(config))
    t0 = time.perf_counter()
    codes = [cli.main([c, "--config", str(cfg_path), "--out", str(out)]) for c in commands]
    return out, codes, time.perf_counter() - t0


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def runs(workdir):
    """First execution of the slow command-line runs, shared with the determinism check."""
    return {}


def _first(runs, workdir, key, config, commands):
    if key not in runs:
        runs[key] = cli_run(workdir, f"{key}-a", config, commands)
    return runs[key]


def test_criterion_1_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst, t0 = 0.0, time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(1, 9))
        policy = PolicyVector(tuple(rng.uniform(0, 2 * np.pi, n)))
        phi = float(rng.uniform(0, 2 * np.pi))
        tag = ("sine", "product-uniform", "custom")[int(rng.integers(3))]
        amps = None
        if tag == "custom":
            amps = tuple(rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1))
        family = InputFamily(tag, amps)
        fast = outcome_distribution(policy, phi, family)
        slow = bruteforce_distribution(policy, phi, family)
        tv = 0.5 * sum(abs(fast[k] - slow.get(k, 0.0)) for k in fast)
        worst = max(worst, tv)
    elapsed = time.perf_counter() - t0
    verdict(1, worst < 1e-10 and elapsed < 300, f"max TV = {worst:.2e} over 100 triples, {elapsed:.1f} s")


def test_criterion_2_sql_exponent(runs, workdir):
    out, codes, elapsed = _first(runs, workdir, "sql", SQL_CONFIG, ["simulate"])
    fit = json.loads((out / "fit.json").read_text())
    p = fit["exponent"]
    verdict(2, codes == [0] and abs(p - 0.5) <= 0.05,
            f"product-state exponent = {p:.4f} (target 0.50 +/- 0.05), R^2 = {fit['r_squared']:.5f}, "
            f"{elapsed:.0f} s")


def test_criterion_3_orbit_feasible(runs, workdir):
    out, codes, elapsed = _first(runs, workdir, "orbit", ORBIT_CONFIG, ["orbit"])
    fit = json.loads((out / "fit.json").read_text())
    verdict(3, codes == [0] and fit["feasible"] and elapsed <= 1800,
            f"exponent = {fit['exponent']:.4f}, R^2 = {fit['r_squared']:.5f}, feasible = {fit['feasible']}, "
            f"{elapsed:.0f} s")


def test_criterion_4_holevo_closed_form():
    worst = 0.0
    for sigma in (0.1, 0.3, 1.0):
        errors = sample_phases(PhasePrior.wrapped_normal(0.0, sigma), seed=4, count=1_000_000)
        _, v = sharpness_and_holevo(EstimateEnsemble(errors), "standard")
        worst = max(worst, abs(v / math.expm1(sigma ** 2) - 1.0))
    verdict(4, worst <= 0.01, f"max relative deviation from e^(s^2)-1 = {worst:.2e}")


def test_criterion_5_swap_test_statistics():
    rng = np.random.default_rng(5)
    trials = 10_000
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    same = JointRegisterState.from_pure(psi, psi)
    bits_same, posts_same = quantum_switch_trials(same, seed=51, count=trials)
    orth = JointRegisterState.from_pure([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    bits_orth, posts_orth = quantum_switch_trials(orth, seed=52, count=trials)
    freq0 = float(np.mean(bits_orth == 0))
    valid = all(p is None or is_density_operator(p, 1e-10) for p in (*posts_same, *posts_orth))
    unequal = int(bits_same.sum())
    verdict(5, unequal == 0 and abs(freq0 - 0.5) <= 0.02 and valid,
            f"identical inputs: {unequal} unequal outcomes; orthogonal inputs: P(0) = {freq0:.4f}; "
            f"post-states valid = {valid}")


def test_criterion_6_loop_equivalence():
    rng = np.random.default_rng(6)
    policy = PolicyVector(tuple(rng.uniform(0, 2 * np.pi, 8)))
    mismatches = 0
    for seed in range(100):
        phi = float(rng.uniform(0, 2 * np.pi))
        direct = run_protocol(policy, phi, "sine", seed)
        looped = aqp_readout(run_control_loop(bind_aqp(policy, phi, "sine"), None, 8, seed))
        mismatches += direct.bits != looped.bits or direct.phases != looped.phases
    verdict(6, mismatches == 0, f"{mismatches} of 100 seeds differ from run_protocol at N = 8")


def test_criterion_7_sl_pipeline(runs, workdir):
    out, codes, elapsed = _first(runs, workdir, "sl", SL_CONFIG, SL_STAGES)
    report = json.loads((out / "report.json").read_text())
    summary = json.loads((out / "dataset_summary.json").read_text())
    ok = (codes[:2] == [0, 0] and report["loss_ratio"] <= 0.9 and report["feasible_fraction"] >= 0.8
          and elapsed <= 7200)
    verdict(7, ok,
            f"{summary['kept']}/{summary['priors']} feasible priors, k = {report['hyper']}, "
            f"loss ratio vs medoid = {report['loss_ratio']:.3f} (<= 0.9), "
            f"feasible predictions = {report['feasible_fraction']:.2f} (>= 0.8), {elapsed:.0f} s")


def _data_files(out: pathlib.Path):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if not p.name.startswith("manifest-")}


def test_criterion_8_determinism(runs, workdir):
    plans = {"sql": (SQL_CONFIG, ["simulate"]), "orbit": (ORBIT_CONFIG, ["orbit"]), "sl": (SL_CONFIG, SL_STAGES)}
    differing = []
    for key, (config, commands) in plans.items():
        first, _, _ = _first(runs, workdir, key, config, commands)
        second, _, _ = cli_run(workdir, f"{key}-b", config, commands)
        a, b = _data_files(first), _data_files(second)
        differing += [f"{key}/{name}" for name in sorted(set(a) | set(b)) if a.get(name) != b.get(name)]
    verdict(8, not differing, "all data files byte-identical" if not differing else f"differ: {differing}")
