"""Per-N variance scans: a given policy family, or the non-adaptive product-state baseline."""

from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

from . import _random
from .distributions import PhasePrior, sample_phases
from .metrics import EstimateEnsemble, ScalingFit, fit_scaling, sharpness_and_holevo
from .plant import InputFamily, family_amplitudes, ml_phase_estimate, simulate_estimates
from .torus import TWO_PI, PolicyVector

CHUNK = 20_000


def _trajectories(n, prior, samples, seed, amplitudes, deltas, return_bits=False):
    ests, bits = [], []
    # photon draws keyed by N so that scans over N stay independent
    key = (_random.TRAJECTORIES, n)
    for lo in range(0, samples, CHUNK):
        count = min(CHUNK, samples - lo)
        phis = sample_phases(prior, seed, count, start=lo)
        u = _random.uniform_block(seed, key, lo, count, width=n)
        out = simulate_estimates(deltas, phis, u, amplitudes, return_bits=return_bits)
        if return_bits:
            ests.append((out[0], phis))
            bits.append(out[1])
        else:
            ests.append((out, phis))
    est = np.concatenate([e for e, _ in ests])
    phis = np.concatenate([p for _, p in ests])
    return (est, phis, np.concatenate(bits)) if return_bits else (est, phis)


def variance_scan(policies: Callable[[int], PolicyVector], ns: Iterable[int], prior: PhasePrior,
                  family=None, samples: int = 100_000, seed: int = 0, mode: str = "standard"):
    """Monte-Carlo ``(N, V_N, S_N, samples)`` rows for ``policies(N)``."""
    family = InputFamily.coerce(family)
    rows = []
    for n in ns:
        amps = family_amplitudes(n, family)
        est, phis = _trajectories(n, prior, samples, seed, amps, policies(n).as_array())
        s, v = sharpness_and_holevo(EstimateEnsemble.from_estimates(est, phis), mode)
        rows.append((n, v, s, samples))
    return rows


def fold_half_circle(phis) -> np.ndarray:
    """Map ``phi`` to the representative in ``[0, pi]`` of the pair ``{phi, -phi}``."""
    phis = np.mod(np.asarray(phis, dtype=float), TWO_PI)
    return np.where(phis > math.pi, TWO_PI - phis, phis)


def sql_scan(ns: Iterable[int], samples: int = 100_000, seed: int = 0, mode: str = "standard"):
    """Non-adaptive product-state baseline.

    Every photon is injected on its own, the reference phase stays at zero,
    and the phase is read from the fraction of port-0 clicks with the
    single-photon maximum-likelihood map.  That map only resolves ``phi`` up
    to sign, so errors are measured against the folded phase in ``[0, pi]``.
    Unknown phases are uniform on the circle.
    """
    rows = []
    prior = PhasePrior.uniform()
    for n in ns:
        amps = family_amplitudes(n, InputFamily("product-uniform"))
        _, phis, bits = _trajectories(n, prior, samples, seed, amps, np.zeros(n), return_bits=True)
        zeros = n - bits.sum(axis=1, dtype=np.int64)
        est = ml_phase_estimate(zeros, n)
        ens = EstimateEnsemble.from_estimates(est, fold_half_circle(phis))
        s, v = sharpness_and_holevo(ens, mode)
        rows.append((n, v, s, samples))
    return rows


def fit_rows(rows, mode: str = "standard") -> ScalingFit:
    return fit_scaling([(n, v) for n, v, _, _ in rows], mode)
