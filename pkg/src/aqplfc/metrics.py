"""Fourier moments, sharpness, Holevo variance and the power-law feasibility fit."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError
from .torus import wrap

INFINITE_VARIANCE = math.inf
# first moments below this are treated as exactly zero sharpness
ZERO_MOMENT = 1e-12
MODES = ("standard", "squared-sharpness")


@dataclass(frozen=True, eq=False)
class EstimateEnsemble:
    """Wrapped estimation errors ``theta = estimate - phi``."""

    errors: np.ndarray

    def __post_init__(self):
        errors = wrap(np.atleast_1d(np.asarray(self.errors, dtype=float)))
        if errors.size < 1:
            raise DomainError("an ensemble needs at least one error sample")
        errors.setflags(write=False)
        object.__setattr__(self, "errors", errors)

    @property
    def count(self) -> int:
        return self.errors.size

    @classmethod
    def from_estimates(cls, estimates, phis) -> "EstimateEnsemble":
        return cls(np.asarray(estimates, dtype=float) - np.asarray(phis, dtype=float))


def fourier_moment(data, nu: int = 1, weights=None) -> complex:
    """``E[exp(i nu theta)]`` of an ensemble or of a density sampled on a grid.

    Parameters
    ----------
    data : EstimateEnsemble or array of angles
    nu : int
        Non-negative harmonic.
    weights : array, optional
        Probability weights for ``data``; for a pdf on an equispaced grid pass
        ``density * 2*pi/len(grid)``.  Normalised internally.
    """
    if nu < 0:
        raise DomainError("harmonic must be non-negative")
    theta = data.errors if isinstance(data, EstimateEnsemble) else np.asarray(data, dtype=float)
    if theta.size == 0:
        raise DomainError("empty ensemble")
    z = np.exp(1j * nu * theta)
    if weights is None:
        return complex(z.mean())
    w = np.asarray(weights, dtype=float)
    return complex(np.sum(w * z) / np.sum(w))


def holevo_from_moment(modulus: float, mode: str = "standard") -> float:
    """Holevo variance from ``|E e^{i theta}|``.

    ``standard`` gives ``m^-2 - 1``; ``squared-sharpness`` squares the sharpness
    once more and gives ``m^-4 - 1``.
    """
    if mode not in MODES:
        raise DomainError(f"unknown variance mode {mode!r}")
    if modulus <= ZERO_MOMENT:
        return INFINITE_VARIANCE
    m = min(float(modulus), 1.0)
    s = m * m
    return (1.0 / s - 1.0) if mode == "standard" else (1.0 / (s * s) - 1.0)


def sharpness_and_holevo(ensemble, mode: str = "standard"):
    """Return ``(sharpness, holevo_variance)``; sharpness is ``|first moment|^2``."""
    m = abs(fourier_moment(ensemble, 1))
    return min(m, 1.0) ** 2, holevo_from_moment(m, mode)


def holevo_standard_error(ensemble, mode: str = "standard") -> float:
    """Delta-method standard error of the ensemble Holevo variance."""
    theta = ensemble.errors if isinstance(ensemble, EstimateEnsemble) else np.asarray(ensemble, dtype=float)
    z = np.exp(1j * theta)
    mean = z.mean()
    m = abs(mean)
    if m <= ZERO_MOMENT:
        return INFINITE_VARIANCE
    # fluctuations of |mean| are, to first order, those of the projection on its direction
    proj = (z * np.conj(mean) / m).real
    se_m = proj.std(ddof=1) / math.sqrt(theta.size)
    slope = 2.0 / m ** 3 if mode == "standard" else 4.0 / m ** 5
    return slope * se_m


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit ``log V = -2 * exponent * log N + intercept``."""

    exponent: float
    intercept: float
    r_squared: float
    points: tuple = ()
    mode: str = "standard"

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "mode": self.mode,
            "points": [[n, v] for n, v in self.points],
        }


def fit_scaling(points: Sequence, mode: str = "standard") -> ScalingFit:
    """Fit the power law to ``(N, V_N)`` pairs on log-log axes."""
    points = [(int(n), float(v)) for n, v in points]
    if len(points) < 3:
        raise InsufficientDataError(f"need at least 3 points, got {len(points)}")
    ns = np.array([p[0] for p in points], dtype=float)
    vs = np.array([p[1] for p in points])
    if len(set(ns)) != len(ns):
        raise DomainError("photon numbers must be distinct")
    if np.any(~np.isfinite(vs)) or np.any(vs <= 0):
        raise DomainError("variances must be finite and positive")
    x, y = np.log(ns), np.log(vs)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return ScalingFit(-slope / 2.0, intercept, r2, tuple(points), mode)


def check_feasibility(fit: ScalingFit, r2_min: float = 0.999) -> bool:
    """Strictly better than the standard quantum limit, with a good straight-line fit."""
    return fit.exponent > 0.5 and fit.r_squared >= r2_min


def sql_baseline(n) -> float:
    """Standard-quantum-limit phase uncertainty ``1/sqrt(N)`` (compare with ``sqrt(V)``)."""
    return 1.0 / math.sqrt(n)


def hl_baseline(n) -> float:
    """Heisenberg-limit phase uncertainty ``1/N``."""
    return 1.0 / n


def _num(x):
    return "inf" if x == INFINITE_VARIANCE else repr(float(x))


def write_scaling_csv(path, rows):
    """Rows of ``(N, V_N, S_N, samples)``; infinite variance is written as ``inf``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["N", "V_N", "S_N", "samples"])
        for n, v, s, samples in rows:
            writer.writerow([int(n), _num(v), _num(s), int(samples)])


def fit_summary_json(fit: ScalingFit, **extra) -> str:
    out = {"exponent": fit.exponent, "intercept": fit.intercept, "r_squared": fit.r_squared, "mode": fit.mode}
    out.update(extra)
    return json.dumps(out, indent=2, sort_keys=True)
