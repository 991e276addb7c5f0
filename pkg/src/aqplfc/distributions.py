"""Circular phase priors, their sampling and cumulant features.

Cumulants of a circular law are read off the integer-frequency characteristic
function: for the underlying (unwrapped) variable,

    log E[e^{i p phi}] = sum_j kappa_j (i p)^j / j!

and wrapping does not change the left-hand side at integer ``p``.  Odd
cumulants come from the arguments of the Fourier moments and even cumulants
from their log-moduli.  For the wrapped normal this recovers ``(mu, sigma^2,
0, ...)`` exactly; other families use numerically integrated moments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, ndtri

from . import _random
from .errors import DegenerateFeatureError, DeltaUnsupportedError, DomainError
from .torus import TWO_PI, wrap, wrap_angle

FAMILIES = ("point", "uniform", "wrapped-normal", "von-mises", "mixture")
NUMERIC_RESOLUTION = 4096
_U_EPS = 2.0 ** -54


@dataclass(frozen=True)
class PhasePrior:
    """A circular distribution for the unknown phase.

    ``parameters`` by family: point ``(loc,)``; uniform ``()``; wrapped-normal
    ``(mu, sigma)``; von-mises ``(mu, kappa)``; mixture of wrapped normals
    ``(w1, mu1, sigma1, w2, mu2, sigma2, ...)``.
    """

    family: str
    parameters: tuple = ()

    def __post_init__(self):
        params = tuple(float(p) for p in self.parameters)
        object.__setattr__(self, "parameters", params)
        if self.family not in FAMILIES:
            raise DomainError(f"unknown prior family {self.family!r}")
        if not all(math.isfinite(p) for p in params):
            raise DomainError("prior parameters must be finite")
        expected = {"point": 1, "uniform": 0, "wrapped-normal": 2, "von-mises": 2}
        if self.family in expected and len(params) != expected[self.family]:
            raise DomainError(f"{self.family} takes {expected[self.family]} parameters, got {len(params)}")
        if self.family == "wrapped-normal" and params[1] < 0:
            raise DomainError("wrapped-normal sigma must be non-negative")
        if self.family == "von-mises" and params[1] < 0:
            raise DomainError("von Mises concentration must be non-negative")
        if self.family == "mixture":
            if len(params) == 0 or len(params) % 3:
                raise DomainError("mixture parameters come in (weight, mu, sigma) triples")
            w = np.array(params[0::3])
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise DomainError("mixture weights must be non-negative and sum to 1")
            if any(s < 0 for s in params[2::3]):
                raise DomainError("mixture sigmas must be non-negative")

    @classmethod
    def point(cls, loc):
        return cls("point", (loc,))

    @classmethod
    def uniform(cls):
        return cls("uniform", ())

    @classmethod
    def wrapped_normal(cls, mu, sigma):
        return cls("wrapped-normal", (mu, sigma))

    @classmethod
    def von_mises(cls, mu, kappa):
        return cls("von-mises", (mu, kappa))

    @classmethod
    def mixture(cls, components):
        return cls("mixture", tuple(x for comp in components for x in comp))

    @property
    def components(self):
        p = self.parameters
        return [(p[i], p[i + 1], p[i + 2]) for i in range(0, len(p), 3)]

    def shifted(self, delta: float) -> "PhasePrior":
        """Same shape, location moved by ``delta``."""
        p = list(self.parameters)
        if self.family in ("point", "wrapped-normal", "von-mises"):
            p[0] += delta
        elif self.family == "mixture":
            for i in range(1, len(p), 3):
                p[i] += delta
        return PhasePrior(self.family, tuple(p))

    def to_dict(self):
        return {"family": self.family, "parameters": list(self.parameters)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["family"], tuple(data.get("parameters", ())))

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class CumulantFeatures:
    """Truncated cumulant vector ``(kappa_1, ..., kappa_zeta)``; kappa_1 is an angle."""

    kappas: tuple

    def __post_init__(self):
        if len(self.kappas) < 1:
            raise DomainError("need at least one cumulant")
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))

    @property
    def zeta(self) -> int:
        return len(self.kappas)


def pdf(prior: PhasePrior, angles) -> np.ndarray:
    """Density on the circle at the given angles."""
    x = np.asarray(angles, dtype=float)
    fam, p = prior.family, prior.parameters
    if fam == "point":
        raise DeltaUnsupportedError("a point prior has no density; sample it instead")
    if fam == "uniform":
        return np.full(x.shape, 1.0 / TWO_PI)
    if fam == "wrapped-normal":
        return _wrapped_normal_pdf(x, p[0], p[1])
    if fam == "von-mises":
        mu, kappa = p
        return np.exp(kappa * (np.cos(x - mu) - 1.0)) / (TWO_PI * i0e(kappa))
    return sum(w * _wrapped_normal_pdf(x, mu, s) for w, mu, s in prior.components)


def _wrapped_normal_pdf(x, mu, sigma):
    if sigma == 0.0:
        raise DeltaUnsupportedError("zero-width wrapped normal has no density")
    d = np.mod(x - mu + math.pi, TWO_PI) - math.pi
    if sigma > 2.0:
        # Fourier series converges fast once the law is broad
        terms = int(math.ceil(math.sqrt(2.0 * 40.0) / sigma)) + 2
        out = np.full(d.shape, 1.0)
        for q in range(1, terms + 1):
            out = out + 2.0 * math.exp(-0.5 * (q * sigma) ** 2) * np.cos(q * d)
        return out / TWO_PI
    wraps = int(math.ceil(10.0 * sigma / TWO_PI)) + 1
    out = np.zeros(d.shape)
    for k in range(-wraps, wraps + 1):
        out = out + np.exp(-0.5 * ((d + k * TWO_PI) / sigma) ** 2)
    return out / (sigma * math.sqrt(TWO_PI))


def pdf_on_grid(prior: PhasePrior, resolution: int = 512):
    """Equispaced angles ``2 pi j / resolution`` and the density there."""
    if resolution < 8:
        raise DomainError("grid resolution must be at least 8")
    angles = TWO_PI * np.arange(resolution) / resolution
    return angles, pdf(prior, angles)


def quadrature(prior: PhasePrior, resolution: int = 512):
    """Angles and probability weights for integrating against the prior.

    A point prior is a single node.  Weights sum to one.
    """
    if prior.family == "point":
        return np.array([wrap_angle(prior.parameters[0])]), np.ones(1)
    if prior.family == "wrapped-normal" and prior.parameters[1] == 0.0:
        return np.array([wrap_angle(prior.parameters[0])]), np.ones(1)
    angles, dens = pdf_on_grid(prior, resolution)
    w = dens / dens.sum()
    return angles, w


def harmonic_cutoff(prior: PhasePrior, tol: float = 1e-13, limit: int = 512) -> int:
    """Smallest ``K`` with ``|E e^{ik phi}| < tol`` for every ``k >= K`` (capped at ``limit``).

    A trigonometric polynomial of degree ``d`` is integrated against the prior
    without aliasing by ``d + 1 + K`` equispaced nodes.
    """
    if prior.family in ("uniform", "point"):
        return 0 if prior.family == "uniform" else limit
    if prior.family == "wrapped-normal" and prior.parameters[1] == 0.0:
        return limit
    _, dens = pdf_on_grid(prior, NUMERIC_RESOLUTION)
    mags = np.abs(np.fft.rfft(dens / dens.sum()))
    big = np.nonzero(mags >= tol)[0]
    return int(min(limit, big[-1] + 1 if big.size else 1))


def sample_phases(prior: PhasePrior, seed: int, count: int, start: int = 0) -> np.ndarray:
    """Draws ``start .. start+count-1`` of the prior's counter-based stream."""
    u = _random.uniform_block(seed, (_random.PHASES,), start, count)
    u = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    fam, p = prior.family, prior.parameters
    if fam == "point":
        return np.full(count, wrap_angle(p[0]))
    if fam == "uniform":
        return TWO_PI * u[:, 0]
    if fam == "wrapped-normal":
        return wrap(p[0] + p[1] * ndtri(u[:, 0]))
    if fam == "von-mises":
        grid, dens = pdf_on_grid(prior, 1 << 16)
        # inverse CDF by linear interpolation of the cumulative trapezoid
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens + np.roll(dens, -1)))])
        cdf /= cdf[-1]
        nodes = np.concatenate([grid, [TWO_PI]])
        return wrap(np.interp(u[:, 0], cdf, nodes))
    comps = prior.components
    cum = np.cumsum([c[0] for c in comps])
    which = np.minimum(np.searchsorted(cum, u[:, 0], side="right"), len(comps) - 1)
    mu = np.array([c[1] for c in comps])[which]
    sigma = np.array([c[2] for c in comps])[which]
    return wrap(mu + sigma * ndtri(u[:, 1]))


def sample_phase(prior: PhasePrior, seed: int, index: int) -> float:
    return float(sample_phases(prior, seed, 1, start=index)[0])


def fourier_moments(prior: PhasePrior, orders, resolution: int = NUMERIC_RESOLUTION) -> np.ndarray:
    """``E[e^{i p phi}]`` for each ``p`` in ``orders`` by periodic trapezoid quadrature."""
    angles, w = quadrature(prior, resolution)
    orders = np.asarray(orders)
    return np.exp(1j * orders[:, None] * angles[None, :]) @ w


def cumulants_from_moments(moments, zeta: int) -> tuple:
    """Solve the truncated cumulant expansion from moments ``m_1, m_2, ...``.

    ``moments[p-1]`` is ``E[e^{i p phi}]``; ``ceil(zeta/2)`` moments are used.
    """
    n_odd = (zeta + 1) // 2
    n_even = zeta // 2
    needed = max(n_odd, n_even)
    moments = np.asarray(moments, dtype=complex)[:needed]
    if moments.size < needed:
        raise DomainError(f"need {needed} moments for zeta={zeta}")
    if np.any(np.abs(moments) <= 1e-12):
        raise DegenerateFeatureError("a Fourier moment vanishes; cumulants are undefined")
    base = float(np.angle(moments[0]))
    p = np.arange(1, needed + 1)
    # unwrap arg m_p around p * arg m_1
    args = p * base + np.angle(moments * np.exp(-1j * p * base))
    logmod = np.log(np.abs(moments))
    kappas = np.zeros(zeta)
    odd = np.arange(1, zeta + 1, 2)
    if odd.size:
        a = np.array([[(-1) ** ((j - 1) // 2) * q ** j / math.factorial(j) for j in odd] for q in p[:odd.size]], dtype=float)
        kappas[odd - 1] = np.linalg.solve(a, args[:odd.size])
    even = np.arange(2, zeta + 1, 2)
    if even.size:
        a = np.array([[(-1) ** (j // 2) * q ** j / math.factorial(j) for j in even] for q in p[:even.size]], dtype=float)
        kappas[even - 1] = np.linalg.solve(a, logmod[:even.size])
    kappas[0] = wrap_angle(kappas[0])
    return tuple(float(k) for k in kappas)


def cumulant_features(prior: PhasePrior, zeta: int = 3) -> CumulantFeatures:
    """Truncated cumulants of the prior; kappa_1 reduced into ``[0, 2 pi)``."""
    if zeta < 1:
        raise DomainError("zeta must be at least 1")
    fam, p = prior.family, prior.parameters
    if fam == "uniform":
        raise DegenerateFeatureError("the uniform prior has no first moment")
    if fam == "point":
        return CumulantFeatures((wrap_angle(p[0]),) + (0.0,) * (zeta - 1))
    if fam == "wrapped-normal":
        tail = (p[1] ** 2,) + (0.0,) * (zeta - 2) if zeta >= 2 else ()
        return CumulantFeatures((wrap_angle(p[0]),) + tail)
    needed = (zeta + 1) // 2
    return CumulantFeatures(cumulants_from_moments(fourier_moments(prior, np.arange(1, needed + 1)), zeta))


def empirical_cumulants(samples, zeta: int = 3) -> tuple:
    """Sample estimate of the same cumulant expansion."""
    samples = np.asarray(samples, dtype=float)
    needed = (zeta + 1) // 2
    moments = np.exp(1j * np.arange(1, needed + 1)[:, None] * samples[None, :]).mean(axis=1)
    return cumulants_from_moments(moments, zeta)
