"""Symmetric-subspace simulation of the adaptive interferometer.

States are stored inside the interferometer, in the Dicke basis indexed by
``k``, the number of photons in arm 1 (so index 0 is "every photon in arm 0").
Arm 0 carries the controllable phase ``Phi`` and arm 1 the unknown phase
``phi``.  Each photon leaves through a 50/50 splitter (Hadamard convention)
and is counted at port 0 or port 1.  A photon injected into input port 0
enters the arms as ``(|0> + |1>)/sqrt(2)`` (see :func:`from_input_ports`) and
leaves through port 0 with probability ``cos^2((phi - Phi)/2)``.

Measuring one photon of an n-photon symmetric state with outcome ``b`` maps
the amplitudes to the (n-1)-photon state

    c'_k = (e^{i Phi} sqrt((n-k)/n) c_k + (-1)^b e^{i phi} sqrt((k+1)/n) c_{k+1}) / sqrt(2)

which is renormalised by the outcome probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from . import _random
from .errors import DomainError, RenormalizationError, StateExhaustedError
from .torus import PolicyVector, wrap, wrap_angle

NORM_TOL = 1e-12
# branches below this probability cannot be renormalised reliably
MIN_BRANCH_PROB = 1e-15

FAMILIES = ("sine", "product-uniform", "custom")


@dataclass(frozen=True)
class InputFamily:
    """Which permutation-symmetric input state to prepare.

    ``custom`` amplitudes are given in the arm basis for a fixed photon number.
    """

    tag: str = "sine"
    amplitudes: Optional[tuple] = None

    def __post_init__(self):
        if self.tag not in FAMILIES:
            raise DomainError(f"unknown input family {self.tag!r}; expected one of {FAMILIES}")
        if self.tag == "custom":
            if self.amplitudes is None:
                raise DomainError("custom input family needs amplitudes")
            amps = np.asarray(self.amplitudes, dtype=complex)
            norm = np.linalg.norm(amps)
            if not np.isfinite(norm) or norm == 0.0:
                raise DomainError("custom amplitudes cannot be normalised")
            object.__setattr__(self, "amplitudes", tuple(complex(a) for a in amps / norm))

    @classmethod
    def coerce(cls, family) -> "InputFamily":
        if isinstance(family, InputFamily):
            return family
        if family is None:
            return cls()
        return cls(str(family))

    def to_dict(self):
        out = {"tag": self.tag}
        if self.amplitudes is not None:
            out["amplitudes"] = [[a.real, a.imag] for a in self.amplitudes]
        return out

    @classmethod
    def from_dict(cls, data):
        amps = data.get("amplitudes")
        if amps is not None:
            amps = tuple(complex(re, im) for re, im in amps)
        return cls(data.get("tag", "sine"), amps)


@dataclass(frozen=True, eq=False)
class SymmetricState:
    """Normalised amplitudes over the ``n_remaining + 1`` Dicke states."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size < 1:
            raise DomainError("amplitudes must be a non-empty 1-d sequence")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalised (|c|^2 = {norm2!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_remaining(self) -> int:
        return self.amplitudes.size - 1

    @classmethod
    def normalised(cls, amplitudes) -> "SymmetricState":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm) or norm == 0.0:
            raise DomainError("amplitudes cannot be normalised")
        return cls(amps / norm)

    def __eq__(self, other):
        return isinstance(other, SymmetricState) and np.array_equal(self.amplitudes, other.amplitudes)

    __hash__ = None


def family_amplitudes(n: int, family: InputFamily) -> np.ndarray:
    """Unit-norm arm-basis amplitudes of the input state with ``n`` photons."""
    k = np.arange(n + 1)
    if family.tag == "sine":
        amps = np.sin((k + 1) * math.pi / (n + 2))
    elif family.tag == "product-uniform":
        # every photon in (|0> + |1>)/sqrt(2): sqrt(binomial(n, k)) / 2^(n/2)
        amps = np.exp(0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) - n * math.log(2.0)))
    else:
        amps = np.asarray(family.amplitudes, dtype=complex)
        if amps.size != n + 1:
            raise DomainError(f"custom amplitudes describe {amps.size - 1} photons, not {n}")
    amps = np.asarray(amps, dtype=complex)
    return amps / np.linalg.norm(amps)


def prepare_input(n: int, family=None) -> SymmetricState:
    """Prepare an ``n``-photon permutation-symmetric input state.

    The sine family has amplitudes proportional to ``sin((k+1) pi / (n+2))``;
    product-uniform is ``n`` independent photons each injected at input port 0.
    """
    if n < 1:
        raise DomainError(f"need at least one photon, got n={n}")
    return SymmetricState(family_amplitudes(n, InputFamily.coerce(family)))


def input_splitter_matrix(n: int) -> np.ndarray:
    """Symmetric-subspace matrix of the input 50/50 splitter.

    Maps input-port amplitudes (index = photons entering port 1) to arm
    amplitudes (index = photons in arm 1) under ``a0 -> (b0 + b1)/sqrt 2`` and
    ``a1 -> (b0 - b1)/sqrt 2``.
    """
    out = np.zeros((n + 1, n + 1))
    lf = gammaln(np.arange(n + 1) + 1.0)  # log factorials
    j = np.arange(n + 1)
    for k in range(n + 1):
        # (x + y)^(n-k) (x - y)^k; poly[j] multiplies x^(n-j) y^j
        poly = np.array([1.0])
        for _ in range(n - k):
            poly = np.convolve(poly, [1.0, 1.0])
        for _ in range(k):
            poly = np.convolve(poly, [1.0, -1.0])
        out[:, k] = poly * np.exp(0.5 * (lf[j] + lf[n - j] - lf[k] - lf[n - k]) - 0.5 * n * math.log(2.0))
    return out


def from_input_ports(amplitudes) -> SymmetricState:
    """Arm-basis state produced by injecting the given input-port amplitudes."""
    amps = np.asarray(amplitudes, dtype=complex)
    n = amps.size - 1
    if n < 1:
        raise DomainError("need at least one photon")
    return SymmetricState.normalised(input_splitter_matrix(n) @ amps)


def _dicke_weights(n_remaining):
    """``sqrt((n-k)/n)`` for the arm-0 term and ``sqrt((k+1)/n)`` for the arm-1 term."""
    k = np.arange(n_remaining)
    return np.sqrt((n_remaining - k) / n_remaining), np.sqrt((k + 1) / n_remaining)


def _branches(amps, phi, big_phi):
    """Unnormalised post-measurement amplitudes for outcomes 0 and 1."""
    nr = amps.shape[-1] - 1
    w0, w1 = _dicke_weights(nr)
    arm0 = np.exp(1j * big_phi) * amps[..., :-1] * w0
    arm1 = np.exp(1j * phi) * amps[..., 1:] * w1
    s = 1.0 / math.sqrt(2.0)
    return (arm0 + arm1) * s, (arm0 - arm1) * s


def photon_outcome_probs(state: SymmetricState, phi: float, big_phi: float):
    """Probabilities ``(p0, p1)`` that the next photon leaves port 0 or port 1."""
    if state.n_remaining < 1:
        raise StateExhaustedError("no photons left to measure")
    a0, a1 = _branches(state.amplitudes, phi, big_phi)
    p0 = float(np.vdot(a0, a0).real)
    p1 = float(np.vdot(a1, a1).real)
    total = p0 + p1
    return p0 / total, p1 / total


def measure_photon(state: SymmetricState, phi: float, big_phi: float, u: float):
    """Detect one photon; outcome 0 iff ``u < p0``.

    Returns the bit and the renormalised state of the remaining photons.
    """
    if state.n_remaining < 1:
        raise StateExhaustedError("no photons left to measure")
    a0, a1 = _branches(state.amplitudes, phi, big_phi)
    p0 = float(np.vdot(a0, a0).real)
    p1 = float(np.vdot(a1, a1).real)
    bit = 0 if u < p0 / (p0 + p1) else 1
    branch, p = (a0, p0) if bit == 0 else (a1, p1)
    if p < MIN_BRANCH_PROB:
        raise RenormalizationError(f"outcome {bit} has probability {p:.3g}")
    if branch.size == 0:
        return bit, SymmetricState(np.ones(1, dtype=complex))
    return bit, SymmetricState(branch / math.sqrt(float(np.vdot(branch, branch).real)))


def update_phase(previous: float, bit: int, delta: float) -> float:
    """Feedback rule ``Phi_m = Phi_{m-1} - (-1)^b Delta_m``, wrapped."""
    return wrap_angle(previous - delta if bit == 0 else previous + delta)


def canonical_policy(deltas) -> np.ndarray:
    """Equivalent policy with every increment in ``[0, pi)``.

    Shifting the reference phase by ``pi`` swaps the two output ports of the
    next photon and leaves the post-measurement state unchanged up to a global
    phase.  So adding ``pi`` to ``Delta_m`` while negating every later
    increment reproduces each trajectory with all later bits flipped and the
    estimate rotated by ``pi``.  Outcome statistics of the error modulus, and
    hence the variance, are identical.  Applying that move wherever
    ``Delta_m >= pi`` picks one representative out of the ``2^n`` equivalent
    policies.
    """
    x = wrap(np.array(deltas, dtype=float))
    for m in range(x.size):
        if x[m] >= math.pi:
            x[m] -= math.pi
            x[m + 1:] = wrap(-x[m + 1:])
    return x


@dataclass(frozen=True)
class ProtocolResult:
    """Detected bits ``b_1..b_M``, phases ``Phi_0..Phi_M`` and the estimate ``Phi_M``."""

    bits: tuple
    phases: tuple
    estimate: float = field(init=False)

    def __post_init__(self):
        if len(self.phases) != len(self.bits) + 1:
            raise DomainError("need exactly one more phase than bits")
        object.__setattr__(self, "estimate", self.phases[-1])

    @property
    def detected(self) -> int:
        return len(self.bits)

    def csv_row(self) -> list:
        return ["".join(map(str, self.bits)), " ".join(repr(p) for p in self.phases), repr(self.estimate)]


def photon_uniforms(seed: int, n: int) -> np.ndarray:
    """The uniform draw used for photon ``m`` (0-based) of a trajectory."""
    return _random.uniform_block(seed, (_random.PHOTONS,), 0, n, width=1)[:, 0]


def run_protocol(policy: PolicyVector, phi: float, family=None, seed: int = 0, *, stop_after: Optional[int] = None):
    """Run one adaptive trajectory.

    ``stop_after`` truncates after ``M`` detections (early termination); the
    estimate is then ``Phi_M``.
    """
    n = policy.n
    m_stop = n if stop_after is None else int(stop_after)
    if not 1 <= m_stop <= n:
        raise DomainError(f"stop_after must be in [1, {n}], got {stop_after}")
    phi = wrap_angle(phi)
    state = prepare_input(n, family)
    u = photon_uniforms(seed, n)
    phases = [0.0]
    bits = []
    for m in range(m_stop):
        bit, state = measure_photon(state, phi, phases[-1], u[m])
        bits.append(bit)
        phases.append(update_phase(phases[-1], bit, policy.deltas[m]))
    return ProtocolResult(tuple(bits), tuple(phases))


def estimate_from_bits(policy: PolicyVector, bits) -> float:
    big_phi = 0.0
    for bit, delta in zip(bits, policy.deltas):
        big_phi = update_phase(big_phi, bit, delta)
    return big_phi


def simulate_estimates(deltas, phis, uniforms, amplitudes, return_bits: bool = False):
    """Vectorised trajectories for many policies at once.

    Parameters
    ----------
    deltas : array, shape (P, n) or (n,)
    phis : array, shape (T,)
        Unknown phase of every trajectory.
    uniforms : array, shape (T, n)
        Detection draws; trajectory ``t`` uses the same draws for every policy.
    amplitudes : array, shape (n + 1,)

    return_bits : bool
        Also return the detection record.

    Returns
    -------
    estimates : array, shape (P, T) or (T,)
    bits : array of uint8, shape (P, T, n) or (T, n)
        Only when ``return_bits`` is set.
    """
    deltas = np.asarray(deltas, dtype=float)
    single = deltas.ndim == 1
    deltas = np.atleast_2d(deltas)
    n_pol, n = deltas.shape
    phis = np.asarray(phis, dtype=float)
    t = phis.size
    state = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (n_pol, t, n + 1)).copy()
    big_phi = np.zeros((n_pol, t))
    record = np.zeros((n_pol, t, n), dtype=np.uint8) if return_bits else None
    for m in range(n):
        nr = n - m
        w0, w1 = _dicke_weights(nr)
        rel = np.exp(1j * (big_phi - phis))[..., None]
        arm0 = rel * state[..., :-1] * w0
        arm1 = state[..., 1:] * w1
        a0 = arm0 + arm1
        a1 = arm0 - arm1
        n0 = np.einsum("ptk,ptk->pt", a0.real, a0.real) + np.einsum("ptk,ptk->pt", a0.imag, a0.imag)
        n1 = np.einsum("ptk,ptk->pt", a1.real, a1.real) + np.einsum("ptk,ptk->pt", a1.imag, a1.imag)
        bit = uniforms[:, m] >= n0 / (n0 + n1)
        if return_bits:
            record[..., m] = bit
        chosen = np.where(bit[..., None], a1, a0)
        norm = np.sqrt(np.where(bit, n1, n0))
        state = chosen / norm[..., None]
        big_phi = np.mod(np.where(bit, big_phi + deltas[:, m:m + 1], big_phi - deltas[:, m:m + 1]), 2 * math.pi)
    if return_bits:
        return (big_phi[0], record[0]) if single else (big_phi, record)
    return big_phi[0] if single else big_phi


def branch_table(deltas, phis, amplitudes, max_elements: int = 4_000_000):
    """Exact outcome enumeration in the symmetric engine.

    Branch ``i`` has bit ``b_m = (i >> (m-1)) & 1`` for photon ``m``.

    Returns
    -------
    probs : array, shape (2^n, G)
        ``P(bits | phi_g)`` for every grid phase.
    estimates : array, shape (2^n,)
        Final phase ``Phi_n`` of each branch.
    """
    deltas = np.asarray(deltas, dtype=float)
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    n = deltas.size
    n_branch = 2 ** n
    estimates = np.zeros(1)
    for m in range(n):
        estimates = np.concatenate([np.mod(estimates - deltas[m], 2 * math.pi), np.mod(estimates + deltas[m], 2 * math.pi)])
    chunk = max(1, max_elements // (n_branch * (n + 1)))
    probs = np.empty((n_branch, phis.size))
    for lo in range(0, phis.size, chunk):
        grid = phis[lo:lo + chunk]
        probs[:, lo:lo + chunk] = _branch_probs(deltas, grid, amplitudes)
    return probs, estimates


def _branch_probs(deltas, phis, amplitudes):
    n = deltas.size
    state = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (1, phis.size, n + 1)).copy()
    big_phi = np.zeros(1)
    s = 1.0 / math.sqrt(2.0)
    for m in range(n):
        nr = n - m
        w0, w1 = _dicke_weights(nr)
        rel = np.exp(1j * (big_phi[:, None] - phis[None, :]))[..., None]
        arm0 = rel * state[..., :-1] * w0
        arm1 = state[..., 1:] * w1
        state = np.concatenate([(arm0 + arm1) * s, (arm0 - arm1) * s])
        big_phi = np.concatenate([big_phi - deltas[m], big_phi + deltas[m]])
    return np.einsum("bgk,bgk->bg", state.real, state.real) + np.einsum("bgk,bgk->bg", state.imag, state.imag)


def bitstring(index: int, n: int) -> str:
    return "".join(str((index >> m) & 1) for m in range(n))


def outcome_distribution(policy: PolicyVector, phi: float, family=None) -> dict:
    """Exact distribution of the full bit string, keyed ``"b1b2...bn"``."""
    n = policy.n
    amps = family_amplitudes(n, InputFamily.coerce(family))
    probs, _ = branch_table(policy.as_array(), [wrap_angle(phi)], amps)
    return {bitstring(i, n): float(p) for i, p in enumerate(probs[:, 0])}


def error_moment(deltas, phis, weights, amplitudes) -> complex:
    """``sum_g w_g sum_bits P(bits | phi_g) exp(i (Phi_n - phi_g))``."""
    probs, est = branch_table(deltas, phis, amplitudes)
    phase = np.exp(1j * (est[:, None] - np.asarray(phis)[None, :]))
    return complex(np.sum(probs * phase, axis=0) @ np.asarray(weights, dtype=float))


def ml_phase_estimate(zeros, n):
    """Single-photon maximum-likelihood mapping for a fixed reference.

    With ``P(port 0) = cos^2(phi/2)`` and ``zeros`` port-0 counts out of ``n``,
    the estimate on ``[0, pi]`` is ``2 arccos(sqrt(zeros / n))``.
    """
    return 2.0 * np.arccos(np.sqrt(np.asarray(zeros, dtype=float) / n))
