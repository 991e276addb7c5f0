"""Closed-loop control harness: evaluator, controller, plant and switch.

The switch decides whether the plant output goes back round the loop or out
as the final result ``z``.  Two classical switches are provided (a Bernoulli
coin and a distance threshold) plus a quantum switch built from a Hadamard
conjugated controlled-SWAP, i.e. a swap test on the sensor and reference
registers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import _random
from .errors import DomainError, ShapeError, StateError
from .plant import InputFamily, ProtocolResult, measure_photon, photon_uniforms, prepare_input, update_phase
from .torus import PolicyVector, wrap_angle

SUM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
MAX_REGISTER_DIM = 16
# outcome probabilities below this are rounding noise of an impossible branch
ZERO_PROB = 1e-14
MODES = ("bernoulli", "threshold")
DISTANCES = ("total-variation", "bhattacharyya-complement")
FEEDBACK, OUTPUT = "feedback", "output"


@dataclass(frozen=True, eq=False)
class ClassicalSignal:
    """Probability vector over a finite alphabet of dits."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel().copy()
        if w.size < 1:
            raise ShapeError("empty alphabet")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def alphabet_size(self) -> int:
        return self.weights.size

    @classmethod
    def point(cls, symbol: int, alphabet_size: int) -> "ClassicalSignal":
        w = np.zeros(alphabet_size)
        w[int(symbol) % alphabet_size] = 1.0
        return cls(w)

    def __eq__(self, other):
        return isinstance(other, ClassicalSignal) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


def signal_distance(a: ClassicalSignal, b: ClassicalSignal, kind: str = "total-variation") -> float:
    if a.alphabet_size != b.alphabet_size:
        raise ShapeError(f"alphabet sizes {a.alphabet_size} and {b.alphabet_size} differ")
    if kind == "total-variation":
        return 0.5 * float(np.abs(a.weights - b.weights).sum())
    if kind == "bhattacharyya-complement":
        return max(0.0, 1.0 - float(np.sqrt(a.weights * b.weights).sum()))
    raise DomainError(f"unknown distance {kind!r}")


@dataclass(frozen=True)
class SwitchConfig:
    mode: str = "threshold"
    q: float = 0.5
    distance: str = "total-variation"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown switch mode {self.mode!r}")
        if not 0.0 < self.q <= 1.0:
            raise DomainError("q must lie in (0, 1]")
        if self.distance not in DISTANCES:
            raise DomainError(f"unknown distance {self.distance!r}")


@dataclass(frozen=True)
class SwitchOutcome:
    control: int
    fed_back: Optional[ClassicalSignal]
    output_z: Optional[ClassicalSignal]
    swapped: bool = False


def _switch_uniform(seed, index):
    return float(_random.uniform_block(seed, (_random.SWITCH,), index, 1)[0, 0])


def classical_switch(c: int, y: ClassicalSignal, r: ClassicalSignal, cfg: SwitchConfig,
                     seed: int = 0, index: int = 0) -> SwitchOutcome:
    """Route ``y`` to the output or back to the controller.

    An incoming control bit ``c = 1`` (the controller's termination flag)
    forces the output route.  In Bernoulli mode a coin with ``P(G=1) = q``
    decides and ``y`` is routed unchanged; in threshold mode the registers are
    swapped when ``dis(y, r) < q`` and the post-swap sensor register is routed
    to the output.
    """
    if y.alphabet_size != r.alphabet_size:
        raise ShapeError(f"alphabet sizes {y.alphabet_size} and {r.alphabet_size} differ")
    swapped = False
    if cfg.mode == "bernoulli":
        g = 1 if _switch_uniform(seed, index) < cfg.q else 0
        sensor = y
    else:
        swapped = signal_distance(y, r, cfg.distance) < cfg.q
        g = int(swapped)
        sensor = r if swapped else y
    control = int(bool(c) or g)
    if control:
        return SwitchOutcome(1, None, sensor, swapped)
    return SwitchOutcome(0, sensor, None, swapped)


def _check_density(rho, what="density operator"):
    if not np.all(np.isfinite(rho)):
        raise StateError(f"{what} has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise StateError(f"{what} is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL or abs(np.trace(rho).imag) > TRACE_TOL:
        raise StateError(f"{what} does not have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -PSD_TOL:
        raise StateError(f"{what} is not positive semidefinite")


def is_density_operator(rho, tol: float = PSD_TOL) -> bool:
    rho = np.asarray(rho)
    return (np.max(np.abs(rho - rho.conj().T)) <= tol and abs(np.trace(rho) - 1.0) <= tol
            and np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() >= -tol)


@dataclass(frozen=True, eq=False)
class JointRegisterState:
    """Density operator on control (qubit) x sensor (d) x external (d)."""

    matrix: np.ndarray
    register_dim: int

    def __post_init__(self):
        d = int(self.register_dim)
        if not 1 <= d <= MAX_REGISTER_DIM:
            raise DomainError(f"register dimension must be in [1, {MAX_REGISTER_DIM}]")
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (2 * d * d, 2 * d * d):
            raise ShapeError(f"expected a {2 * d * d}x{2 * d * d} matrix, got {rho.shape}")
        _check_density(rho)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def from_pure(cls, sensor, external, control: int = 0) -> "JointRegisterState":
        y = _unit(sensor)
        r = _unit(external)
        if y.size != r.size:
            raise ShapeError("sensor and external registers differ in dimension")
        c = np.zeros(2, dtype=complex)
        c[control] = 1.0
        psi = np.kron(c, np.kron(y, r))
        return cls(np.outer(psi, psi.conj()), y.size)

    @classmethod
    def from_densities(cls, sensor, external, control: int = 0) -> "JointRegisterState":
        c = np.zeros((2, 2), dtype=complex)
        c[control, control] = 1.0
        sensor = np.asarray(sensor, dtype=complex)
        return cls(np.kron(c, np.kron(sensor, np.asarray(external, dtype=complex))), sensor.shape[0])


def _unit(v):
    v = np.asarray(v, dtype=complex).ravel()
    n = np.linalg.norm(v)
    if n == 0:
        raise StateError("zero vector is not a state")
    return v / n


def swap_test_unitary(d: int) -> np.ndarray:
    """``(H x 1) CSWAP (H x 1)`` on qubit x d x d."""
    dim = d * d
    swap = np.zeros((dim, dim))
    for i in range(d):
        for j in range(d):
            swap[j * d + i, i * d + j] = 1.0
    cswap = np.zeros((2 * dim, 2 * dim))
    cswap[:dim, :dim] = np.eye(dim)
    cswap[dim:, dim:] = swap
    h = np.kron(np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0), np.eye(dim))
    return h @ cswap @ h


def swap_test_channel(state: JointRegisterState):
    """Outcome probabilities and normalised sensor states for both control outcomes."""
    d = state.register_dim
    dim = d * d
    u = swap_test_unitary(d)
    rho = u @ state.matrix @ u.conj().T
    probs, posts = [], []
    for b in (0, 1):
        blk = rho[b * dim:(b + 1) * dim, b * dim:(b + 1) * dim]
        p = float(np.trace(blk).real)
        if p < ZERO_PROB:
            p = 0.0
        probs.append(p)
        if p > 0:
            # trace out the external register
            sensor = np.einsum("ikjk->ij", (blk / p).reshape(d, d, d, d))
            posts.append(0.5 * (sensor + sensor.conj().T))
        else:
            posts.append(None)
    return probs, posts


def quantum_switch(state: JointRegisterState, seed: int = 0, index: int = 0):
    """Swap test followed by a control measurement.

    Outcome 0 ("registers look equal") routes the sensor state to the output;
    outcome 1 feeds it back.  Returns ``(bit, sensor_density, route)``.
    """
    probs, posts = swap_test_channel(state)
    u = _switch_uniform(seed, index)
    bit = 0 if u < probs[0] / (probs[0] + probs[1]) else 1
    post = posts[bit]
    _check_density(post, "post-measurement sensor state")
    return bit, post, OUTPUT if bit == 0 else FEEDBACK


def quantum_switch_trials(state: JointRegisterState, seed: int, count: int):
    """``count`` independent runs of :func:`quantum_switch` (trial ``i`` uses index ``i``).

    Returns the array of measured bits and the two conditional sensor states.
    """
    probs, posts = swap_test_channel(state)
    u = _random.uniform_block(seed, (_random.SWITCH,), 0, count)[:, 0]
    bits = (u >= probs[0] / (probs[0] + probs[1])).astype(int)
    return bits, posts


@dataclass
class ResourceLedger:
    plant_calls: int = 0
    photons: int = 0


@dataclass
class LoopBinding:
    """The four maps of one closed loop.

    ``controller(d)`` returns ``(u, terminate)``; ``terminate`` is the extra
    bit the controller sends to the switch.  ``to_signal`` turns a plant
    output or the reference into a :class:`ClassicalSignal` for the switch.
    ``start(seed)`` resets any internal state before a run.
    """

    plant: Callable[[Any], Any]
    controller: Callable[[Any], tuple]
    evaluator: Callable[[Any], Any]
    reference: Any
    initial_output: Any
    to_signal: Optional[Callable[[Any], ClassicalSignal]] = None
    start: Callable[[int], None] = lambda seed: None
    ledger: ResourceLedger = field(default_factory=ResourceLedger)


@dataclass
class LoopResult:
    z: Any
    trace: list
    terminated: bool
    timed_out: bool
    final_u: Any = None
    ledger: ResourceLedger = field(default_factory=ResourceLedger)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "u", "y", "d", "decision"])
            for row in self.trace:
                w.writerow([row["iteration"], _fmt(row["u"]), _fmt(row["y"]), _fmt(row["d"]), row["decision"]])


def _fmt(x):
    if isinstance(x, ClassicalSignal):
        return " ".join(repr(float(v)) for v in x.weights)
    if isinstance(x, (tuple, list, np.ndarray)):
        return " ".join(_fmt(v) for v in x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def run_control_loop(binding: LoopBinding, switch: Optional[SwitchConfig], max_iterations: int,
                     seed: int = 0) -> LoopResult:
    """Iterate evaluator, controller, plant and switch.

    One iteration is one plant call.  The controller sees the evaluated plant
    output and may raise its termination bit instead of producing a new input,
    in which case the last output becomes ``z``.  With ``switch=None`` the
    output is always fed back.  Running out of iterations returns the trace so
    far with ``timed_out`` set and the last output as ``z``.
    """
    if max_iterations < 1:
        raise DomainError("max_iterations must be at least 1")
    binding.start(seed)
    y = binding.initial_output
    trace = []
    for it in range(1, max_iterations + 2):
        d = binding.evaluator(y)
        u, terminate = binding.controller(d)
        if terminate:
            return LoopResult(y, trace, True, False, u, binding.ledger)
        if it > max_iterations:
            break
        y = binding.plant(u)
        binding.ledger.plant_calls += 1
        decision = FEEDBACK
        z = None
        if switch is not None:
            to_sig = binding.to_signal or (lambda v: v)
            out = classical_switch(0, to_sig(y), to_sig(binding.reference), switch, seed, it - 1)
            if out.control:
                decision = OUTPUT
                z = binding.reference if out.swapped else y
        trace.append({"iteration": it, "u": u, "y": y, "d": d, "decision": decision})
        if decision == OUTPUT:
            return LoopResult(z, trace, False, False, u, binding.ledger)
    return LoopResult(y, trace, False, True, None, binding.ledger)


def integrator_binding(reference: int, alphabet_size: int = 16) -> LoopBinding:
    """Identity plant with an integrating controller on the integers mod ``alphabet_size``.

    The evaluator reports ``r - y`` and the controller adds it to its last
    input, so the loop settles on ``y = r``.
    """
    state = {"u": 0}

    def controller(d):
        state["u"] = (state["u"] + d) % alphabet_size
        return state["u"], False

    def start(seed):
        state["u"] = 0

    return LoopBinding(
        plant=lambda u: u,
        controller=controller,
        evaluator=lambda y: (reference - y) % alphabet_size,
        reference=reference % alphabet_size,
        initial_output=0,
        to_signal=lambda v: ClassicalSignal.point(v, alphabet_size),
        start=start,
    )


def bind_aqp(policy: PolicyVector, phi: float, family=None) -> LoopBinding:
    """The adaptive phase-estimation protocol as a closed loop.

    The plant detects one photon at the reference phase ``u`` and returns
    ``y = (bit, u)``.  The controller applies the feedback rule and raises
    its termination bit once all photons are spent; its last ``u`` is the
    estimate.
    """
    n = policy.n
    phi = wrap_angle(phi)
    family = InputFamily.coerce(family)
    st = {}

    def start(seed):
        st.update(state=prepare_input(n, family), uniforms=photon_uniforms(seed, n), m=0, calls=0)

    def plant(u):
        m = st["m"]
        bit, st["state"] = measure_photon(st["state"], phi, u, st["uniforms"][m])
        st["m"] = m + 1
        ledger.photons += 1
        return (bit, u)

    def controller(d):
        bit, big_phi = d
        k = st["calls"]
        st["calls"] = k + 1
        if k == 0:
            return 0.0, False
        new_phi = update_phase(big_phi, bit, policy.deltas[k - 1])
        return new_phi, k == n

    ledger = ResourceLedger()
    return LoopBinding(plant, controller, lambda y: y, None, (0, 0.0), None, start, ledger)


def aqp_readout(result: LoopResult) -> ProtocolResult:
    """Collect the bits and reference phases fanned out along the loop trace."""
    bits = tuple(int(row["y"][0]) for row in result.trace)
    phases = tuple(float(row["u"]) for row in result.trace)
    if result.terminated:
        phases = phases + (float(result.final_u),)
    return ProtocolResult(bits, phases)
