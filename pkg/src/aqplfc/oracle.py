"""First-quantised brute-force reference for the adaptive protocol.

Each photon is a two-level system (arm 0 / arm 1) and the full ``2^n`` state
vector is kept.  Photons are measured one at a time, with the feedback phase
recomputed along every outcome prefix.  Nothing here reuses the Dicke-basis
recursion of :mod:`aqplfc.plant`; the two are compared in the tests.
"""

import itertools
import math

import numpy as np

from .errors import ResourceError
from .plant import InputFamily, family_amplitudes, update_phase
from .torus import PolicyVector, wrap_angle

MAX_PHOTONS = 16


def symmetric_to_full(amplitudes) -> np.ndarray:
    """Embed Dicke amplitudes into the ``2^n`` product basis.

    Qubit value 0 means "photon in arm 0"; ``|D_k>`` is the uniform
    superposition of all strings with ``k`` ones.
    """
    amplitudes = np.asarray(amplitudes, dtype=complex)
    n = amplitudes.size - 1
    psi = np.zeros((2,) * n, dtype=complex)
    for bits in itertools.product((0, 1), repeat=n):
        k = sum(bits)
        psi[bits] = amplitudes[k] / math.sqrt(math.comb(n, k))
    return psi


def _photon_unitary(phi, big_phi):
    # phase on each arm, then the output 50/50 splitter
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    return h @ np.diag([np.exp(1j * big_phi), np.exp(1j * phi)])


def bruteforce_distribution(policy: PolicyVector, phi: float, family=None) -> dict:
    """Exact outcome-string distribution ``{"b1...bn": probability}``."""
    n = policy.n
    if n > MAX_PHOTONS:
        raise ResourceError(f"brute force is capped at {MAX_PHOTONS} photons, got {n}")
    phi = wrap_angle(phi)
    psi = symmetric_to_full(family_amplitudes(n, InputFamily.coerce(family)))
    out = {}

    def descend(state, prefix, big_phi):
        m = len(prefix)
        # first remaining axis is the next photon
        rotated = np.tensordot(_photon_unitary(phi, big_phi), state, axes=([1], [0]))
        for bit in (0, 1):
            branch = rotated[bit]
            if m + 1 == n:
                out["".join(map(str, prefix + [bit]))] = float(np.vdot(branch, branch).real)
            else:
                descend(branch, prefix + [bit], update_phase(big_phi, bit, policy.deltas[m]))

    descend(psi, [], 0.0)
    return out


def conditional_distribution(state_amplitudes, phi, big_phi):
    """Distribution of the next photon's outcome and the normalised
    post-measurement state in the full basis, from the brute-force picture."""
    psi = symmetric_to_full(state_amplitudes)
    rotated = np.tensordot(_photon_unitary(phi, big_phi), psi, axes=([1], [0]))
    probs = [float(np.vdot(rotated[b], rotated[b]).real) for b in (0, 1)]
    states = [rotated[b] / math.sqrt(probs[b]) if probs[b] > 0 else rotated[b] for b in (0, 1)]
    return probs, states
