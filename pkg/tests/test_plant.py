import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqplfc import _random
from aqplfc.errors import DomainError, StateExhaustedError
from aqplfc.oracle import bruteforce_distribution, conditional_distribution
from aqplfc.plant import (InputFamily, SymmetricState, branch_table, family_amplitudes, from_input_ports,
                          input_splitter_matrix, measure_photon, outcome_distribution, photon_outcome_probs,
                          prepare_input, run_protocol, simulate_estimates, update_phase, canonical_policy)
from aqplfc.torus import PolicyVector


def test_sine_state_amplitudes():
    s = prepare_input(4, "sine")
    expect = np.sin((np.arange(5) + 1) * math.pi / 6)
    assert np.allclose(s.amplitudes, expect / np.linalg.norm(expect))
    assert s.n_remaining == 4


def test_prepare_rejects_zero_photons():
    with pytest.raises(DomainError):
        prepare_input(0)


def test_unnormalised_state_rejected():
    with pytest.raises(DomainError):
        SymmetricState([1.0, 1.0])


def test_single_port_photon_click_probability():
    # one photon in input port 0: port-0 click probability cos^2((phi - Phi)/2)
    s = from_input_ports([1, 0])
    p0, p1 = photon_outcome_probs(s, 0.5, 0.0)
    assert p0 == pytest.approx(math.cos(0.25) ** 2, abs=1e-14)
    assert p0 + p1 == pytest.approx(1.0)


def test_arm_superposition_without_input_splitter_is_insensitive_to_which_arm():
    # |arm 0> alone hits the output splitter and exits either port equally
    p0, _ = photon_outcome_probs(SymmetricState([1, 0]), 0.5, 0.0)
    assert p0 == pytest.approx(0.5)


def test_input_splitter_is_orthogonal():
    for n in (1, 3, 6):
        u = input_splitter_matrix(n)
        assert np.allclose(u.T @ u, np.eye(n + 1))


def test_product_family_is_all_photons_in_port_zero():
    for n in (2, 5):
        assert np.allclose(from_input_ports(np.eye(n + 1)[0]).amplitudes,
                           family_amplitudes(n, InputFamily("product-uniform")))


def test_measurement_renormalises_and_matches_oracle(rng):
    amps = rng.normal(size=5) + 1j * rng.normal(size=5)
    state = SymmetricState.normalised(amps)
    probs, _ = conditional_distribution(state.amplitudes, 0.7, 2.1)
    p0, p1 = photon_outcome_probs(state, 0.7, 2.1)
    assert (p0, p1) == pytest.approx(probs, abs=1e-13)
    bit, post = measure_photon(state, 0.7, 2.1, 0.999999)
    assert bit == 1
    assert post.n_remaining == 3
    assert np.vdot(post.amplitudes, post.amplitudes).real == pytest.approx(1.0, abs=1e-12)


def test_exhausted_state():
    with pytest.raises(StateExhaustedError):
        measure_photon(SymmetricState([1.0]), 0.0, 0.0, 0.5)


def test_zero_probability_branch_is_never_taken():
    # single port-0 photon at phi = Phi always clicks port 0, whatever the draw
    s = from_input_ports([1, 0])
    for u in (0.0, 0.5, np.nextafter(1.0, 0.0)):
        bit, post = measure_photon(s, 0.0, 0.0, u)
        assert bit == 0 and post.n_remaining == 0


def test_feedback_rule():
    assert update_phase(1.0, 0, 0.25) == pytest.approx(0.75)
    assert update_phase(1.0, 1, 0.25) == pytest.approx(1.25)


def test_n1_point_phase_is_deterministic():
    # phi equal to the reference phase: outcome 0 surely, estimate -Delta_1
    r = run_protocol(PolicyVector((0.0,)), 0.0, InputFamily("product-uniform"), seed=3)
    assert r.bits == (0,)
    assert r.estimate == 0.0


def test_run_protocol_deterministic_and_early_stop():
    p = PolicyVector((0.3, 1.1, 2.0, 0.4))
    a = run_protocol(p, 1.3, "sine", seed=9)
    assert a == run_protocol(p, 1.3, "sine", seed=9)
    b = run_protocol(p, 1.3, "sine", seed=9, stop_after=2)
    assert b.bits == a.bits[:2] and b.phases == a.phases[:3]
    with pytest.raises(DomainError):
        run_protocol(p, 1.3, "sine", seed=9, stop_after=5)


def test_vectorised_engine_matches_single_trajectories(rng):
    p = PolicyVector(tuple(rng.random(6) * 6))
    phis = rng.random(20) * 6
    u = np.array([_random.uniform_block(s, (_random.PHOTONS,), 0, 6, width=1)[:, 0] for s in range(20)])
    est = simulate_estimates(p.as_array(), phis, u, family_amplitudes(6, InputFamily()))
    direct = [run_protocol(p, phi, "sine", seed=s).estimate for s, phi in enumerate(phis)]
    assert np.allclose(est, direct, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.sampled_from(["sine", "product-uniform", "custom"]))
def test_engine_equals_bruteforce(n, seed, tag):
    rng = np.random.default_rng(seed)
    fam = InputFamily(tag, tuple(rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)) if tag == "custom" else None)
    p = PolicyVector(tuple(rng.random(n) * 2 * math.pi))
    phi = rng.random() * 2 * math.pi
    a = outcome_distribution(p, phi, fam)
    b = bruteforce_distribution(p, phi, fam)
    assert set(a) == set(b)
    assert 0.5 * sum(abs(a[k] - b[k]) for k in a) < 1e-10
    assert sum(a.values()) == pytest.approx(1.0, abs=1e-12)


def test_branch_table_probabilities_normalised(rng):
    probs, est = branch_table(rng.random(5) * 6, rng.random(7) * 6, family_amplitudes(5, InputFamily()))
    assert probs.shape == (32, 7) and est.shape == (32,)
    assert np.allclose(probs.sum(axis=0), 1.0)


def _flip_move(deltas, m):
    x = np.array(deltas, dtype=float)
    x[m] += math.pi
    x[m + 1:] = -x[m + 1:]
    return np.mod(x, 2 * math.pi)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi, exclude_max=True), min_size=1, max_size=6),
       st.floats(0, 2 * math.pi), st.integers(0, 5))
def test_flip_move_maps_records_onto_bit_complements(deltas, phi, m):
    m = m % len(deltas)
    n = len(deltas)
    a = outcome_distribution(PolicyVector(tuple(deltas)), phi)
    b = outcome_distribution(PolicyVector(tuple(_flip_move(deltas, m))), phi)
    for bits, p in a.items():
        flipped = bits[:m + 1] + "".join("1" if c == "0" else "0" for c in bits[m + 1:])
        assert b[flipped] == pytest.approx(p, abs=1e-12)
    assert len(b) == 2 ** n


def test_canonical_policy_range_and_idempotence(rng):
    for _ in range(50):
        x = canonical_policy(rng.uniform(0, 2 * math.pi, 7))
        assert np.all((0 <= x) & (x < math.pi))
        assert np.array_equal(canonical_policy(x), x)


def test_canonical_policy_collapses_equivalent_policies(rng):
    x = rng.uniform(0, 2 * math.pi, 6)
    y = _flip_move(_flip_move(x, 1), 4)
    assert np.allclose(canonical_policy(x), canonical_policy(y), atol=1e-12)
