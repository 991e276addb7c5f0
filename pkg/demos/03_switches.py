"""Classical and quantum control switches.

Run: python3 demos/03_switches.py
"""

import numpy as np

from aqplfc.control import (ClassicalSignal, JointRegisterState, SwitchConfig, classical_switch,
                            quantum_switch_trials)

y, r = ClassicalSignal([0.7, 0.3]), ClassicalSignal([0.6, 0.4])
for q in (0.05, 0.2):
    out = classical_switch(0, y, r, SwitchConfig("threshold", q))
    print(f"threshold q = {q}: control bit {out.control}, swapped {out.swapped}")

hits = sum(classical_switch(0, y, r, SwitchConfig("bernoulli", 0.3), seed=1, index=i).control
           for i in range(10_000))
print(f"bernoulli q = 0.3: routed to output in {hits / 10_000:.3f} of trials")

for overlap_angle in (0.0, np.pi / 6, np.pi / 3, np.pi / 2):
    a = [1.0, 0.0]
    b = [np.cos(overlap_angle), np.sin(overlap_angle)]
    bits, _ = quantum_switch_trials(JointRegisterState.from_pure(a, b), seed=2, count=20_000)
    expect = 0.5 * (1 + np.cos(overlap_angle) ** 2)
    print(f"swap test, |<a|b>|^2 = {np.cos(overlap_angle) ** 2:.3f}: "
          f"P(equal) = {np.mean(bits == 0):.3f} (expected {expect:.3f})")
