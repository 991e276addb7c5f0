"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *key)``.  A Philox
counter step yields four doubles, so ``uniform_block(seed, key, start, count)``
returns the same numbers for index ``i`` whether it is drawn alone or as part
of a batch.  This is what makes trajectories order independent.
"""

import numpy as np

DOUBLES_PER_INDEX = 4


def generator(seed, *key):
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seeds and stream keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def uniform_block(seed, key, start, count, width=DOUBLES_PER_INDEX):
    """Uniforms in [0, 1) of shape ``(count, width)`` for indices ``start..start+count-1``.

    ``width`` may not exceed 4 per counter step unless every caller of the same
    stream agrees on it; the row for index ``i`` depends only on ``(seed, key, i, width)``.
    """
    steps = -(-width // DOUBLES_PER_INDEX)
    bitgen = np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)]))
    if start:
        bitgen.advance(int(start) * steps)
    raw = np.random.Generator(bitgen).random(count * steps * DOUBLES_PER_INDEX)
    return raw.reshape(count, steps * DOUBLES_PER_INDEX)[:, :width]


# stream tags, kept distinct so that different consumers never share numbers
PHOTONS = 1
PHASES = 2
INIT = 3
MUTATION = 4
SWITCH = 5
SPLIT = 6
REPORT = 7
TRAJECTORIES = 8


def derive_seed(seed, *key) -> int:
    """A fresh 32-bit seed for a sub-task, fixed by ``(seed, *key)``."""
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])
