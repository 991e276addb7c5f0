"""Angles on the circle, policy vectors on the N-torus and policy orbits.

Angles are plain floats kept in the canonical range ``[0, 2*pi)``.  A
:class:`PolicyVector` holds the feedback increments for one photon number and a
:class:`PolicyOrbit` stacks the policies for ``N = 4 .. n_max``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError

TWO_PI = 2.0 * math.pi
ORBIT_START = 4


def wrap_angle(x: float) -> float:
    """Reduce ``x`` modulo 2*pi into ``[0, 2*pi)``.

    Raises
    ------
    DomainError
        If ``x`` is NaN or infinite.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"cannot wrap non-finite angle {x!r}")
    r = math.fmod(x, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # -tiny + 2*pi rounds to 2*pi
    if r >= TWO_PI:
        r = 0.0
    return r


def wrap(x):
    """Vectorised :func:`wrap_angle` for numpy arrays."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot wrap non-finite angles")
    r = np.mod(x, TWO_PI)
    return np.where(r >= TWO_PI, 0.0, r)


def signed_difference(a, b):
    """Shortest signed arc from ``b`` to ``a`` in ``[-pi, pi)``."""
    return np.mod(np.asarray(a, dtype=float) - b + math.pi, TWO_PI) - math.pi


def torus_distance(a: float, b: float) -> float:
    """Geodesic distance between two angles, at most pi."""
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def circle_distances(a, b):
    d = np.abs(np.asarray(a, dtype=float) - b) % TWO_PI
    return np.minimum(d, TWO_PI - d)


def circular_mean(angles, axis=0, weights=None):
    """Toroidal mean: two-argument arctangent of summed sines and cosines."""
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        s = np.sin(angles).sum(axis=axis)
        c = np.cos(angles).sum(axis=axis)
    else:
        w = np.asarray(weights, dtype=float)
        shape = [1] * angles.ndim
        shape[axis] = -1
        w = w.reshape(shape)
        s = (w * np.sin(angles)).sum(axis=axis)
        c = (w * np.cos(angles)).sum(axis=axis)
    return wrap(np.arctan2(s, c))


@dataclass(frozen=True)
class PolicyVector:
    """Feedback increments ``(Delta_1, ..., Delta_n)``, one per photon."""

    deltas: tuple

    def __post_init__(self):
        if len(self.deltas) < 1:
            raise ShapeError("a policy vector needs at least one component")
        object.__setattr__(self, "deltas", tuple(wrap_angle(d) for d in self.deltas))

    @property
    def n(self) -> int:
        return len(self.deltas)

    @classmethod
    def zeros(cls, n: int) -> "PolicyVector":
        return cls((0.0,) * n)

    def as_array(self) -> np.ndarray:
        return np.array(self.deltas, dtype=float)

    def extended(self, value: float = 0.0) -> "PolicyVector":
        return PolicyVector(self.deltas + (value,))

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class PolicyOrbit:
    """Policies for ``N = 4 .. n_max`` in order."""

    policies: tuple

    def __post_init__(self):
        policies = tuple(p if isinstance(p, PolicyVector) else PolicyVector(tuple(p)) for p in self.policies)
        if not policies:
            raise ShapeError("an orbit holds at least the N = 4 policy")
        for j, p in enumerate(policies):
            if p.n != ORBIT_START + j:
                raise ShapeError(f"orbit entry {j} has length {p.n}, expected {ORBIT_START + j}")
        object.__setattr__(self, "policies", policies)

    @property
    def n_max(self) -> int:
        return ORBIT_START + len(self.policies) - 1

    def __getitem__(self, n: int) -> PolicyVector:
        """Policy for photon number ``n``."""
        if not ORBIT_START <= n <= self.n_max:
            raise KeyError(n)
        return self.policies[n - ORBIT_START]

    def flat(self) -> np.ndarray:
        """All angles concatenated, N = 4 first."""
        return np.concatenate([p.as_array() for p in self.policies])

    @classmethod
    def from_flat(cls, n_max: int, values: Sequence[float]) -> "PolicyOrbit":
        values = np.asarray(values, dtype=float)
        if values.size != orbit_size(n_max):
            raise ShapeError(f"expected {orbit_size(n_max)} angles for n_max={n_max}, got {values.size}")
        out, pos = [], 0
        for n in range(ORBIT_START, n_max + 1):
            out.append(PolicyVector(tuple(values[pos:pos + n])))
            pos += n
        return cls(tuple(out))

    def to_dict(self) -> dict:
        return {"n_max": self.n_max, "policies": [list(p.deltas) for p in self.policies]}

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyOrbit":
        orbit = cls(tuple(PolicyVector(tuple(p)) for p in data["policies"]))
        if orbit.n_max != int(data["n_max"]):
            raise ShapeError(f"n_max field {data['n_max']} disagrees with {len(orbit.policies)} policies")
        return orbit

    def to_json(self) -> str:
        # repr-based float output round-trips every double exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PolicyOrbit":
        return cls.from_dict(json.loads(text))


def orbit_size(n_max: int) -> int:
    """Number of angles in an orbit with the given ``n_max``."""
    return sum(range(ORBIT_START, n_max + 1))


def orbit_loss(a: PolicyOrbit, b: PolicyOrbit) -> float:
    """Root of the summed squared per-coordinate geodesic distances."""
    if a.n_max != b.n_max:
        raise ShapeError(f"orbits have n_max {a.n_max} and {b.n_max}")
    d = circle_distances(a.flat(), b.flat())
    return float(np.sqrt(np.sum(d * d)))


def flat_orbit_losses(pred, truth):
    """Row-wise :func:`orbit_loss` on flattened orbit arrays of equal length."""
    d = circle_distances(pred, truth)
    return np.sqrt(np.sum(d * d, axis=-1))
