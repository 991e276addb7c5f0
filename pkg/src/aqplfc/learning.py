"""Supervised learning of policy orbits from prior features.

A datum pairs the cumulant features of a phase prior with a feasible orbit
found for it.  Two regressors map features to orbits: k-nearest neighbours
with a toroidal average of the neighbour labels, and kernel ridge regression
on the (sin, cos) embedding of every angle, decoded with ``arctan2``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import _random
from .distributions import CumulantFeatures, PhasePrior, cumulant_features
from .errors import (ConfigurationError, DomainError, EmptyDatasetError, OrbitIncompleteError,
                     ShapeError, StateError)
from .metrics import check_feasibility, fit_scaling
from .optimizer import DEConfig, build_orbit, orbit_variance
from .plant import InputFamily
from .torus import ORBIT_START, PolicyOrbit, circular_mean, flat_orbit_losses, wrap

KINDS = ("knn", "kernel-ridge")


@dataclass(frozen=True)
class Datum:
    n_max: int
    kappas: tuple
    orbit: PolicyOrbit
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.orbit.n_max != self.n_max:
            raise ShapeError(f"label n_max {self.orbit.n_max} differs from feature n_max {self.n_max}")
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))

    def to_dict(self):
        return {"n_max": self.n_max, "kappas": list(self.kappas), "orbit": self.orbit.to_dict(),
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["n_max"]), tuple(data["kappas"]), PolicyOrbit.from_dict(data["orbit"]),
                   data.get("provenance", {}))


@dataclass(frozen=True)
class Dataset:
    data: tuple
    excluded: int = 0

    def __post_init__(self):
        data = tuple(self.data)
        object.__setattr__(self, "data", data)
        if data:
            if len({d.n_max for d in data}) != 1:
                raise ShapeError("all data must share n_max")
            if len({len(d.kappas) for d in data}) != 1:
                raise ShapeError("all data must share zeta")

    def __len__(self):
        return len(self.data)

    def __getitem__(self, i):
        return self.data[i]

    @property
    def n_max(self) -> int:
        return self.data[0].n_max

    @property
    def zeta(self) -> int:
        return len(self.data[0].kappas)

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.data[i] for i in indices))

    def labels(self) -> np.ndarray:
        return np.array([d.orbit.flat() for d in self.data])

    def to_jsonl(self) -> str:
        return "".join(json.dumps(d.to_dict(), sort_keys=True) + "\n" for d in self.data)

    @classmethod
    def from_jsonl(cls, text: str) -> "Dataset":
        return cls(tuple(Datum.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            return cls.from_jsonl(fh.read())


@dataclass(frozen=True)
class SplitSpec:
    model_fraction: float = 0.8
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.model_fraction < 1.0:
            raise DomainError("model_fraction must lie strictly between 0 and 1")
        if self.folds < 2:
            raise DomainError("need at least two folds")


def generate_dataset(priors: Sequence[PhasePrior], n_max: int, zeta: int = 3, cfg: DEConfig | None = None,
                     family=None, progress: Callable | None = None) -> Dataset:
    """Build one labelled datum per prior, keeping only feasible orbits.

    Every prior is optimised with the same configuration and seed, so equal
    priors get equal labels.  Infeasible or incomplete orbits are dropped and
    counted in ``Dataset.excluded``.
    """
    cfg = cfg or DEConfig()
    family = InputFamily.coerce(family)
    feats = [cumulant_features(p, zeta) for p in priors]
    data, excluded = [], 0
    for i, (prior, feat) in enumerate(zip(priors, feats)):
        try:
            orbit, fit = build_orbit(n_max, prior, family, cfg)
        except OrbitIncompleteError:
            excluded += 1
            continue
        ok = check_feasibility(fit)
        if progress is not None:
            progress(i, prior, fit, ok)
        if not ok:
            excluded += 1
            continue
        prov = {"prior": prior.to_dict(), "family": family.to_dict(), "optimizer": cfg.to_dict(),
                "fit": {"exponent": fit.exponent, "r_squared": fit.r_squared}}
        data.append(Datum(n_max, feat.kappas, orbit, prov))
    if not data:
        raise EmptyDatasetError(f"all {len(priors)} orbits were infeasible")
    return Dataset(tuple(data), excluded)


def split_dataset(d: Dataset, spec: SplitSpec):
    """Random partition into ``(model, test)`` with ``round(fraction * N)`` model items."""
    n = len(d)
    if n < 2:
        raise DomainError("need at least two data to split")
    m = int(round(spec.model_fraction * n))
    if not 1 <= m <= n - 1:
        raise DomainError(f"fraction {spec.model_fraction} leaves an empty side for N={n}")
    perm = _random.generator(spec.seed, _random.SPLIT).permutation(n)
    return d.subset(sorted(perm[:m])), d.subset(sorted(perm[m:]))


def _raw_features(kappas) -> np.ndarray:
    kappas = np.atleast_2d(np.asarray(kappas, dtype=float))
    return np.column_stack([np.sin(kappas[:, 0]), np.cos(kappas[:, 0]), kappas[:, 1:]])


class OrbitRegressor:
    """Features-to-orbit regressor; ``hyper`` is ``(k,)`` for knn and
    ``(lengthscale, regularisation)`` for kernel ridge."""

    def __init__(self, kind: str = "knn", hyper: Sequence[float] = (1,)):
        if kind not in KINDS:
            raise DomainError(f"unknown regressor kind {kind!r}")
        self.kind = kind
        self.hyper = tuple(hyper)
        self._fitted = False

    @property
    def fitted(self) -> bool:
        return self._fitted

    def fit(self, model: Dataset) -> "OrbitRegressor":
        if len(model) == 0:
            raise EmptyDatasetError("cannot train on an empty dataset")
        raw = _raw_features([d.kappas for d in model.data])
        self.mean_ = raw.mean(axis=0)
        std = raw.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        self.x_ = (raw - self.mean_) / self.scale_
        self.y_ = model.labels()
        self.n_max_ = model.n_max
        if self.kind == "kernel-ridge":
            self._fit_ridge()
        self._fitted = True
        return self

    def _fit_ridge(self):
        length, lam = float(self.hyper[0]), float(self.hyper[1])
        if length <= 0 or lam < 0:
            raise DomainError("kernel ridge needs a positive lengthscale and non-negative regularisation")
        emb = np.hstack([np.sin(self.y_), np.cos(self.y_)])
        self.emb_mean_ = emb.mean(axis=0)
        k = self._kernel(self.x_, self.x_)
        a = k + lam * np.eye(len(k))
        jitter = 0.0
        while True:
            try:
                fac = cho_factor(a + jitter * np.eye(len(k)))
                break
            except LinAlgError:
                jitter = 1e-10 if jitter == 0 else jitter * 10
                warnings.warn(f"kernel system is singular; adding jitter {jitter:g}", RuntimeWarning)
                if jitter > 1.0:
                    raise
        self.alpha_ = cho_solve(fac, emb - self.emb_mean_)

    def _kernel(self, a, b):
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-0.5 * d2 / float(self.hyper[0]) ** 2)

    def predict_flat(self, kappas) -> np.ndarray:
        """Flat orbit angles for each feature row."""
        if not self._fitted:
            raise StateError("predict called before train")
        x = (_raw_features(kappas) - self.mean_) / self.scale_
        if self.kind == "knn":
            k = max(1, min(int(self.hyper[0]), len(self.x_)))
            d = ((x[:, None, :] - self.x_[None, :, :]) ** 2).sum(axis=-1)
            nn = np.argsort(d, axis=1, kind="stable")[:, :k]
            if k == 1:
                # a lone neighbour is returned as is, not through arctan2
                return self.y_[nn[:, 0]].copy()
            return np.array([circular_mean(self.y_[row], axis=0) for row in nn])
        emb = self._kernel(x, self.x_) @ self.alpha_ + self.emb_mean_
        half = self.y_.shape[1]
        return wrap(np.arctan2(emb[:, :half], emb[:, half:]))

    def predict(self, n_max: int, kappas) -> PolicyOrbit:
        if not self._fitted:
            raise StateError("predict called before train")
        if n_max != self.n_max_:
            raise ShapeError(f"model was trained for n_max={self.n_max_}, asked for {n_max}")
        return PolicyOrbit.from_flat(n_max, self.predict_flat([kappas])[0])


def train(model: Dataset, kind: str = "knn", hyper: Sequence[float] = (1,)) -> OrbitRegressor:
    return OrbitRegressor(kind, hyper).fit(model)


def predict(model: OrbitRegressor, features) -> PolicyOrbit:
    """``features`` is ``(n_max, kappas)`` or a :class:`Datum`."""
    if isinstance(features, Datum):
        n_max, kappas = features.n_max, features.kappas
    else:
        n_max, kappas = features
        if isinstance(kappas, CumulantFeatures):
            kappas = kappas.kappas
    return model.predict(n_max, kappas)


def mean_loss(model: OrbitRegressor, d: Dataset) -> float:
    pred = model.predict_flat([x.kappas for x in d.data])
    return float(flat_orbit_losses(pred, d.labels()).mean())


def calibrate(model: Dataset, grid: Sequence[tuple], spec: SplitSpec, kind: str = "knn") -> tuple:
    """K-fold selection of the hyperparameter tuple with the lowest mean held-out loss.

    Ties go to the earliest tuple in ``grid``.
    """
    grid = [tuple(g) for g in grid]
    if not grid:
        raise ConfigurationError("hyperparameter grid is empty")
    n = len(model)
    if n < spec.folds:
        raise ConfigurationError(f"{n} model data cannot fill {spec.folds} folds")
    perm = _random.generator(spec.seed, _random.SPLIT, 1).permutation(n)
    folds = [sorted(f) for f in np.array_split(perm, spec.folds)]
    if any(len(f) == 0 for f in folds):
        raise ConfigurationError("a calibration fold is empty")
    scores = []
    for hyper in grid:
        losses = []
        for f in folds:
            held = set(f)
            tr = model.subset([i for i in range(n) if i not in held])
            losses.append(mean_loss(train(tr, kind, hyper), model.subset(f)))
        scores.append(float(np.mean(losses)))
    return grid[int(np.argmin(scores))]


def medoid_orbit(d: Dataset) -> np.ndarray:
    """Training label with the smallest summed loss to all training labels."""
    return _medoid(d.labels())


def _medoid(y):
    total = np.array([flat_orbit_losses(y, row).sum() for row in y])
    return y[int(np.argmin(total))]


def resimulated_fit(orbit: PolicyOrbit, prior: PhasePrior, family=None, cfg: DEConfig | None = None):
    cfg = cfg or DEConfig()
    points = [(n, orbit_variance(orbit[n], prior, family, cfg)) for n in range(ORBIT_START, orbit.n_max + 1)]
    if any(not math.isfinite(v) or v <= 0 for _, v in points) or len(points) < 3:
        return None
    return fit_scaling(points, cfg.mode)


def test(model: OrbitRegressor, test_set: Dataset, prior_lookup=None, *, family=None,
         cfg: DEConfig | None = None, max_loss_ratio: float = 1.0, min_feasible: float = 0.8) -> dict:
    """Score predictions on held-out data and re-check feasibility on each true prior.

    ``prior_lookup`` maps a :class:`Datum` to its :class:`PhasePrior`; by
    default the prior recorded in the datum's provenance is used.  The model
    passes when its mean loss is below ``max_loss_ratio`` times the medoid
    baseline and at least ``min_feasible`` of the predictions are feasible.
    """
    if len(test_set) == 0:
        raise EmptyDatasetError("empty test set")
    lookup = prior_lookup or (lambda d: PhasePrior.from_dict(d.provenance["prior"]))
    truth = test_set.labels()
    pred = model.predict_flat([d.kappas for d in test_set.data])
    losses = flat_orbit_losses(pred, truth)
    medoid = _medoid(model.y_)
    base = flat_orbit_losses(np.broadcast_to(medoid, truth.shape), truth)
    verdicts, exponents = [], []
    for d, row in zip(test_set.data, pred):
        fam = family if family is not None else d.provenance.get("family")
        fam = InputFamily.from_dict(fam) if isinstance(fam, dict) else InputFamily.coerce(fam)
        fit = resimulated_fit(PolicyOrbit.from_flat(d.n_max, row), lookup(d), fam, cfg)
        verdicts.append(bool(fit is not None and check_feasibility(fit)))
        exponents.append(None if fit is None else fit.exponent)
    mean, base_mean = float(losses.mean()), float(base.mean())
    ratio = mean / base_mean if base_mean > 0 else (0.0 if mean == 0 else math.inf)
    frac = float(np.mean(verdicts))
    return {
        "kind": model.kind,
        "hyper": list(model.hyper),
        "n_test": len(test_set),
        "mean_loss": mean,
        "max_loss": float(losses.max()),
        "losses": [float(x) for x in losses],
        "baseline_mean_loss": base_mean,
        "loss_ratio": ratio,
        "no_skill": bool(ratio >= 1.0),
        "feasible": verdicts,
        "exponents": exponents,
        "feasible_fraction": frac,
        "passed": bool(ratio < max_loss_ratio and frac >= min_feasible),
    }


test.__test__ = False  # keep pytest from collecting this as a test

