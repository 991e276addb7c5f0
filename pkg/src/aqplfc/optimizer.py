"""Global search over policy vectors and bootstrapped orbit construction.

The default engine is differential evolution (rand/1/bin) on the torus:
difference vectors are taken as shortest signed arcs and every trial is wrapped
back into ``[0, 2 pi)``.  The best member is finally refined by a local
Nelder-Mead search.

Fitness is the Holevo variance of the estimation error.  While ``2^n``
outcome strings are cheap to enumerate it is computed exactly; beyond that it
is a Monte-Carlo estimate with common random numbers, i.e. all candidates of
one run see the same unknown phases and the same detection draws, so
comparisons between candidates are not blurred by sampling noise.  A
particle-swarm engine sits behind the same interface for cross-checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import minimize

from . import _random
from .distributions import PhasePrior, harmonic_cutoff, quadrature, sample_phases
from .errors import DomainError, OrbitIncompleteError
from .metrics import ScalingFit, fit_scaling, holevo_from_moment
from .plant import InputFamily, canonical_policy, error_moment, family_amplitudes, simulate_estimates
from .torus import ORBIT_START, TWO_PI, PolicyOrbit, PolicyVector, signed_difference, wrap

ENGINES = ("de", "pso")
FITNESS = ("auto", "exact", "monte-carlo")


@dataclass(frozen=True)
class DEConfig:
    """Search hyperparameters.

    Attributes
    ----------
    population, differential_weight, crossover_rate, max_generations
        Usual differential-evolution knobs (the PSO engine reuses
        ``population`` and ``max_generations``).
    fitness_samples : int
        Trajectories per fitness evaluation.
    seed : int
        Master seed; every random stream of a run is derived from it.
    engine : {"de", "pso"}
    fitness : {"auto", "exact", "monte-carlo"}
        ``auto`` enumerates outcome strings up to ``exact_max_n`` photons and
        falls back to Monte Carlo with common random numbers above it.
    exact_max_n : int
        Largest photon number for exact evaluation, both during the search
        and for the variances reported with an orbit; above it
        ``report_samples`` fresh trajectories are used for reporting.
    tol : float
        Stop early once the population's fitness spread falls below ``tol``.
    polish : bool
        Finish with a Nelder-Mead refinement of the best member.
    """

    population: int = 40
    differential_weight: float = 0.6
    crossover_rate: float = 0.9
    max_generations: int = 200
    fitness_samples: int = 4000
    seed: int = 0
    engine: str = "de"
    exact_max_n: int = 14
    report_samples: int = 100_000
    tol: float = 1e-10
    mode: str = "standard"
    fitness: str = "auto"
    polish: bool = True

    def __post_init__(self):
        if self.population < 4:
            raise DomainError("population must be at least 4")
        if not 0.0 < self.differential_weight <= 2.0:
            raise DomainError("differential weight must lie in (0, 2]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise DomainError("crossover rate must lie in [0, 1]")
        if self.max_generations < 1:
            raise DomainError("need at least one generation")
        if self.fitness_samples < 100:
            raise DomainError("fitness_samples must be at least 100")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        if self.engine not in ENGINES:
            raise DomainError(f"unknown engine {self.engine!r}")
        if self.fitness not in FITNESS:
            raise DomainError(f"unknown fitness kind {self.fitness!r}")
        if self.report_samples < 100:
            raise DomainError("report_samples must be at least 100")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class OptimizationReport:
    best_policy: PolicyVector
    best_variance: float
    generations_used: int
    fitness_trace: tuple
    budget_exhausted: bool = False
    final_population: np.ndarray = field(default=None, repr=False, compare=False)
    final_fitness: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "n": self.best_policy.n,
            "best_policy": list(self.best_policy.deltas),
            "best_variance": _json_float(self.best_variance),
            "generations_used": self.generations_used,
            "fitness_trace": [_json_float(v) for v in self.fitness_trace],
            "budget_exhausted": self.budget_exhausted,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _json_float(x):
    return "inf" if math.isinf(x) else float(x)


class _Fitness:
    """Monte-Carlo Holevo variance with frozen trajectories (common random numbers)."""

    def __init__(self, n, prior, family, samples, seed, mode="standard"):
        self.n = n
        self.mode = mode
        self.amplitudes = family_amplitudes(n, InputFamily.coerce(family))
        self.phis = sample_phases(prior, seed, samples)
        self.uniforms = _random.uniform_block(seed, (_random.TRAJECTORIES,), 0, samples, width=n)

    def __call__(self, deltas, chunk=16):
        deltas = np.atleast_2d(deltas)
        out = np.empty(deltas.shape[0])
        for lo in range(0, deltas.shape[0], chunk):
            est = simulate_estimates(deltas[lo:lo + chunk], self.phis, self.uniforms, self.amplitudes)
            m = np.abs(np.exp(1j * (est - self.phis[None, :])).mean(axis=1))
            out[lo:lo + chunk] = [holevo_from_moment(x, self.mode) for x in m]
        return out


class _ExactFitness:
    """Holevo variance by enumeration of outcome strings; no sampling noise."""

    def __init__(self, n, prior, family, mode="standard"):
        self.mode = mode
        self.amplitudes = family_amplitudes(n, InputFamily.coerce(family))
        self.phis, self.weights = exact_nodes(n, prior)

    def __call__(self, deltas):
        deltas = np.atleast_2d(deltas)
        return np.array([holevo_from_moment(abs(error_moment(d, self.phis, self.weights, self.amplitudes)),
                                            self.mode) for d in deltas])


def exact_nodes(n: int, prior: PhasePrior, grid: int = 512):
    """Quadrature nodes and weights that integrate an ``n``-photon moment exactly.

    The outcome probabilities times ``e^{-i phi}`` form a trigonometric
    polynomial of degree ``n + 1``; together with the prior's significant
    harmonics this fixes how many equispaced nodes avoid aliasing.  Priors
    with a slowly decaying spectrum fall back to ``grid`` nodes.
    """
    if prior.family == "point" or (prior.family == "wrapped-normal" and prior.parameters[1] == 0.0):
        return quadrature(prior)
    cutoff = harmonic_cutoff(prior, limit=grid)
    nodes = n + 2 + cutoff
    if cutoff >= grid or nodes >= grid:
        return quadrature(prior, grid)
    if prior.family == "uniform":
        return TWO_PI * np.arange(nodes) / nodes, np.full(nodes, 1.0 / nodes)
    return quadrature(prior, max(nodes, 8))


def _make_fitness(n, prior, family, cfg):
    if cfg.fitness == "exact" or (cfg.fitness == "auto" and n <= cfg.exact_max_n):
        return _ExactFitness(n, prior, family, cfg.mode)
    return _Fitness(n, prior, family, cfg.fitness_samples, cfg.seed, cfg.mode)


def evaluate_policy(policy: PolicyVector, prior: PhasePrior, family=None, samples: int = 4000,
                    seed: int = 0, mode: str = "standard") -> float:
    """Monte-Carlo Holevo variance of ``estimate - phi`` with ``phi`` drawn from the prior."""
    if samples < 1:
        raise DomainError("samples must be at least 1")
    return float(_Fitness(policy.n, prior, family, samples, seed, mode)(policy.as_array())[0])


def exact_variance(policy: PolicyVector, prior: PhasePrior, family=None, grid: int | None = None,
                   mode: str = "standard") -> float:
    """Holevo variance by enumerating every outcome string.

    With ``grid=None`` the node count comes from :func:`exact_nodes`, which is
    exact up to the prior's negligible harmonics (and exact outright for the
    uniform and point priors).  An explicit ``grid`` forces that many nodes.
    """
    n = policy.n
    amps = family_amplitudes(n, InputFamily.coerce(family))
    phis, weights = exact_nodes(n, prior) if grid is None else quadrature(prior, grid)
    return holevo_from_moment(abs(error_moment(policy.as_array(), phis, weights, amps)), mode)


def _initial_population(n, cfg, initial_population):
    pop = _random.generator(cfg.seed, _random.INIT, n).random((cfg.population, n)) * TWO_PI
    if initial_population is not None:
        seeds = wrap(np.atleast_2d(np.asarray(initial_population, dtype=float)))
        if seeds.shape[1] != n:
            raise DomainError(f"initial population has width {seeds.shape[1]}, expected {n}")
        k = min(len(seeds), cfg.population)
        pop[:k] = seeds[:k]
    return pop


def optimize_policy(n: int, prior: PhasePrior, family=None, cfg: DEConfig | None = None,
                    initial_population=None) -> OptimizationReport:
    """Minimise the Monte-Carlo Holevo variance over ``n`` feedback increments.

    Parameters
    ----------
    initial_population : array (k, n), optional
        Warm-start rows; the remaining ``population - k`` rows are random.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    cfg = cfg or DEConfig()
    fitness = _make_fitness(n, prior, family, cfg)
    pop = _initial_population(n, cfg, initial_population)
    rep = _pso(n, pop, fitness, cfg) if cfg.engine == "pso" else _de(n, pop, fitness, cfg)
    if cfg.polish:
        rep = _polish(rep, fitness, cfg)
    return _canonical(rep, fitness)


def _canonical(rep, fitness):
    """Replace the incumbent by its representative with increments in ``[0, pi)``.

    Equivalent policies share the variance exactly (see
    :func:`aqplfc.plant.canonical_policy`); one representative keeps labels of
    different runs comparable.
    """
    x0 = rep.best_policy.as_array()
    x = canonical_policy(x0)
    if np.array_equal(x, x0):
        return rep
    # the exact value is invariant; a Monte-Carlo estimate is redrawn
    v = rep.best_variance if isinstance(fitness, _ExactFitness) else float(fitness(x)[0])
    pop, fit = rep.final_population.copy(), rep.final_fitness.copy()
    best = int(np.argmin(fit))
    pop[best], fit[best] = x, v
    return OptimizationReport(PolicyVector(tuple(x)), v, rep.generations_used, rep.fitness_trace,
                              rep.budget_exhausted, pop, fit)


def _polish(rep, fitness, cfg):
    """Nelder-Mead from the best member; kept only if it improves the fitness."""
    x0 = rep.best_policy.as_array()
    n = x0.size
    res = minimize(lambda x: float(fitness(wrap(x))[0]), x0, method="Nelder-Mead",
                   options={"maxfev": 400 * n, "xatol": 1e-9, "fatol": 1e-14})
    x = wrap(res.x)
    v = float(fitness(x)[0])
    if not v < rep.best_variance:
        return rep
    pop, fit = rep.final_population.copy(), rep.final_fitness.copy()
    best = int(np.argmin(fit))
    pop[best], fit[best] = x, v
    return OptimizationReport(PolicyVector(tuple(x)), v, rep.generations_used, rep.fitness_trace + (v,),
                              rep.budget_exhausted, pop, fit)


def _de(n, pop, fitness, cfg):
    size = cfg.population
    fit = fitness(pop)
    trace = [float(fit.min())]
    rng = _random.generator(cfg.seed, _random.MUTATION, n)
    converged = False
    gens = 0
    idx = np.arange(size)
    for gens in range(1, cfg.max_generations + 1):
        # three distinct donors, none equal to the target
        r = np.empty((size, 3), dtype=int)
        for i in range(size):
            r[i] = rng.choice(np.delete(idx, i), 3, replace=False)
        mutant = wrap(pop[r[:, 0]] + cfg.differential_weight * signed_difference(pop[r[:, 1]], pop[r[:, 2]]))
        cross = rng.random((size, n)) < cfg.crossover_rate
        cross[idx, rng.integers(0, n, size)] = True
        trial = np.where(cross, mutant, pop)
        trial_fit = fitness(trial)
        better = trial_fit <= fit
        pop[better] = trial[better]
        fit[better] = trial_fit[better]
        trace.append(float(fit.min()))
        if np.all(np.isfinite(fit)) and fit.max() - fit.min() <= cfg.tol:
            converged = True
            break
    best = int(np.argmin(fit))
    return OptimizationReport(PolicyVector(tuple(pop[best])), float(fit[best]), gens, tuple(trace),
                              not converged, pop.copy(), fit.copy())


def _pso(n, pop, fitness, cfg, inertia=0.72, c_personal=1.49, c_global=1.49):
    rng = _random.generator(cfg.seed, _random.MUTATION, n)
    vel = signed_difference(rng.random(pop.shape) * TWO_PI, pop) * 0.1
    fit = fitness(pop)
    pbest, pbest_fit = pop.copy(), fit.copy()
    g = int(np.argmin(pbest_fit))
    trace = [float(pbest_fit[g])]
    converged = False
    gens = 0
    for gens in range(1, cfg.max_generations + 1):
        r1, r2 = rng.random(pop.shape), rng.random(pop.shape)
        vel = (inertia * vel + c_personal * r1 * signed_difference(pbest, pop)
               + c_global * r2 * signed_difference(pbest[g], pop))
        vel = np.clip(vel, -math.pi, math.pi)
        pop = wrap(pop + vel)
        fit = fitness(pop)
        improved = fit <= pbest_fit
        pbest[improved] = pop[improved]
        pbest_fit[improved] = fit[improved]
        g = int(np.argmin(pbest_fit))
        trace.append(float(pbest_fit[g]))
        if np.all(np.isfinite(pbest_fit)) and pbest_fit.max() - pbest_fit.min() <= cfg.tol:
            converged = True
            break
    return OptimizationReport(PolicyVector(tuple(pbest[g])), float(pbest_fit[g]), gens, tuple(trace),
                              not converged, pbest.copy(), pbest_fit.copy())


def orbit_variance(policy: PolicyVector, prior: PhasePrior, family, cfg: DEConfig) -> float:
    """The variance used for the scaling fit: exact when affordable, else a fresh Monte-Carlo run."""
    if policy.n <= cfg.exact_max_n:
        return exact_variance(policy, prior, family, mode=cfg.mode)
    seed = _random.derive_seed(cfg.seed, _random.REPORT, policy.n)
    return evaluate_policy(policy, prior, family, cfg.report_samples, seed, cfg.mode)


def build_orbit(n_max: int, prior: PhasePrior, family=None, cfg: DEConfig | None = None,
                progress=None):
    """Optimise ``N = 4 .. n_max`` in turn, warm-starting each level from the last.

    The warm start appends a zero to the better half of the previous final
    population; the other half is drawn afresh.

    Returns
    -------
    orbit : PolicyOrbit
    fit : ScalingFit
        Power-law fit of the per-level variances, which are kept in ``fit.points``.

    Raises
    ------
    OrbitIncompleteError
        When a level ends with infinite variance; ``.partial`` holds the
        reports of the levels finished so far.
    """
    if n_max < ORBIT_START:
        raise DomainError(f"n_max must be at least {ORBIT_START}")
    cfg = cfg or DEConfig()
    reports, points = [], []
    warm = None
    for n in range(ORBIT_START, n_max + 1):
        rep = optimize_policy(n, prior, family, cfg, warm)
        v = orbit_variance(rep.best_policy, prior, family, cfg)
        if not math.isfinite(v) or not math.isfinite(rep.best_variance):
            raise OrbitIncompleteError(f"level N={n} has infinite variance", reports)
        reports.append(rep)
        points.append((n, v))
        if progress is not None:
            progress(n, rep, v)
        order = np.argsort(rep.final_fitness, kind="stable")[: cfg.population // 2]
        keep = rep.final_population[order]
        warm = np.hstack([keep, np.zeros((len(keep), 1))])
    orbit = PolicyOrbit(tuple(r.best_policy for r in reports))
    if len(points) >= 3 and all(v > 0 for _, v in points):
        fit = fit_scaling(points, cfg.mode)
    else:
        # too few levels, or an exactly known phase: no power law to fit, so
        # report a non-feasible placeholder
        fit = ScalingFit(float("nan"), float("nan"), 0.0, tuple(points), cfg.mode)
    return orbit, fit
