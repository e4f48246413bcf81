"""Quantum-inspired genetic algorithm over qubit genomes.

Every individual is a vector of independent qubits. Offspring are produced
by superposition-style blending of two parents followed by random Ry
rotations, and the best genomes are carried over unchanged (elitism).

Random draws come from counter-based streams keyed by
``(seed, generation, individual, operator)`` so the outcome never depends on
evaluation order or parallelism.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .qstate import QubitPair

log = logging.getLogger(__name__)

NORM_TOL = 1e-10

# operator ids for the keyed random streams
OP_INIT = 0
OP_SELECT = 1
OP_CROSSOVER = 2
OP_MUTATE = 3


class EvaluationError(RuntimeError):
    """Fitness evaluation failed for a specific individual."""

    def __init__(self, generation, individual, cause):
        super().__init__(
            f"fitness evaluation failed at generation {generation}, "
            f"individual {individual}: {cause!r}"
        )
        self.generation = generation
        self.individual = individual


@dataclass(frozen=True, eq=False)
class Genome:
    """Qubit amplitudes, shape ``(n_qubits, 2)`` holding ``(alpha, beta)`` rows."""

    amps: np.ndarray

    def __post_init__(self):
        a = np.array(self.amps, dtype=complex)
        if a.ndim != 2 or a.shape[1] != 2:
            raise ValueError(f"genome amplitudes must have shape (n, 2), got {a.shape}")
        norms = np.sum(np.abs(a) ** 2, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise ValueError("every qubit must be normalized (|alpha|^2 + |beta|^2 = 1)")
        a.flags.writeable = False
        object.__setattr__(self, "amps", a)

    def __len__(self):
        return self.amps.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return bool(np.array_equal(self.amps, other.amps))

    __hash__ = None

    @classmethod
    def from_qubits(cls, qubits):
        return cls(np.array([[q.alpha, q.beta] for q in qubits], dtype=complex))

    @classmethod
    def from_angles(cls, phi):
        phi = np.asarray(phi, dtype=float)
        return cls(np.stack([np.cos(phi / 2.0), np.sin(phi / 2.0)], axis=1))

    @property
    def qubits(self):
        return [QubitPair(complex(a), complex(b)) for a, b in self.amps]

    def probabilities(self):
        """``|beta|^2`` per qubit."""
        return np.abs(self.amps[:, 1]) ** 2

    def norms(self):
        return np.sqrt(np.sum(np.abs(self.amps) ** 2, axis=1))

    def is_normalized(self, tol=NORM_TOL):
        return bool(np.all(np.abs(self.norms() - 1.0) <= tol))


@dataclass(frozen=True)
class QigaConfig:
    population_size: int = 50
    max_generations: int = 100
    crossover_prob: float = 0.8
    mutation_prob: float = 0.1
    desired_fitness: float = math.inf
    mutation_angle_max: float = math.pi / 4
    tournament_size: int = 2
    elitism: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be in [0, population_size)")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be in [1, population_size]")
        if self.mutation_angle_max < 0 or not math.isfinite(self.mutation_angle_max):
            raise ValueError("mutation_angle_max must be finite and >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def stream(seed, generation, individual, op):
    """Independent generator for one (generation, individual, operator) cell."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & (2**64 - 1), spawn_key=(int(generation), int(individual), int(op))
    )
    return np.random.Generator(np.random.Philox(ss))


def init_population(config, genome_len):
    if genome_len < 1:
        raise ValueError("genome_len must be >= 1")
    pop = []
    for i in range(config.population_size):
        rng = stream(config.seed, 0, i, OP_INIT)
        pop.append(Genome.from_angles(rng.uniform(0.0, math.pi, size=genome_len)))
    return pop


def _blend(a, b, phi):
    mixed = math.cos(phi) * a + math.sin(phi) * b
    norms = np.sqrt(np.sum(np.abs(mixed) ** 2, axis=1, keepdims=True))
    return mixed, norms


def crossover_at(p1, p2, phi):
    """Blend two parents with a fixed angle; None if any qubit cancels out."""
    if len(p1) != len(p2):
        raise ValueError("parents must have equal length")
    if phi == 0.0:
        return p1, p2
    if phi == math.pi / 2:
        return p2, p1
    m1, n1 = _blend(p1.amps, p2.amps, phi)
    m2, n2 = _blend(p2.amps, p1.amps, phi)
    if np.any(n1 < 1e-12) or np.any(n2 < 1e-12):
        return None
    return Genome(m1 / n1), Genome(m2 / n2)


def crossover(p1, p2, rng):
    """Offspring ``normalize(cos(phi) p1 + sin(phi) p2)`` and its mirror.

    ``phi`` is uniform on ``[0, pi/2]``. If the blend annihilates a qubit
    (anti-parallel amplitudes) the angle is redrawn once, after which the
    parents are returned unchanged.
    """
    for _ in range(2):
        phi = rng.uniform(0.0, math.pi / 2)
        out = crossover_at(p1, p2, phi)
        if out is not None:
            return out
    return p1, p2


def rotate_qubits(g, thetas):
    """Apply Ry(theta_j) to qubit j (vectorised)."""
    c = np.cos(np.asarray(thetas) / 2.0)
    s = np.sin(np.asarray(thetas) / 2.0)
    a, b = g.amps[:, 0], g.amps[:, 1]
    return Genome(np.stack([c * a - s * b, s * a + c * b], axis=1))


def mutate(g, config, rng):
    """Rotate each qubit with probability ``mutation_prob`` by a random angle."""
    n = len(g)
    hit = rng.random(n) < config.mutation_prob
    theta = rng.uniform(-config.mutation_angle_max, config.mutation_angle_max, size=n)
    if not hit.any():
        return g
    return rotate_qubits(g, np.where(hit, theta, 0.0))


def select(population, fitnesses, config, rng):
    """Tournament selection; ties go to the lower index.

    Contestants within one tournament are distinct, individuals may win any
    number of tournaments.

    Returns a list of indices into ``population``; its length is
    ``population_size - elitism``.
    """
    f = np.asarray(fitnesses, dtype=float)
    n = len(population)
    pool = []
    for _ in range(config.population_size - config.elitism):
        cand = rng.choice(n, size=config.tournament_size, replace=False)
        best = min(cand, key=lambda i: (-f[i], i))
        pool.append(int(best))
    return pool


def elite_indices(fitnesses, k):
    """Indices of the ``k`` best individuals (stable: lower index wins ties)."""
    f = np.asarray(fitnesses, dtype=float)
    order = sorted(range(f.size), key=lambda i: (-f[i], i))
    return order[:k]


@dataclass
class FitnessTrace:
    best: list = field(default_factory=list)
    mean: list = field(default_factory=list)

    def __len__(self):
        return len(self.best)

    def append(self, best, mean):
        self.best.append(float(best))
        self.mean.append(float(mean))

    def to_csv(self):
        rows = ["generation,best,mean"]
        rows += [f"{t},{b!r},{m!r}" for t, (b, m) in enumerate(zip(self.best, self.mean))]
        return "\n".join(rows) + "\n"


@dataclass
class QigaResult:
    best: Genome
    best_fitness: float
    trace: FitnessTrace
    generations: int


def _evaluate(population, evaluator, generation, workers):
    batch = getattr(evaluator, "evaluate_population", None)
    if batch is not None:
        try:
            values = np.asarray(batch(population), dtype=float)
        except Exception as exc:
            # locate the offending individual for the diagnostic
            for i, g in enumerate(population):
                try:
                    evaluator(g)
                except Exception as inner:
                    raise EvaluationError(generation, i, inner) from inner
            raise EvaluationError(generation, -1, exc) from exc
    else:

        def one(item):
            i, g = item
            try:
                return float(evaluator(g))
            except Exception as exc:
                raise EvaluationError(generation, i, exc) from exc

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                values = np.array(list(ex.map(one, enumerate(population))))
        else:
            values = np.array([one(item) for item in enumerate(population)])
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationError(generation, i, ValueError(f"non-finite fitness {values[i]}"))
    return values


def next_generation(population, fitnesses, config, generation):
    """Selection, crossover and mutation; elites are copied first."""
    elites = [population[i] for i in elite_indices(fitnesses, config.elitism)]
    pool = select(population, fitnesses, config, stream(config.seed, generation, 0, OP_SELECT))
    offspring = []
    for k in range(0, len(pool) - 1, 2):
        p1, p2 = population[pool[k]], population[pool[k + 1]]
        rng = stream(config.seed, generation, k // 2, OP_CROSSOVER)
        if rng.random() < config.crossover_prob:
            o1, o2 = crossover(p1, p2, rng)
        else:
            o1, o2 = p1, p2
        offspring += [o1, o2]
    if len(pool) % 2:
        offspring.append(population[pool[-1]])
    mutated = [
        mutate(g, config, stream(config.seed, generation, j, OP_MUTATE))
        for j, g in enumerate(offspring)
    ]
    return elites + mutated


def run(config, evaluator, genome_len, callback=None):
    """Evolve a population and return the best genome found.

    Parameters
    ----------
    config : QigaConfig
    evaluator : callable
        ``evaluator(genome) -> float``; higher is better. If it also exposes
        ``evaluate_population(list_of_genomes) -> array`` that batch form is
        used instead.
    genome_len : int
        Number of qubits per individual.
    callback : callable, optional
        Called as ``callback(generation, best, mean)`` after each evaluation pass.

    Returns
    -------
    QigaResult
    """
    population = init_population(config, genome_len)
    trace = FitnessTrace()
    f_best = -math.inf
    t = 0
    while t < config.max_generations and f_best < config.desired_fitness:
        fit = _evaluate(population, evaluator, t, config.workers)
        f_best = float(fit.max())
        trace.append(f_best, fit.mean())
        if callback is not None:
            callback(t, f_best, float(fit.mean()))
        population = next_generation(population, fit, config, t + 1)
        t += 1
    fit = _evaluate(population, evaluator, t, config.workers)
    i = elite_indices(fit, 1)[0]
    log.debug("qiga finished after %d generations, best %.4f", t, fit[i])
    return QigaResult(population[i], float(fit[i]), trace, t)


@dataclass(frozen=True)
class ConvergenceModel:
    """Parameters of the ``P_opt`` recurrence with exploration ``1/(1 + beta t)``."""

    alpha: float
    beta: float
    p0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError("p0 must be in [0, 1]")


def convergence_curve(model, t_max):
    """``P[0..t_max]`` with ``P[t+1] = P[t] + alpha/(1 + beta t) * (1 - P[t])``."""
    p = np.empty(t_max + 1)
    p[0] = model.p0
    for t in range(t_max):
        p[t + 1] = p[t] + model.alpha * (1.0 / (1.0 + model.beta * t)) * (1.0 - p[t])
    return p


def convergence_csv(curve):
    return "t,p_opt\n" + "".join(f"{t},{float(p)!r}\n" for t, p in enumerate(curve))
