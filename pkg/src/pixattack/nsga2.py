"""Bi-objective NSGA-II over box-bounded real genomes.

Minimizes both objectives. One generation is: binary tournament mating
selection on (rank, crowding), simulated binary crossover, polynomial
mutation, offspring evaluation, then environmental selection of the best N
from parents plus offspring. The run terminates on an evaluation budget,
with the final generation truncated so the budget is never exceeded.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SBX_EPS = 1e-14  # below this parent gap the spread factor is numerically meaningless


class EvaluationError(RuntimeError):
    """An objective evaluation failed; carries the evaluation index."""

    def __init__(self, eval_index: int, message: str = ""):
        self.eval_index = eval_index
        super().__init__(message or f"objective evaluation {eval_index} failed")


@dataclass(eq=False)
class Individual:
    genome: np.ndarray
    objectives: tuple[float, float] | None = None
    rank: int | None = None
    crowding: float = 0.0
    eval_index: int | None = None


@dataclass(frozen=True)
class EvalRecord:
    """One objective evaluation, in evaluation order."""

    index: int
    genome: np.ndarray
    objectives: tuple[float, float]


@dataclass(frozen=True)
class BoundedProblem:
    dimension: int
    lower: np.ndarray
    upper: np.ndarray
    evaluate: Callable[[np.ndarray], tuple[float, float]]
    budget: int | None = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if self.dimension < 1:
            raise ValueError("problem dimension must be >= 1")
        if lower.shape != (self.dimension,) or upper.shape != (self.dimension,):
            raise ValueError("bounds must be vectors of length dimension")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)


@dataclass(frozen=True)
class MoeaConfig:
    population_size: int = 50
    max_evaluations: int = 10_000
    eta_crossover: float = 20.0
    eta_mutation: float = 20.0
    crossover_prob: float = 1.0
    mutation_prob: float | None = None  # None -> 1/dimension
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ValueError("population size must be even and >= 2")
        if self.max_evaluations < self.population_size:
            raise ValueError("evaluation budget must cover at least one population")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover probability must be in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation probability must be in [0, 1]")


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Minimization dominance: no worse in all objectives, better in one."""
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def fast_nondominated_sort(objectives: Sequence[tuple[float, float]]) -> list[list[int]]:
    """Partition indices into fronts; front 0 is the nondominated set."""
    objs = np.asarray(objectives, dtype=np.float64)
    n = objs.shape[0]
    if n == 0:
        return []
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=2)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0).astype(np.int64)
    fronts: list[list[int]] = []
    assigned = 0
    while assigned < n:
        current = np.where(count == 0)[0]
        fronts.append([int(i) for i in current])
        assigned += current.size
        count[current] = -1  # never re-selected
        count -= dom[current].sum(axis=0)
    return fronts


def crowding_distance(objectives: Sequence[tuple[float, float]]) -> np.ndarray:
    """Crowding distances for one front; boundary points get +inf.

    A zero objective range contributes nothing to interior points.
    """
    objs = np.asarray(objectives, dtype=np.float64)
    n = objs.shape[0]
    if n == 0:
        raise ValueError("crowding distance of an empty front")
    dist = np.zeros(n)
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = objs[order[-1], m] - objs[order[0], m]
        if span > 0 and n > 2:
            gaps = (objs[order[2:], m] - objs[order[:-2], m]) / span
            dist[order[1:-1]] += gaps
    return dist


def assign_rank_and_crowding(population: list[Individual]) -> list[list[int]]:
    objs = [ind.objectives for ind in population]
    fronts = fast_nondominated_sort(objs)
    for rank, front in enumerate(fronts):
        front_objs = [objs[i] for i in front]
        dists = crowding_distance(front_objs)
        for i, d in zip(front, dists):
            population[i].rank = rank
            population[i].crowding = float(d)
    return fronts


def _crowded_better(a: Individual, b: Individual, rng: np.random.Generator) -> Individual:
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a if rng.random() < 0.5 else b


def tournament_select(
    population: list[Individual], rng: np.random.Generator, count: int | None = None
) -> list[Individual]:
    """Binary tournaments with replacement; rank wins, then crowding, then a coin."""
    count = len(population) if count is None else count
    draws = rng.integers(0, len(population), size=(count, 2))
    return [
        _crowded_better(population[i], population[j], rng) for i, j in draws
    ]


def sbx_crossover(
    parent1: np.ndarray,
    parent2: np.ndarray,
    eta: float,
    lower: np.ndarray,
    upper: np.ndarray,
    crossover_prob: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover; children are clamped to the bounds."""
    c1 = parent1.copy()
    c2 = parent2.copy()
    if rng.random() > crossover_prob:
        return c1, c2
    d = parent1.size
    cross = (rng.random(d) <= 0.5) & (np.abs(parent1 - parent2) > SBX_EPS)
    if not cross.any():
        return c1, c2
    u = rng.random(d)
    exponent = 1.0 / (eta + 1.0)
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** exponent,
        (1.0 / (2.0 * (1.0 - u))) ** exponent,
    )
    lo_child = 0.5 * ((1.0 + beta) * parent1 + (1.0 - beta) * parent2)
    hi_child = 0.5 * ((1.0 - beta) * parent1 + (1.0 + beta) * parent2)
    swap = rng.random(d) <= 0.5
    c1 = np.where(cross, np.where(swap, hi_child, lo_child), c1)
    c2 = np.where(cross, np.where(swap, lo_child, hi_child), c2)
    np.minimum(np.maximum(c1, lower, out=c1), upper, out=c1)
    np.minimum(np.maximum(c2, lower, out=c2), upper, out=c2)
    return c1, c2


def polynomial_mutation(
    genome: np.ndarray,
    eta: float,
    lower: np.ndarray,
    upper: np.ndarray,
    mutation_prob: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bounded polynomial mutation, applied independently per variable."""
    out = genome.copy()
    d = genome.size
    pick = rng.random(d) < mutation_prob
    if not pick.any():
        return out
    idx = np.where(pick & (upper > lower))[0]
    if idx.size == 0:
        return out
    x = out[idx]
    lo = lower[idx]
    hi = upper[idx]
    span = hi - lo
    u = rng.random(idx.size)
    mut_pow = 1.0 / (eta + 1.0)
    delta1 = (x - lo) / span
    delta2 = (hi - x) / span
    low_side = u <= 0.5
    xy = np.where(low_side, 1.0 - delta1, 1.0 - delta2)
    val = np.where(
        low_side,
        2.0 * u + (1.0 - 2.0 * u) * xy ** (eta + 1.0),
        2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy ** (eta + 1.0),
    )
    deltaq = np.where(low_side, val**mut_pow - 1.0, 1.0 - val**mut_pow)
    out[idx] = np.minimum(np.maximum(x + deltaq * span, lo), hi)
    return out


def environmental_selection(combined: list[Individual], n: int) -> list[Individual]:
    """Keep the best n by ascending front, splitting the last front by
    descending crowding (stable on ties)."""
    fronts = assign_rank_and_crowding(combined)
    survivors: list[Individual] = []
    for front in fronts:
        if len(survivors) + len(front) <= n:
            survivors.extend(combined[i] for i in front)
            if len(survivors) == n:
                break
            continue
        crowd = np.array([combined[i].crowding for i in front])
        order = np.argsort(-crowd, kind="stable")
        need = n - len(survivors)
        survivors.extend(combined[front[k]] for k in order[:need])
        break
    return survivors


@dataclass
class RunResult:
    population: list[Individual]
    history: list[EvalRecord] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.history)


def run_nsga2(
    problem: BoundedProblem,
    config: MoeaConfig,
    workers: int = 1,
) -> RunResult:
    """Run the optimizer until the evaluation budget is spent.

    ``workers`` > 1 evaluates offspring concurrently (only sensible when the
    objective function is safe for concurrent calls); genome-to-objective
    pairing and history order are preserved either way. Full cross-run
    determinism is guaranteed in single-threaded mode.
    """
    rng = np.random.default_rng(config.seed)
    n = config.population_size
    budget = problem.budget if problem.budget is not None else config.max_evaluations
    if budget < n:
        raise ValueError("evaluation budget must cover at least one population")
    p_m = config.mutation_prob if config.mutation_prob is not None else 1.0 / problem.dimension
    history: list[EvalRecord] = []

    def record(ind: Individual, index: int, objs: tuple[float, float]) -> None:
        ind.objectives = objs
        ind.eval_index = index
        history.append(EvalRecord(index, ind.genome.copy(), objs))

    def evaluate_batch(individuals: list[Individual]) -> None:
        base = len(history)
        if workers > 1 and len(individuals) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = pool.map(
                    _safe_eval,
                    [problem] * len(individuals),
                    [ind.genome for ind in individuals],
                    range(base, base + len(individuals)),
                )
                # map yields in submission order, so pairing is preserved and
                # completed records survive a mid-batch failure.
                for k, (ind, objs) in enumerate(zip(individuals, results)):
                    record(ind, base + k, objs)
        else:
            for k, ind in enumerate(individuals):
                record(ind, base + k, _safe_eval(problem, ind.genome, base + k))

    genomes = rng.uniform(problem.lower, problem.upper, size=(n, problem.dimension))
    population = [Individual(genomes[i].copy()) for i in range(n)]
    evaluate_batch(population)
    assign_rank_and_crowding(population)

    while len(history) < budget:
        parents = tournament_select(population, rng)
        offspring: list[Individual] = []
        for i in range(0, n, 2):
            c1, c2 = sbx_crossover(
                parents[i].genome,
                parents[i + 1].genome,
                config.eta_crossover,
                problem.lower,
                problem.upper,
                config.crossover_prob,
                rng,
            )
            for child in (c1, c2):
                mutated = polynomial_mutation(
                    child, config.eta_mutation, problem.lower, problem.upper, p_m, rng
                )
                offspring.append(Individual(mutated))
        remaining = budget - len(history)
        offspring = offspring[:remaining]
        evaluate_batch(offspring)
        population = environmental_selection(population + offspring, n)

    return RunResult(population=population, history=history)


def _safe_eval(problem: BoundedProblem, genome: np.ndarray, index: int) -> tuple[float, float]:
    try:
        f1, f2 = problem.evaluate(genome)
        return float(f1), float(f2)
    except EvaluationError:
        raise
    except Exception as exc:
        raise EvaluationError(index, f"objective evaluation {index} failed: {exc}") from exc
