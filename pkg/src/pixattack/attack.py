"""End-to-end black-box attack driver.

Pipeline: attention map -> binarize -> parity refine (each stage optional
for ablations) -> variable index -> per-variable box bounds -> bi-objective
search (minimize the oracle's confidence in the clean prediction and the
realized perturbation's l2 norm) -> final adversarial example selection.

Success is untargeted: the oracle's argmax must differ from its argmax on
the clean image. The final AE is the successful candidate with the smallest
realized l2 norm, picked from the full evaluation history by default.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import masking
from .attention import AttentionMap, ProxyModel, compute_cam
from .images import (
    Image,
    SparsePerturbation,
    apply_perturbation,
    effective_perturbation,
    round_half_away,
)
from .masking import PixelMask, VariableIndex
from .nsga2 import (
    BoundedProblem,
    EvalRecord,
    EvaluationError,
    MoeaConfig,
    fast_nondominated_sort,
    run_nsga2,
)
from .oracle import CountingOracle, Oracle


@dataclass(frozen=True)
class AttackConfig:
    """Attack settings; the optimizer defaults match the headline setup
    (population 50, 10k evaluations, distribution indices 20, crossover
    probability 1.0, mutation probability 1/d)."""

    population_size: int = 50
    max_evaluations: int = 10_000
    eta_crossover: float = 20.0
    eta_mutation: float = 20.0
    crossover_prob: float = 1.0
    mutation_prob: float | None = None
    seed: int = 0
    use_attention: bool = True
    use_parity: bool = True
    parity_segment: str = "even"
    delta_max: float | None = None
    final_ae_scope: str = "history"  # or "front": restrict to the final front
    workers: int = 1

    def __post_init__(self):
        if self.delta_max is not None and self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if self.final_ae_scope not in ("history", "front"):
            raise ValueError("final_ae_scope must be 'history' or 'front'")
        if self.parity_segment not in masking.MASK_SEGMENTS:
            raise ValueError(f"parity_segment must be one of {masking.MASK_SEGMENTS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def moea_config(self) -> MoeaConfig:
        return MoeaConfig(
            population_size=self.population_size,
            max_evaluations=self.max_evaluations,
            eta_crossover=self.eta_crossover,
            eta_mutation=self.eta_mutation,
            crossover_prob=self.crossover_prob,
            mutation_prob=self.mutation_prob,
            seed=self.seed,
        )


def bounds_for(intensity: int) -> tuple[float, float]:
    """Feasible additive range keeping intensity + x inside [0, 255]."""
    if not 0 <= intensity <= 255:
        raise ValueError(f"intensity {intensity} outside [0, 255]")
    return (-float(intensity), 255.0 - float(intensity))


@dataclass(frozen=True)
class QueryLogEntry:
    """Outcome of one oracle evaluation during the search."""

    eval_index: int
    f1: float
    f2: float
    predicted_class: int
    predicted_confidence: float


@dataclass
class AttackProblem:
    """The bi-objective problem over the masked variables of one image."""

    image: Image
    index: VariableIndex
    lower: np.ndarray
    upper: np.ndarray
    oracle: CountingOracle
    original_class: int
    clean_confidence: float
    raw_log: list[QueryLogEntry] = field(default_factory=list)

    def __post_init__(self):
        # genome bytes -> (predicted class, confidence); keyed storage keeps
        # oracle metadata correctly paired with genomes even when offspring
        # are evaluated concurrently.
        self._responses: dict[bytes, tuple[int, float]] = {}
        self._lock = threading.Lock()
        self._base_flat = self.image.pixels.reshape(-1)
        self._positions = self.index.flat_positions
        self._intensities = self._base_flat[self._positions].astype(np.float64)

    @property
    def dimension(self) -> int:
        return self.index.size

    def evaluate(self, genome: np.ndarray) -> tuple[float, float]:
        # single-pass equivalent of apply_perturbation + effective_perturbation
        # (hot path: one call per oracle query)
        applied = np.clip(round_half_away(self._intensities + genome), 0.0, 255.0)
        flat = self._base_flat.copy()
        flat[self._positions] = applied.astype(np.uint8)
        attacked = Image(flat.reshape(self.image.shape))
        response = self.oracle.classify(attacked)
        f1 = float(response.probabilities[self.original_class])
        effective = applied - self._intensities
        f2 = float(np.sqrt(np.dot(effective, effective)))
        pred = response.predicted_class
        conf = float(response.probabilities[pred])
        with self._lock:
            self._responses.setdefault(genome.tobytes(), (pred, conf))
            self.raw_log.append(
                QueryLogEntry(len(self.raw_log), f1, f2, pred, conf)
            )
        return f1, f2

    def response_for(self, genome: np.ndarray) -> tuple[int, float]:
        return self._responses[genome.tobytes()]

    def bounded(self, budget: int) -> BoundedProblem:
        return BoundedProblem(
            dimension=self.dimension,
            lower=self.lower,
            upper=self.upper,
            evaluate=self.evaluate,
            budget=budget,
        )


def build_problem(
    image: Image,
    oracle: CountingOracle,
    mask: PixelMask,
    original_class: int,
    clean_confidence: float,
    delta_max: float | None = None,
) -> AttackProblem:
    """Bounds per variable are the exact feasibility box [-u, 255-u],
    optionally tightened symmetrically by delta_max."""
    index = masking.build_index(mask, image.channels)
    intensities = image.pixels.reshape(-1)[index.flat_positions].astype(np.float64)
    lower = -intensities
    upper = 255.0 - intensities
    if delta_max is not None:
        lower = np.maximum(lower, -delta_max)
        upper = np.minimum(upper, delta_max)
    return AttackProblem(
        image=image,
        index=index,
        lower=lower,
        upper=upper,
        oracle=oracle,
        original_class=original_class,
        clean_confidence=clean_confidence,
    )


def select_final_ae(
    log: Sequence[QueryLogEntry], original_class: int, allowed: Iterable[int] | None = None
) -> QueryLogEntry | None:
    """Entry that fools the oracle with the minimum realized l2 norm.

    Ties go to the earliest evaluation; ``allowed`` optionally restricts the
    candidate set to specific evaluation indices. Returns None when nothing
    misclassified.
    """
    allowed_set = None if allowed is None else set(allowed)
    best: QueryLogEntry | None = None
    for entry in log:
        if entry.predicted_class == original_class:
            continue
        if allowed_set is not None and entry.eval_index not in allowed_set:
            continue
        if best is None or entry.f2 < best.f2:
            best = entry
    return best


@dataclass(frozen=True)
class FinalAE:
    image: Image
    perturbation: SparsePerturbation  # effective (integer) changes
    predicted_class: int
    confidence: float
    f2: float
    eval_index: int


@dataclass
class AttackReport:
    history: list[EvalRecord]
    log: list[QueryLogEntry]
    front: list[tuple[float, float, np.ndarray]]  # final-population front 1
    front_entries: list[QueryLogEntry]
    final_ae: FinalAE | None
    query_count: int
    wall_time: float
    config: AttackConfig
    original_class: int
    clean_confidence: float
    mask: PixelMask
    index: VariableIndex
    attention_fallback: bool = False

    @property
    def success(self) -> bool:
        return self.final_ae is not None

    @property
    def dimension(self) -> int:
        return self.index.size


class AttackError(RuntimeError):
    """Attack aborted mid-run; carries whatever history was collected."""

    def __init__(self, message: str, partial_log: list[QueryLogEntry] | None = None):
        super().__init__(message)
        self.partial_log = partial_log or []


def run_attack(
    image: Image,
    oracle: Oracle,
    attention_source: ProxyModel | AttentionMap | None,
    config: AttackConfig = AttackConfig(),
) -> AttackReport:
    """Run the full pipeline against one image and assemble the report.

    Offspring are evaluated concurrently only when config.workers > 1 and
    the oracle declares itself safe for concurrent queries; otherwise all
    evaluations serialize.
    """
    counting = CountingOracle(oracle)
    started = time.perf_counter()

    clean = counting.classify(image)
    original_class = clean.predicted_class
    clean_confidence = clean.confidence(original_class)

    amap: AttentionMap | None = None
    if config.use_attention:
        if attention_source is None:
            raise ValueError("attention enabled but no proxy model or map supplied")
        if isinstance(attention_source, ProxyModel):
            amap = compute_cam(attention_source, image)
        else:
            amap = attention_source

    mask, fallback = masking.build_attack_mask(
        image.height,
        image.width,
        amap,
        use_attention=config.use_attention,
        use_parity=config.use_parity,
        segment=config.parity_segment,
    )
    if mask.popcount == 0:
        raise ValueError("no attackable pixels even after fallback")

    problem = build_problem(
        image,
        counting,
        mask,
        original_class,
        clean_confidence,
        delta_max=config.delta_max,
    )
    moea_cfg = config.moea_config()
    workers = config.workers if counting.concurrency_safe else 1
    try:
        result = run_nsga2(problem.bounded(config.max_evaluations), moea_cfg, workers=workers)
    except EvaluationError as exc:
        raise AttackError(str(exc), partial_log=problem.raw_log) from exc

    # Canonical log in engine evaluation order (identical to raw order when
    # evaluations were serial).
    log = [
        QueryLogEntry(rec.index, rec.objectives[0], rec.objectives[1], *problem.response_for(rec.genome))
        for rec in result.history
    ]

    final_objs = [ind.objectives for ind in result.population]
    front_ids = fast_nondominated_sort(final_objs)[0]
    front = [
        (
            result.population[i].objectives[0],
            result.population[i].objectives[1],
            result.population[i].genome.copy(),
        )
        for i in front_ids
    ]
    front_eval_ids = [result.population[i].eval_index for i in front_ids]
    front_entries = [log[k] for k in front_eval_ids]

    allowed = front_eval_ids if config.final_ae_scope == "front" else None
    winner = select_final_ae(log, original_class, allowed=allowed)
    final_ae = None
    if winner is not None:
        genome = result.history[winner.eval_index].genome
        pert = SparsePerturbation.from_genome(genome)
        attacked = apply_perturbation(image, pert, problem.index)
        final_ae = FinalAE(
            image=attacked,
            perturbation=effective_perturbation(image, pert, problem.index),
            predicted_class=winner.predicted_class,
            confidence=winner.predicted_confidence,
            f2=winner.f2,
            eval_index=winner.eval_index,
        )

    return AttackReport(
        history=result.history,
        log=log,
        front=front,
        front_entries=front_entries,
        final_ae=final_ae,
        query_count=counting.query_count,
        wall_time=time.perf_counter() - started,
        config=config,
        original_class=original_class,
        clean_confidence=clean_confidence,
        mask=mask,
        index=problem.index,
        attention_fallback=fallback,
    )
