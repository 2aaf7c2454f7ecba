"""The prequential stream loop.

Each arriving sample is scored against the current reference sets first;
only then may the strategy spend budget on it, and only a queried sample's
oracle label may mutate the reference sets. Every decision is logged with
the pre-update score, so metrics are prequential by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .scoring import ReferenceSets, ScorerConfig, anomaly_similarity, base_score, blend_scores
from .strategies import Strategy, StrategyConfig, build_strategy
from .types import Domain, Label, Sample

# Fallback labeling threshold when every initialization score is zero;
# multiplicative updates cannot move a threshold off exact zero.
MIN_THRESHOLD = 1e-6


def quantile(values, q: float) -> float:
    """Linear-interpolation empirical quantile of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("quantile of empty collection")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    return float(np.quantile(v, q))


@dataclass(frozen=True)
class EngineConfig:
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    initial_quantile: float = 0.9
    # operator-facing decision threshold, recorded in reports only; never
    # gates engine behavior (ranking metrics are threshold-free)
    decision_threshold_phi: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.initial_quantile < 1.0:
            raise ValueError("initial_quantile must be in (0, 1)")


@dataclass(frozen=True)
class DecisionRecord:
    """One per-sample decision, scored before any update the sample causes."""

    sample_id: str
    arrival_index: int
    score: float
    queried: bool
    oracle_label: Label | None
    truth_label: Label
    domain: Domain
    machine: str


@dataclass
class TrialLog:
    records: list[DecisionRecord]
    n_normal_final: int
    n_anomalous_final: int
    query_fraction: float
    seed: int


class DatasetOracle:
    """Annotation oracle backed by dataset ground truth.

    The engine asks for labels only through this seam; a human annotator or
    remote service would attach here.
    """

    def __init__(self, samples: Sequence[Sample]):
        self._labels = {s.id: s.label for s in samples}

    def __call__(self, sample_id: str) -> Label:
        try:
            return self._labels[sample_id]
        except KeyError:
            raise KeyError(f"oracle has no label for sample {sample_id!r}") from None


class StreamEngine:
    """Mutable per-trial state: reference sets, strategy, and the score pool.

    One engine per trial; instances share nothing.
    """

    def __init__(
        self,
        refs: ReferenceSets,
        scorer: ScorerConfig,
        strategy: Strategy,
        oracle: Callable[[str], Label],
        score_pool: list[float],
        seed: int = 0,
    ):
        self.refs = refs
        self.scorer = scorer
        self.strategy = strategy
        self.oracle = oracle
        self.score_pool = score_pool
        self.seed = seed
        self._arrival = 0
        self._queries = 0

    def process_sample(self, x: Sample) -> DecisionRecord:
        a = base_score(x.embedding, self.refs)
        if self.refs.n_anomalous == 0:
            s = a
        else:
            s = blend_scores(a, anomaly_similarity(x.embedding, self.refs), self.scorer.gamma)

        queried = self.strategy.decide(s, x.embedding)
        oracle_label: Label | None = None
        if queried:
            # the oracle call precedes every update: if it fails, the trial
            # aborts with no partial state change for this sample
            y = Label(self.oracle(x.id))
            self.refs.add(x.embedding, y)
            if y == Label.NORMAL:
                self.score_pool.append(a)
            self.strategy.observe_label(x.embedding, y)
            oracle_label = y
            self._queries += 1

        record = DecisionRecord(
            sample_id=x.id,
            arrival_index=self._arrival,
            score=s,
            queried=queried,
            oracle_label=oracle_label,
            truth_label=x.label,
            domain=x.domain,
            machine=x.machine,
        )
        self._arrival += 1
        return record

    def run_stream(self, samples: Sequence[Sample]) -> TrialLog:
        if len(samples) == 0:
            raise ValueError("stream must be non-empty")
        records = [self.process_sample(x) for x in samples]
        return TrialLog(
            records=records,
            n_normal_final=self.refs.n_normal,
            n_anomalous_final=self.refs.n_anomalous,
            query_fraction=self._queries / len(records),
            seed=self.seed,
        )


def initial_threshold(score_pool, q: float) -> float:
    """Labeling threshold from the pool of labeled-normal scores.

    A degenerate all-zero pool (every labeled normal sits inside the
    reference set) falls back to the smallest positive score, or
    MIN_THRESHOLD if there is none.
    """
    h = quantile(score_pool, q)
    if h > 0.0:
        return h
    positive = [m for m in score_pool if m > 0.0]
    return min(positive) if positive else MIN_THRESHOLD


def initialize_engine(
    refs: ReferenceSets,
    labeled_normals,
    cfg: EngineConfig,
    oracle: Callable[[str], Label],
    seed: int = 0,
) -> StreamEngine:
    """Score the labeled normals, derive the labeling threshold, and build
    the configured strategy around it."""
    if refs.n_normal == 0:
        raise ValueError("normal reference set must be non-empty")
    pool_embeddings = list(labeled_normals)
    if not pool_embeddings:
        raise ValueError("labeled normal pool must be non-empty")
    score_pool = [base_score(e, refs) for e in pool_embeddings]
    h = initial_threshold(score_pool, cfg.initial_quantile)
    strategy = build_strategy(cfg.strategy, threshold=h, labeled_normals=pool_embeddings, seed=seed)
    return StreamEngine(
        refs=refs,
        scorer=cfg.scorer,
        strategy=strategy,
        oracle=oracle,
        score_pool=score_pool,
        seed=seed,
    )
