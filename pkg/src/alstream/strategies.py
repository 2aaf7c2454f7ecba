"""Query-decision strategies and the shared spent-budget tracker.

Three policies decide, sample by sample, whether to spend one unit of the
labeling budget:

  hybrid   adaptive-threshold least-certainty sampling mixed with random
           sampling through the spent/budget gate (the proposed policy)
  random   query with probability equal to the budget, ignoring the sample
  qbc      query-by-committee uncertainty against a balancing incremental
           quantile filter

All three account spent budget the same way: a length-``window`` moving
average of the 0/1 query indicator, updated after every decision.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .scoring import _MemberBuffer
from .types import Label, as_embedding


@dataclass
class BudgetTracker:
    """Moving-average estimate of the realized query fraction.

    spent <- ((window - 1) * spent + indicator) / window after every decision,
    queried or not. The update is a convex combination, so spent stays in
    [0, 1] for any decision sequence.
    """

    budget: float
    window: int = 200
    spent: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.budget <= 1.0:
            raise ValueError(f"budget must be in [0, 1], got {self.budget}")
        if self.window < 1:
            raise ValueError("window must be a positive integer")
        if not 0.0 <= self.spent <= 1.0:
            raise ValueError("spent must start in [0, 1]")

    def update(self, queried: bool) -> float:
        cost = 1.0 if queried else 0.0
        self.spent = ((self.window - 1) * self.spent + cost) / self.window
        return self.spent


class Strategy:
    """Base query policy. Subclasses own their mutable state and a private
    seeded random stream; one instance serves exactly one trial."""

    tracker: BudgetTracker

    def decide(self, score: float, embedding: np.ndarray) -> bool:
        raise NotImplementedError

    def observe_label(self, embedding: np.ndarray, label: Label) -> None:
        """Called after the oracle labels a queried sample. Default: ignore."""


class NeverQueryStrategy(Strategy):
    """Offline baseline: never spends budget, the model never updates."""

    def __init__(self, window: int = 200):
        self.tracker = BudgetTracker(budget=0.0, window=window)

    def decide(self, score: float, embedding: np.ndarray) -> bool:
        self.tracker.update(False)
        return False


class RandomStrategy(Strategy):
    """Query with probability ``budget``, independent of the sample."""

    def __init__(self, budget: float, window: int = 200, seed: int = 0):
        self.tracker = BudgetTracker(budget=budget, window=window)
        self._rng = np.random.default_rng(seed)

    def decide(self, score: float, embedding: np.ndarray) -> bool:
        queried = bool(self._rng.random() < self.tracker.budget)
        self.tracker.update(queried)
        return queried


class HybridStrategy(Strategy):
    """Certainty-based sampling with an adaptive threshold and a random
    component, gated by the spent-budget estimate.

    While spent < budget: scores above the threshold are queried outright
    (least certainty); otherwise a uniform draw eta queries iff
    eta > spent/budget, so the random component fades as budget is consumed.
    Either way the threshold is then raised by (1 + alpha). Once spent
    reaches the budget, nothing is queried and the threshold decays by
    (1 - alpha). The threshold therefore stays strictly positive forever.

    ``upsilon`` switches to the fixed-mixing variant: a draw eta picks the
    least-certainty rule when eta > upsilon and the probability-``budget``
    random rule otherwise, replacing the adaptive spent/budget gate.
    """

    def __init__(
        self,
        threshold: float,
        budget: float,
        alpha: float = 0.01,
        window: int = 200,
        seed: int = 0,
        upsilon: float | None = None,
    ):
        if threshold <= 0:
            raise ValueError("threshold must be > 0 (multiplicative updates)")
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        if budget <= 0.0:
            raise ValueError("hybrid strategy needs a positive budget")
        if upsilon is not None and not 0.0 <= upsilon < 1.0:
            raise ValueError("upsilon must be in [0, 1)")
        self.threshold = threshold
        self.alpha = alpha
        self.upsilon = upsilon
        self.tracker = BudgetTracker(budget=budget, window=window)
        self._rng = np.random.default_rng(seed)

    def decide(self, score: float, embedding: np.ndarray) -> bool:
        t = self.tracker
        if t.spent < t.budget:
            if self.upsilon is None:
                if score > self.threshold:
                    queried = True
                else:
                    # draw only on the branch that needs it: seeded replays
                    # stay branch-stable
                    eta = self._rng.random()
                    queried = bool(eta > t.spent / t.budget)
            else:
                eta = self._rng.random()
                if eta > self.upsilon:
                    queried = score > self.threshold
                else:
                    queried = bool(self._rng.random() < t.budget)
            self.threshold *= 1.0 + self.alpha
        else:
            self.threshold *= 1.0 - self.alpha
            queried = False
        t.update(queried)
        return queried


def qbc_uncertainty(member_scores) -> float:
    """Committee disagreement: mean absolute deviation from the mean score."""
    scores = np.asarray(member_scores, dtype=np.float64)
    if scores.size < 2:
        raise ValueError("committee uncertainty needs at least 2 member scores")
    if not np.all(np.isfinite(scores)):
        raise ValueError("member scores must be finite")
    return float(np.mean(np.abs(scores - scores.mean())))


class QbcStrategy(Strategy):
    """Query-by-committee with a balancing incremental quantile filter.

    Each committee member scores the sample against its own normal reference
    subset; the spread of those scores is the uncertainty. A sample is queried
    when the accumulated balance affords a full query (+budget per sample,
    -1 per query) and its uncertainty reaches the (1 - budget) empirical
    quantile of the recent-uncertainty window.

    Committees grow incrementally: each oracle-labeled normal joins every
    member subset independently with probability ``inclusion_rate``. With
    ``rebuild=True`` the subsets are instead redrawn from the full labeled
    pool after every labeled normal.
    """

    def __init__(
        self,
        labeled_normals,
        budget: float,
        committee_size: int = 10,
        inclusion_rate: float = 0.9,
        uncertainty_capacity: int = 200,
        window: int = 200,
        seed: int = 0,
        rebuild: bool = False,
    ):
        if committee_size < 2:
            raise ValueError("committee_size must be >= 2")
        if not 0.0 <= inclusion_rate <= 1.0:
            raise ValueError("inclusion_rate must be in [0, 1]")
        pool = [as_embedding(e) for e in labeled_normals]
        if not pool:
            raise ValueError("labeled normal pool must be non-empty")
        self.committee_size = committee_size
        self.inclusion_rate = inclusion_rate
        self.rebuild = rebuild
        self.tracker = BudgetTracker(budget=budget, window=window)
        self.balance = 0.0
        self._window: deque[float] = deque(maxlen=uncertainty_capacity)
        self._rng = np.random.default_rng(seed)
        self._dim = pool[0].size
        self._pool = list(pool)
        self._members = self._draw_members(pool)

    def _draw_members(self, pool: list[np.ndarray]) -> list[_MemberBuffer]:
        members = []
        for _ in range(self.committee_size):
            buf = _MemberBuffer(self._dim, capacity=max(64, len(pool)))
            mask = self._rng.random(len(pool)) < self.inclusion_rate
            for e, keep in zip(pool, mask):
                if keep:
                    buf.append(e)
            if len(buf) == 0:
                # tiny pools can miss every draw; fall back to the full pool
                for e in pool:
                    buf.append(e)
            members.append(buf)
        return members

    def member_scores(self, embedding: np.ndarray) -> np.ndarray:
        e = as_embedding(embedding, self._dim)
        unit = e / np.linalg.norm(e)
        return np.array([1.0 - m.max_cosine(unit) for m in self._members])

    def decide(self, score: float, embedding: np.ndarray) -> bool:
        u = qbc_uncertainty(self.member_scores(embedding))
        self._window.append(u)
        self.balance += self.tracker.budget
        gate = float(np.quantile(np.array(self._window), 1.0 - self.tracker.budget))
        queried = self.balance >= 1.0 and u >= gate
        if queried:
            self.balance -= 1.0
        self.tracker.update(queried)
        return queried

    def observe_label(self, embedding: np.ndarray, label: Label) -> None:
        if label != Label.NORMAL:
            return
        e = as_embedding(embedding, self._dim)
        if self.rebuild:
            self._pool.append(e)
            self._members = self._draw_members(self._pool)
            return
        mask = self._rng.random(self.committee_size) < self.inclusion_rate
        for member, keep in zip(self._members, mask):
            if keep:
                member.append(e)


@dataclass(frozen=True)
class StrategyConfig:
    """Strategy descriptor plus every policy hyperparameter, CLI-addressable."""

    name: str = "hybrid"
    budget: float = 0.1
    alpha: float = 0.01
    window: int = 200
    committee_size: int = 10
    inclusion_rate: float = 0.9
    uncertainty_capacity: int = 200
    upsilon: float | None = None
    qbc_rebuild: bool = False

    def __post_init__(self) -> None:
        if self.name not in ("hybrid", "random", "qbc"):
            raise ValueError(f"unknown strategy {self.name!r}")
        if not 0.0 <= self.budget < 1.0:
            raise ValueError(f"budget must be in [0, 1), got {self.budget}")


def build_strategy(cfg: StrategyConfig, threshold: float, labeled_normals, seed: int) -> Strategy:
    """Instantiate the configured policy for one trial.

    A zero budget always yields the never-query baseline, whatever the name:
    no policy may spend budget that does not exist.
    """
    if cfg.budget == 0.0:
        return NeverQueryStrategy(window=cfg.window)
    if cfg.name == "hybrid":
        return HybridStrategy(
            threshold=threshold,
            budget=cfg.budget,
            alpha=cfg.alpha,
            window=cfg.window,
            seed=seed,
            upsilon=cfg.upsilon,
        )
    if cfg.name == "random":
        return RandomStrategy(budget=cfg.budget, window=cfg.window, seed=seed)
    return QbcStrategy(
        labeled_normals=labeled_normals,
        budget=cfg.budget,
        committee_size=cfg.committee_size,
        inclusion_rate=cfg.inclusion_rate,
        uncertainty_capacity=cfg.uncertainty_capacity,
        window=cfg.window,
        seed=seed,
        rebuild=cfg.qbc_rebuild,
    )
