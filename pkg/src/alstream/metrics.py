"""Ranking metrics over trial logs: AUC, partial AUC, splits, aggregation.

Two independent routes to the same area are kept side by side on purpose:
``auc`` counts score pairs (rank statistic, ties worth 0.5) while
``trapezoidal_auc`` integrates the ROC polyline (ties become diagonal
segments). They must agree to floating-point noise; the tests hold them
against each other.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .engine import TrialLog
from .types import Domain, Label

DEFAULT_PAUC_FPR = 0.1


def _validated(anomaly_scores, normal_scores) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(anomaly_scores, dtype=np.float64)
    n = np.asarray(normal_scores, dtype=np.float64)
    if a.size == 0 or n.size == 0:
        raise ValueError("AUC undefined: need at least one score per class")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        raise ValueError("scores must be finite")
    return a, n


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group's average rank."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg = ends - (counts - 1) / 2.0
    return avg[inverse]


def auc(anomaly_scores, normal_scores) -> float:
    """Probability that a random anomaly outscores a random normal, ties 0.5."""
    a, n = _validated(anomaly_scores, normal_scores)
    ranks = _average_ranks(np.concatenate([a, n]))
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return u / (a.size * n.size)


def roc_curve(anomaly_scores, normal_scores) -> tuple[np.ndarray, np.ndarray]:
    """ROC vertices from (0, 0) to (1, 1), threshold rule ``score >= t``.

    Tied scores advance both rates in one step, so ties appear as diagonal
    segments in the polyline.
    """
    a, n = _validated(anomaly_scores, normal_scores)
    scores = np.concatenate([a, n])
    truths = np.concatenate([np.ones(a.size), np.zeros(n.size)])
    order = np.argsort(-scores, kind="mergesort")
    scores = scores[order]
    truths = truths[order]
    # last index of each run of equal scores = one ROC vertex
    is_boundary = np.append(scores[1:] != scores[:-1], True)
    tps = np.cumsum(truths)[is_boundary]
    fps = np.cumsum(1.0 - truths)[is_boundary]
    tpr = np.concatenate([[0.0], tps / a.size])
    fpr = np.concatenate([[0.0], fps / n.size])
    return fpr, tpr


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0)


def trapezoidal_auc(anomaly_scores, normal_scores) -> float:
    """Full area under the ROC polyline."""
    fpr, tpr = roc_curve(anomaly_scores, normal_scores)
    return _trapezoid(tpr, fpr)


def _clip_curve_at(fpr: np.ndarray, tpr: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Restrict the polyline to fpr <= p, interpolating the crossing point."""
    idx = int(np.searchsorted(fpr, p, side="right"))
    cf, ct = fpr[:idx], tpr[:idx]
    if cf[-1] < p:
        f0, f1 = fpr[idx - 1], fpr[idx]
        t0, t1 = tpr[idx - 1], tpr[idx]
        tp = t0 + (p - f0) * (t1 - t0) / (f1 - f0)
        cf = np.append(cf, p)
        ct = np.append(ct, tp)
    return cf, ct


def pauc(anomaly_scores, normal_scores, p: float = DEFAULT_PAUC_FPR, standardize: bool = True) -> float:
    """Partial AUC over false-positive rates [0, p].

    The raw strip area is remapped (standardize=True) so a chance-level
    ranker scores 0.5 and a perfect one 1.0:
    0.5 * (1 + (area - p^2/2) / (p - p^2/2)).
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    fpr, tpr = roc_curve(anomaly_scores, normal_scores)
    cf, ct = _clip_curve_at(fpr, tpr, p)
    area = _trapezoid(ct, cf)
    if not standardize:
        return area
    worst = p * p / 2.0
    return 0.5 * (1.0 + (area - worst) / (p - worst))


def harmonic_mean(values) -> float:
    """n / sum(1/x); defined for strictly positive inputs only."""
    v = list(values)
    if not v:
        raise ValueError("harmonic mean of empty collection")
    if any(x <= 0 for x in v):
        raise ValueError("harmonic mean requires strictly positive values")
    return len(v) / math.fsum(1.0 / x for x in v)


def ci95(values) -> tuple[float, float | None]:
    """Mean and normal-approximation 95% half-width; half-width None if n < 2."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ValueError("ci95 of empty collection")
    mean = float(v.mean())
    if v.size < 2:
        return mean, None
    half = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return mean, half


class ScorePair(NamedTuple):
    anomaly_scores: np.ndarray
    normal_scores: np.ndarray


def split_by_domain(log: TrialLog) -> dict[str, ScorePair | None]:
    """Source/target/mixed score pairs from a trial log.

    Each domain's normals are ranked against all anomalies regardless of
    domain (anomalies are not split). A split missing either class is
    reported as None, not as a zero score.
    """
    if not log.records:
        raise ValueError("trial log has no records")
    anomalies = [r.score for r in log.records if r.truth_label == Label.ANOMALOUS]
    normals = {
        "source": [r.score for r in log.records if r.truth_label == Label.NORMAL and r.domain == Domain.SOURCE],
        "target": [r.score for r in log.records if r.truth_label == Label.NORMAL and r.domain == Domain.TARGET],
    }
    normals["mixed"] = normals["source"] + normals["target"]
    out: dict[str, ScorePair | None] = {}
    for name, norm in normals.items():
        if anomalies and norm:
            out[name] = ScorePair(np.array(anomalies), np.array(norm))
        else:
            out[name] = None
    return out


def evaluate_log(log: TrialLog, p: float = DEFAULT_PAUC_FPR) -> dict[str, float | None]:
    """AUC and pAUC per domain split; None where a split is absent."""
    result: dict[str, float | None] = {}
    for name, pair in split_by_domain(log).items():
        if pair is None:
            result[f"auc_{name}"] = None
            result[f"pauc_{name}"] = None
        else:
            result[f"auc_{name}"] = auc(pair.anomaly_scores, pair.normal_scores)
            result[f"pauc_{name}"] = pauc(pair.anomaly_scores, pair.normal_scores, p)
    return result
