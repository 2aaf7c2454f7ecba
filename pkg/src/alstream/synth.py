"""Seeded synthetic embedding datasets with source/target/anomaly structure.

Each machine is a handful of Gaussian clusters on the unit sphere: a source
cluster, a target cluster shifted off it, and several anomaly clusters
shifted further out along distinct directions. One anomaly cluster sits in
the target direction so part of the anomalies resemble shifted normals.
An optional extra normal cluster appears only in the test split, giving the
stream normals the initial model has never seen.

All randomness flows through per-machine child seeds, and every draw has a
magnitude-independent shape, so changing only the shift magnitudes replays
the identical directions and noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Domain, Label, Sample

_ANOMALY_CLUSTERS = 3  # two free directions plus one near the target cluster


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 128
    machines: int = 7
    source_train: int = 990
    target_train: int = 10
    test_normal_source: int = 50
    test_normal_target: int = 50
    test_anomalous: int = 100
    sigma: float = 0.35
    target_shift: float = 0.55
    anomaly_shift: float = 0.95
    # test-only normal cluster: this fraction of the target test normals is
    # drawn from a cluster at unseen_normal_shift that is absent from training
    unseen_normal_shift: float = 0.0
    unseen_normal_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.machines < 1:
            raise ValueError("dim and machines must be >= 1")
        for name in ("source_train", "target_train", "test_normal_source",
                     "test_normal_target", "test_anomalous"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not self.anomaly_shift > self.target_shift >= 0.0:
            raise ValueError("need anomaly_shift > target_shift >= 0")
        if self.unseen_normal_shift < 0:
            raise ValueError("unseen_normal_shift must be >= 0")
        if not 0.0 <= self.unseen_normal_fraction <= 1.0:
            raise ValueError("unseen_normal_fraction must be in [0, 1]")


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _cluster(rng: np.random.Generator, mean: np.ndarray, sigma: float, n: int) -> np.ndarray:
    points = mean[None, :] + sigma * rng.standard_normal((n, mean.size))
    return _unit_rows(points)


def _machine_samples(machine: str, cfg: SynthConfig, rng: np.random.Generator
                     ) -> tuple[list[Sample], list[Sample]]:
    # fixed number of direction draws, independent of any magnitude
    dirs = _unit_rows(rng.standard_normal((5 + _ANOMALY_CLUSTERS, cfg.dim)))
    mu_source = dirs[0]
    d_target, d_perp, d_unseen = dirs[1], dirs[2], dirs[3]
    anomaly_dirs = list(dirs[4:4 + _ANOMALY_CLUSTERS - 1])
    # last anomaly cluster leans toward the target-normal cluster
    anomaly_dirs.append(_unit_rows((d_target + 0.5 * d_perp)[None, :])[0])

    mu_target = mu_source + cfg.target_shift * d_target
    mu_unseen = mu_source + cfg.unseen_normal_shift * d_unseen
    anomaly_means = [mu_source + cfg.anomaly_shift * d for d in anomaly_dirs]

    def rows(mean: np.ndarray, n: int) -> np.ndarray:
        return _cluster(rng, mean, cfg.sigma, n)

    def make(prefix: str, vectors: np.ndarray, domain: Domain, label: Label) -> list[Sample]:
        return [
            Sample(
                id=f"{machine}-{prefix}-{i:04d}",
                machine=machine,
                domain=domain,
                label=label,
                embedding=vectors[i],
            )
            for i in range(vectors.shape[0])
        ]

    train = make("train-source", rows(mu_source, cfg.source_train), Domain.SOURCE, Label.NORMAL)
    train += make("train-target", rows(mu_target, cfg.target_train), Domain.TARGET, Label.NORMAL)

    test = make("test-source", rows(mu_source, cfg.test_normal_source), Domain.SOURCE, Label.NORMAL)

    # one noise block for all target test normals: the seen/unseen split only
    # moves cluster placement, never the draws
    n_unseen = int(round(cfg.test_normal_target * cfg.unseen_normal_fraction))
    n_seen = cfg.test_normal_target - n_unseen
    noise = cfg.sigma * rng.standard_normal((cfg.test_normal_target, cfg.dim))
    target_vecs = _unit_rows(
        np.concatenate([mu_target + noise[:n_seen], mu_unseen + noise[n_seen:]], axis=0)
    )
    test += make("test-target", target_vecs, Domain.TARGET, Label.NORMAL)

    per_cluster = np.full(_ANOMALY_CLUSTERS, cfg.test_anomalous // _ANOMALY_CLUSTERS)
    per_cluster[: cfg.test_anomalous % _ANOMALY_CLUSTERS] += 1
    pieces = [rows(mean, int(n)) for mean, n in zip(anomaly_means, per_cluster)]
    anomaly_vecs = np.concatenate(pieces, axis=0)
    anomaly_domains = [Domain.SOURCE if i % 2 == 0 else Domain.TARGET
                       for i in range(cfg.test_anomalous)]
    test += [
        Sample(
            id=f"{machine}-test-anomaly-{i:04d}",
            machine=machine,
            domain=anomaly_domains[i],
            label=Label.ANOMALOUS,
            embedding=anomaly_vecs[i],
        )
        for i in range(cfg.test_anomalous)
    ]
    return train, test


def generate(cfg: SynthConfig) -> tuple[list[Sample], list[Sample]]:
    """Generate (train, test) sample lists for every machine; deterministic
    per seed, every embedding unit-norm."""
    train: list[Sample] = []
    test: list[Sample] = []
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.machines)
    for i, child in enumerate(children):
        machine = f"machine{i + 1:02d}"
        rng = np.random.default_rng(child)
        m_train, m_test = _machine_samples(machine, cfg, rng)
        train += m_train
        test += m_test
    return train, test
