"""Experiment grid runner and result aggregation.

Every (machine, strategy, budget, trial) cell gets its own seed, derived by
hashing the cell coordinates with the base seed, so results are independent
of execution order. The initial reference model is built once per machine
(seeded from the machine name) and copied into each trial; all methods and
budgets start from the same model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import ResultRow, load_dataset, write_result_rows
from .engine import DatasetOracle, DecisionRecord, EngineConfig, TrialLog, initialize_engine
from .metrics import ci95, evaluate_log, harmonic_mean
from .reference import KMeansConfig, build_initial_reference
from .scoring import ScorerConfig, augmented_score
from .strategies import StrategyConfig
from .types import Label, Sample, TrialError

METRIC_NAMES = ["auc_source", "auc_target", "auc_mixed", "pauc_source", "pauc_target", "pauc_mixed"]


@dataclass(frozen=True)
class ExperimentConfig:
    train_path: str | None = None
    test_path: str | None = None
    strategies: tuple[str, ...] = ("hybrid", "random", "qbc")
    budgets: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    trials: int = 10
    seed: int = 0
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    strategy_params: StrategyConfig = field(default_factory=StrategyConfig)
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    initial_quantile: float = 0.9
    pauc_fpr: float = 0.1
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.budgets:
            raise ValueError("need at least one budget")
        for b in self.budgets:
            if not 0.0 <= b < 1.0:
                raise ValueError(f"budgets must be in [0, 1), got {b}")
        if not self.strategies:
            raise ValueError("need at least one strategy")


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 64-bit seed from the base seed and cell coordinates."""
    key = "|".join([str(int(base_seed))] + [repr(p) if isinstance(p, float) else str(p) for p in parts])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _group_by_machine(samples: list[Sample]) -> dict[str, list[Sample]]:
    groups: dict[str, list[Sample]] = {}
    for s in samples:
        groups.setdefault(s.machine, []).append(s)
    return groups


def _machine_reference(train: list[Sample], kmeans_cfg: KMeansConfig):
    source = [s.embedding for s in train if s.label == Label.NORMAL and s.domain.value == "source"]
    target = [s.embedding for s in train if s.label == Label.NORMAL and s.domain.value == "target"]
    refs = build_initial_reference(source, target, kmeans_cfg)
    labeled = source + target
    return refs, labeled


def run_experiment_samples(train: list[Sample], test: list[Sample], cfg: ExperimentConfig) -> list[ResultRow]:
    """Run the full grid over in-memory datasets; rows come back sorted."""
    train_by_machine = _group_by_machine(train)
    test_by_machine = _group_by_machine(test)
    machines = sorted(test_by_machine)
    missing = [m for m in machines if m not in train_by_machine]
    if missing:
        raise ValueError(f"no training data for machines: {missing}")

    rows: list[ResultRow] = []
    for machine in machines:
        kmeans_cfg = replace(cfg.kmeans, seed=derive_seed(cfg.seed, machine, "reference"))
        refs_base, labeled_normals = _machine_reference(train_by_machine[machine], kmeans_cfg)
        oracle = DatasetOracle(test_by_machine[machine])
        for strategy in cfg.strategies:
            for budget in cfg.budgets:
                for trial in range(cfg.trials):
                    trial_seed = derive_seed(cfg.seed, machine, strategy, float(budget), trial)
                    try:
                        rows.append(
                            _run_trial(
                                machine, strategy, budget, trial, trial_seed,
                                refs_base, labeled_normals, test_by_machine[machine], oracle, cfg,
                            )
                        )
                    except Exception as exc:
                        raise TrialError(
                            f"trial failed: machine={machine} strategy={strategy} "
                            f"budget={budget} trial={trial}: {exc}"
                        ) from exc
    rows.sort(key=ResultRow.sort_key)
    return rows


def _run_trial(machine, strategy, budget, trial, trial_seed, refs_base, labeled_normals,
               test_samples, oracle, cfg: ExperimentConfig) -> ResultRow:
    shuffle_seed, strategy_seed = (
        int(s) for s in np.random.SeedSequence(trial_seed).generate_state(2, dtype=np.uint64)
    )
    order = np.random.default_rng(shuffle_seed).permutation(len(test_samples))
    stream = [test_samples[i] for i in order]

    engine_cfg = EngineConfig(
        scorer=cfg.scorer,
        strategy=replace(cfg.strategy_params, name=strategy if budget > 0 else cfg.strategy_params.name, budget=budget),
        initial_quantile=cfg.initial_quantile,
    )
    engine = initialize_engine(refs_base.copy(), labeled_normals, engine_cfg, oracle, seed=strategy_seed)
    log = engine.run_stream(stream)
    metrics = evaluate_log(log, p=cfg.pauc_fpr)
    return ResultRow(
        machine=machine,
        strategy=strategy,
        budget=float(budget),
        trial=trial,
        seed=trial_seed,
        auc_source=metrics["auc_source"],
        auc_target=metrics["auc_target"],
        auc_mixed=metrics["auc_mixed"],
        pauc_source=metrics["pauc_source"],
        pauc_target=metrics["pauc_target"],
        pauc_mixed=metrics["pauc_mixed"],
        query_fraction=log.query_fraction,
        n_normal_final=log.n_normal_final,
        n_anomalous_final=log.n_anomalous_final,
    )


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Load datasets from the configured paths, run the grid, persist results."""
    if not cfg.train_path or not cfg.test_path:
        raise ValueError("train_path and test_path are required")
    train = load_dataset(cfg.train_path)
    test = load_dataset(cfg.test_path)
    rows = run_experiment_samples(train, test, cfg)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_result_rows(out / "results.csv", rows)
        (out / "summary.json").write_text(dump_summary(report(rows)), encoding="utf-8")
    return rows


def _mean_ci(values: list[float | None]) -> dict:
    present = [v for v in values if v is not None]
    if not present:
        return {"mean": None, "ci95": None, "n": 0}
    mean, half = ci95(present)
    return {"mean": mean, "ci95": half, "n": len(present)}


def report(rows: list[ResultRow]) -> dict:
    """Aggregate result rows into per-cell means/CIs and per-(strategy, budget)
    harmonic means across machines."""
    if not rows:
        raise ValueError("no rows to report")
    by_cell: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        by_cell.setdefault((r.strategy, r.budget, r.machine), []).append(r)

    cells = []
    machine_means: dict[tuple, dict[str, dict[str, float | None]]] = {}
    for (strategy, budget, machine) in sorted(by_cell):
        group = by_cell[(strategy, budget, machine)]
        cell = {"strategy": strategy, "budget": budget, "machine": machine, "trials": len(group)}
        for name in METRIC_NAMES:
            cell[name] = _mean_ci([getattr(r, name) for r in group])
        cell["query_fraction"] = _mean_ci([r.query_fraction for r in group])
        cells.append(cell)
        machine_means.setdefault((strategy, budget), {})[machine] = {
            name: cell[name]["mean"] for name in METRIC_NAMES
        }

    aggregates = []
    for (strategy, budget) in sorted(machine_means):
        agg = {"strategy": strategy, "budget": budget}
        per_machine = machine_means[(strategy, budget)]
        for name in METRIC_NAMES:
            means = [m[name] for m in per_machine.values() if m[name] is not None]
            if means and all(v > 0 for v in means):
                agg[name] = {"harmonic_mean": harmonic_mean(means), "machines": len(means)}
            else:
                agg[name] = {"harmonic_mean": None, "machines": len(means)}
        aggregates.append(agg)

    return {"cells": cells, "aggregates": aggregates}


def dump_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def offline_report(train: list[Sample], test: list[Sample], cfg: ExperimentConfig) -> dict:
    """One-shot scoring of a test set against the initial model per machine,
    without any stream updates."""
    from .engine import TrialLog
    from .types import Domain  # local import keeps module deps one-way

    train_by_machine = _group_by_machine(train)
    test_by_machine = _group_by_machine(test)
    out = {}
    for machine in sorted(test_by_machine):
        if machine not in train_by_machine:
            raise ValueError(f"no training data for machine {machine}")
        kmeans_cfg = replace(cfg.kmeans, seed=derive_seed(cfg.seed, machine, "reference"))
        refs, _ = _machine_reference(train_by_machine[machine], kmeans_cfg)
        records = []
        from .engine import DecisionRecord

        for i, s in enumerate(test_by_machine[machine]):
            records.append(
                DecisionRecord(
                    sample_id=s.id,
                    arrival_index=i,
                    score=augmented_score(s.embedding, refs, cfg.scorer),
                    queried=False,
                    oracle_label=None,
                    truth_label=s.label,
                    domain=s.domain,
                    machine=machine,
                )
            )
        log = TrialLog(records=records, n_normal_final=refs.n_normal,
                       n_anomalous_final=0, query_fraction=0.0, seed=cfg.seed)
        out[machine] = evaluate_log(log, p=cfg.pauc_fpr)
    return out
