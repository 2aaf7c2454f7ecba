"""Dataset and result file formats.

Datasets are UTF-8 CSV with the exact header ``id,machine,domain,label,
e0,...,e{D-1}``; domain is ``source``/``target``, label is 0/1, one file may
hold many machines. Floats round-trip exactly (shortest-repr formatting),
so write-then-read reproduces embeddings bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .types import DataError, Domain, Label, Sample, as_embedding

DATASET_FIXED_COLUMNS = ["id", "machine", "domain", "label"]

RESULT_COLUMNS = [
    "machine",
    "strategy",
    "budget",
    "trial",
    "seed",
    "auc_source",
    "auc_target",
    "auc_mixed",
    "pauc_source",
    "pauc_target",
    "pauc_mixed",
    "query_fraction",
    "n_normal_final",
    "n_anomalous_final",
]


def dataset_header(dim: int) -> list[str]:
    return DATASET_FIXED_COLUMNS + [f"e{i}" for i in range(dim)]


def save_dataset(path, samples: Sequence[Sample]) -> None:
    samples = list(samples)
    if not samples:
        raise DataError("refusing to write an empty dataset")
    dim = samples[0].embedding.size
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset_header(dim))
        for s in samples:
            if s.embedding.size != dim:
                raise DataError(f"sample {s.id!r} has dimension {s.embedding.size} != {dim}")
            writer.writerow(
                [s.id, s.machine, s.domain.value, int(s.label)]
                + [repr(float(v)) for v in s.embedding]
            )


def load_dataset(path) -> list[Sample]:
    """Parse and validate a dataset file; errors carry the offending line."""
    path = Path(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[: len(DATASET_FIXED_COLUMNS)] != DATASET_FIXED_COLUMNS or len(header) <= len(DATASET_FIXED_COLUMNS):
            raise DataError(f"{path}: bad header, expected id,machine,domain,label,e0,...")
        dim = len(header) - len(DATASET_FIXED_COLUMNS)
        if header[len(DATASET_FIXED_COLUMNS):] != [f"e{i}" for i in range(dim)]:
            raise DataError(f"{path}: bad embedding columns, expected e0..e{dim - 1}")

        samples: list[Sample] = []
        seen_ids: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            sid, machine, domain_s, label_s = row[:4]
            if sid in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate sample id {sid!r}")
            seen_ids.add(sid)
            try:
                domain = Domain(domain_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: domain must be source|target, got {domain_s!r}") from None
            if label_s not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label_s!r}")
            try:
                values = np.array([float(v) for v in row[4:]], dtype=np.float64)
                embedding = as_embedding(values, dim)
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            samples.append(
                Sample(id=sid, machine=machine, domain=domain, label=Label(int(label_s)), embedding=embedding)
            )
    if not samples:
        raise DataError(f"{path}: no samples")
    return samples


@dataclass(frozen=True)
class ResultRow:
    """One (machine, strategy, budget, trial) outcome."""

    machine: str
    strategy: str
    budget: float
    trial: int
    seed: int
    auc_source: float | None
    auc_target: float | None
    auc_mixed: float | None
    pauc_source: float | None
    pauc_target: float | None
    pauc_mixed: float | None
    query_fraction: float
    n_normal_final: int
    n_anomalous_final: int

    def sort_key(self):
        return (self.machine, self.strategy, self.budget, self.trial)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_result_rows(path, rows: Iterable[ResultRow]) -> None:
    ordered = sorted(rows, key=ResultRow.sort_key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in ordered:
            writer.writerow([_format_cell(getattr(r, name)) for name in RESULT_COLUMNS])


def read_result_rows(path) -> list[ResultRow]:
    path = Path(path)
    float_fields = {f.name for f in fields(ResultRow) if f.type in ("float", "float | None")}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise DataError(f"{path}: bad results header")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                kwargs = {}
                for name in RESULT_COLUMNS:
                    raw = rec[name]
                    if raw == "":
                        kwargs[name] = None
                    elif name in float_fields:
                        kwargs[name] = float(raw)
                    elif name in ("trial", "seed", "n_normal_final", "n_anomalous_final"):
                        kwargs[name] = int(raw)
                    else:
                        kwargs[name] = raw
                rows.append(ResultRow(**kwargs))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no result rows")
    return rows
