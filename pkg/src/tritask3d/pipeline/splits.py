"""Grade-stratified five-fold cross-validation splits."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..datamodel import Grade

N_FOLDS = 5


def five_fold_split(
    cases: list[tuple[str, Grade]], seed: int = 0
) -> list[tuple[list[str], list[str]]]:
    """Five disjoint (train, val) case-id splits stratified by grade.

    Every case lands in exactly one validation fold; within each grade the
    shuffled cases are dealt round-robin so fold sizes stay balanced.
    """
    by_grade: dict[Grade, list[str]] = {Grade.HGG: [], Grade.LGG: []}
    for case_id, grade in cases:
        by_grade[Grade(grade)].append(case_id)
    for grade, ids in by_grade.items():
        if ids and len(ids) < N_FOLDS:
            raise ValueError(f"need at least {N_FOLDS} {grade.value} cases, got {len(ids)}")

    rng = np.random.default_rng(seed)
    fold_val: list[list[str]] = [[] for _ in range(N_FOLDS)]
    for grade in (Grade.HGG, Grade.LGG):
        ids = sorted(by_grade[grade])
        rng.shuffle(ids)
        for i, case_id in enumerate(ids):
            fold_val[i % N_FOLDS].append(case_id)

    all_ids = {cid for cid, _ in cases}
    splits = []
    for val in fold_val:
        train = sorted(all_ids - set(val))
        splits.append((train, sorted(val)))
    return splits


def save_splits(splits: list[tuple[list[str], list[str]]], path: str | Path) -> None:
    payload = [{"train": train, "val": val} for train, val in splits]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_splits(path: str | Path) -> list[tuple[list[str], list[str]]]:
    payload = json.loads(Path(path).read_text())
    return [(fold["train"], fold["val"]) for fold in payload]
