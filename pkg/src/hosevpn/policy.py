"""Minimum-bandwidth path selection with failover among pre-provisioned paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .topology import PathSpec


@dataclass
class CandidatePath:
    path: PathSpec
    allocated_bw: float
    alive: bool = True

    def __post_init__(self):
        if not self.allocated_bw > 0:
            raise ValueError(f"path {self.label!r}: allocated bandwidth must be positive")

    @property
    def label(self) -> str:
        return self.path.label


@dataclass
class PathTable:
    candidates: list = field(default_factory=list)
    selected: Optional[int] = None

    def __post_init__(self):
        labels = [c.label for c in self.candidates]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate path labels in {labels}")

    @property
    def current(self) -> Optional[CandidatePath]:
        return None if self.selected is None else self.candidates[self.selected]

    def by_label(self, label: str) -> CandidatePath:
        for c in self.candidates:
            if c.label == label:
                return c
        raise KeyError(label)


def select_path(table: PathTable, demand: float) -> Optional[CandidatePath]:
    """Best fit: the alive candidate with the least allocation that still covers ``demand``.

    Ties go to the smallest label.  Records the choice in ``table.selected``.
    """
    if demand < 0:
        raise ValueError("demand must be >= 0")
    best = None
    for i, c in enumerate(table.candidates):
        if not c.alive or c.allocated_bw < demand:
            continue
        if best is None or (c.allocated_bw, c.label) < (table.candidates[best].allocated_bw, table.candidates[best].label):
            best = i
    table.selected = best
    return table.current


def handle_path_failure(table: PathTable, failed: CandidatePath, demand: float) -> Optional[CandidatePath]:
    if failed not in table.candidates:
        raise ValueError(f"path {failed.label!r} is not in this table")
    failed.alive = False
    return select_path(table, demand)
