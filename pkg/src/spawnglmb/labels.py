"""Lineage-encoding track labels.

A track label is a flat sequence of integers alternating (time, index)
pairs.  The first pair records the birth event; every later pair records a
spawn event appended to the parent's label, so the full ancestry of a track
is recoverable from its label alone.  A label printed as ``1,1,10,1,56,1``
denotes a track spawned at scan 56 by the track spawned at scan 10 by the
track born at scan 1 with birth index 1.

Labels are immutable, hashable and totally ordered (lexicographically over
the flattened integer sequence), which gives a deterministic enumeration
order wherever label sets are iterated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping


@dataclass(frozen=True, order=True)
class Label:
    """Track identity carrying full lineage.

    ``path`` is a flat tuple ``(t1, i1, t2, i2, ...)`` with strictly
    increasing times ``t1 < t2 < ...``; its length is always even and at
    least 2.  ``generation`` equals the number of spawn events, i.e.
    ``len(path) // 2 - 1``.
    """

    path: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.path) < 2 or len(self.path) % 2 != 0:
            raise ValueError(f"label path must be a non-empty sequence of pairs: {self.path}")
        times = self.path[0::2]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError(f"label times must strictly increase: {self.path}")
        if any(i < 1 for i in self.path[1::2]):
            raise ValueError(f"label indices must be >= 1: {self.path}")
        object.__setattr__(self, "_hash", hash(self.path))

    def __hash__(self) -> int:  # labels are hashed heavily as dict keys
        return self._hash

    @property
    def birth_time(self) -> int:
        return self.path[0]

    @property
    def last_time(self) -> int:
        """Time of the most recent birth/spawn event encoded in the label."""
        return self.path[-2]

    @property
    def generation(self) -> int:
        return len(self.path) // 2 - 1

    def event_times(self) -> tuple[int, ...]:
        """All event times along the lineage, birth first."""
        return self.path[0::2]

    def __str__(self) -> str:
        return format_label(self)


def make_birth_label(time: int, index: int) -> Label:
    """Label for a track born spontaneously at scan ``time``."""
    if index < 1:
        raise ValueError(f"birth index must be >= 1, got {index}")
    return Label((int(time), int(index)))


def make_spawn_label(parent: Label, time: int, index: int) -> Label:
    """Label for a track spawned by ``parent`` at scan ``time``."""
    if time <= parent.last_time:
        raise ValueError(
            f"spawn time {time} must exceed parent's last event time {parent.last_time}"
        )
    if index < 1:
        raise ValueError(f"spawn index must be >= 1, got {index}")
    return Label(parent.path + (int(time), int(index)))


def ancestor(label: Label) -> Label | None:
    """Parent label, or None for generation-0 (birth) labels."""
    if label.generation == 0:
        return None
    return Label(label.path[:-2])


def root(label: Label) -> Label:
    """Generation-0 ancestor at the base of the lineage."""
    return Label(label.path[:2])


def spawn_label_space(
    parents: Iterable[Label],
    next_time: int,
    count: int | Mapping[Label, int] = 1,
) -> tuple[Label, ...]:
    """All spawn labels that parents may generate at ``next_time``.

    ``count`` is the per-parent number of simultaneous spawn slots, either a
    shared integer or a per-parent mapping.  The result is sorted in
    canonical (lexicographic) order.
    """
    out = []
    for parent in parents:
        m = count[parent] if isinstance(count, Mapping) else count
        if m < 0:
            raise ValueError(f"per-parent spawn count must be >= 0, got {m}")
        out.extend(make_spawn_label(parent, next_time, j) for j in range(1, m + 1))
    return tuple(sorted(out))


@dataclass(frozen=True)
class LabelSpacePartition:
    """Disjoint split of labels into surviving / new-birth / new-spawn sets."""

    surviving: frozenset[Label]
    births: frozenset[Label]
    spawns: frozenset[Label]


def classify(label: Label, time: int) -> str:
    """Which sub-space a label belongs to at scan ``time``.

    Returns ``"birth"`` for a generation-0 label born at ``time``,
    ``"spawn"`` for a label whose latest spawn event is at ``time`` and
    ``"surviving"`` for labels whose last event predates ``time``.
    """
    if label.last_time == time:
        return "birth" if label.generation == 0 else "spawn"
    if label.last_time < time:
        return "surviving"
    raise ValueError(f"label {label} has events after scan {time}")


def partition(labels: Iterable[Label], time: int) -> LabelSpacePartition:
    groups: dict[str, set[Label]] = {"surviving": set(), "birth": set(), "spawn": set()}
    for lab in labels:
        groups[classify(lab, time)].add(lab)
    return LabelSpacePartition(
        surviving=frozenset(groups["surviving"]),
        births=frozenset(groups["birth"]),
        spawns=frozenset(groups["spawn"]),
    )


def format_label(label: Label) -> str:
    """Comma-joined integer form, e.g. ``"1,1,10,1,56,1"``."""
    return ",".join(str(v) for v in label.path)


def parse_label(text: str) -> Label:
    """Inverse of :func:`format_label`."""
    try:
        values = tuple(int(tok) for tok in text.strip().strip("()").split(","))
    except ValueError as exc:
        raise ValueError(f"malformed label text {text!r}") from exc
    return Label(values)
