"""Detection-rate metrics: P@0.5 and the eight-heading breakdown."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from advlayout.errors import InvalidArgumentError

HEADINGS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
SECTOR_DEGREES = 45.0


@dataclass(frozen=True)
class EvalRecord:
    view_id: int
    yaw_degrees: float
    detected: bool
    objectness: float
    class_id: int

    def __post_init__(self) -> None:
        if not 0 <= self.yaw_degrees < 360:
            raise InvalidArgumentError(f"yaw must lie in [0, 360), got {self.yaw_degrees}")


def _counts(records: Sequence[EvalRecord], tau: float, target_class: int) -> int:
    return sum(1 for r in records if r.class_id == target_class and r.objectness > tau)


def p_at_05(records: Sequence[EvalRecord], tau: float = 0.5, target_class: int = 0) -> float:
    """Percentage of records where the target class is still detected above ``tau``.

    Detection is recomputed from objectness and class; the records'
    ``detected`` flag is not consulted.
    """
    if not records:
        raise InvalidArgumentError("p_at_05 needs at least one record")
    return 100.0 * _counts(records, tau, target_class) / len(records)


def format_percentage(value: float) -> str:
    return f"{value:.2f}"


def heading_of(yaw_degrees: float) -> str:
    # sector k covers [45k - 22.5, 45k + 22.5), wrapping at 360
    shifted = math.fmod(yaw_degrees + SECTOR_DEGREES / 2, 360.0)
    if shifted < 0:
        shifted += 360.0
    return HEADINGS[int(shifted // SECTOR_DEGREES) % 8]


@dataclass(frozen=True)
class DirectionTable:
    """P@0.5 per compass heading; headings without records are absent."""

    percent: dict[str, float]
    counts: dict[str, int]

    def rows(self) -> list[tuple[str, int, float]]:
        return [(h, self.counts[h], self.percent[h]) for h in HEADINGS if h in self.counts]

    def format(self) -> str:
        return "\n".join(f"{h:>2}  n={n:<4d} P@0.5 = {format_percentage(p)}" for h, n, p in self.rows())


def group_by_heading(
    records: Iterable[EvalRecord], tau: float = 0.5, target_class: int = 0
) -> DirectionTable:
    bins: dict[str, list[EvalRecord]] = {}
    for r in records:
        bins.setdefault(heading_of(r.yaw_degrees), []).append(r)
    percent = {h: p_at_05(recs, tau, target_class) for h, recs in bins.items()}
    counts = {h: len(recs) for h, recs in bins.items()}
    return DirectionTable(percent, counts)


RECORD_FIELDS = ("view_id", "yaw_degrees", "detected", "objectness", "class_id")


def records_to_csv(records: Sequence[EvalRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in records:
        writer.writerow([r.view_id, repr(float(r.yaw_degrees)), int(r.detected),
                         repr(float(r.objectness)), r.class_id])
    return buf.getvalue()


def records_from_csv(text: str) -> list[EvalRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
        raise InvalidArgumentError("not an evaluation records CSV")
    return [
        EvalRecord(int(row["view_id"]), float(row["yaw_degrees"]), row["detected"] == "1",
                   float(row["objectness"]), int(row["class_id"]))
        for row in reader
    ]
