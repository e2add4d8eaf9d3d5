"""CSV log formats written by a run."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

GROUND_TRUTH_COLUMNS = ("time_s", "entity_id", "side", "x_m", "y_m", "strength", "concealed")
REPORT_COLUMNS = ("time_s", "x_m", "y_m", "strength", "origin_kind")
INGEST_COLUMNS = ("time_s", "x_m", "y_m", "strength")
ESTIMATE_COLUMNS = ("time_s", "engine", "est_x_m", "est_y_m", "est_strength")
SERIES_COLUMNS = ("time_s", "engine", "metric", "value")


def fmt(v: float) -> str:
    """Shortest round-tripping text for a float; integers stay integral."""
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


class CsvLog:
    """Line-buffered CSV writer with a fixed header."""

    def __init__(self, path: Path, columns: Iterable[str]):
        self.path = Path(path)
        self.columns = tuple(columns)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)

    def write(self, *row) -> None:
        self._writer.writerow(row)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def truth_rows(view_state) -> list[tuple]:
    t = fmt(view_state.time_s)
    return [
        (t, e.id, e.side, fmt(e.position[0]), fmt(e.position[1]), e.strength, "1" if e.concealed else "0")
        for e in view_state.entities
    ]


def report_row(r) -> tuple:
    return (fmt(r.time_s), fmt(r.reported_position[0]), fmt(r.reported_position[1]), r.reported_strength, r.origin_kind.value)


def ingest_row(o) -> tuple:
    return (fmt(o.time_s), fmt(o.position[0]), fmt(o.position[1]), o.strength)


def estimate_rows(snapshot) -> list[tuple]:
    t = fmt(snapshot.time_s)
    if not snapshot.locations:
        # keeps the tick visible when the engine has nothing to report
        return [(t, snapshot.engine, "", "", "")]
    return [(t, snapshot.engine, fmt(x), fmt(y), fmt(s)) for (x, y), s in snapshot.locations]


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
