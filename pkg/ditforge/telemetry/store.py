"""Collector from spool files into per-kind pandas tables."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from ditforge.telemetry.events import EventRecord
from ditforge.telemetry.recorder import SPOOL_SUFFIX
from ditforge.utils.helpers import ensure_dir

_KEY = ["producer_id", "seq"]
_BASE = ["producer_id", "seq", "rank", "iteration", "wall_ns"]
COLUMNS: dict[str, list[str]] = {
    "timer": _BASE + ["stage", "duration_ns"],
    "data": _BASE + ["sample_id", "frames", "height", "width", "source_url"],
    "fault": _BASE + ["fault_class", "transient"],
    "signal": _BASE + ["signal_name", "active"],
}


@dataclass(frozen=True)
class QuarantinedLine:
    file: str
    line: int
    error: str


def _row(event: EventRecord, fallback_key: str) -> dict[str, Any]:
    row: dict[str, Any] = {
        # Events without a recorder key dedupe on their content
        "producer_id": event.producer_id if event.producer_id is not None else fallback_key,
        "seq": event.seq if event.seq is not None else -1,
        "rank": event.rank,
        "iteration": event.iteration,
        "wall_ns": event.wall_ns,
    }
    if event.kind == "timer":
        row.update(stage=event.stage, duration_ns=event.duration_ns)
    elif event.kind == "data":
        meta = event.sample_meta
        row.update(
            sample_id=meta.id,
            frames=meta.frames,
            height=meta.height,
            width=meta.width,
            source_url=meta.source_url,
        )
    elif event.kind == "fault":
        row.update(fault_class=event.fault_class, transient=bool(event.transient))
    else:
        row.update(signal_name=event.signal_name, active=event.active)
    return row


def _table(kind: str, rows: list[dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=COLUMNS[kind])
    if frame.empty:
        return frame
    frame = frame.drop_duplicates(subset=_KEY, keep="first")
    return frame.sort_values(["wall_ns", "producer_id", "seq"], kind="stable").reset_index(drop=True)


@dataclass
class TelemetryStore:
    """Read-only per-kind tables; rows are unique on (producer_id, seq)."""

    timers: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=COLUMNS["timer"]))
    data: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=COLUMNS["data"]))
    faults: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=COLUMNS["fault"]))
    signals: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=COLUMNS["signal"]))
    quarantined: list[QuarantinedLine] = field(default_factory=list)

    def tables(self) -> dict[str, pd.DataFrame]:
        return {"timer": self.timers, "data": self.data, "fault": self.faults, "signal": self.signals}

    def __len__(self) -> int:
        return sum(len(t) for t in self.tables().values())

    @classmethod
    def from_rows(cls, rows: dict[str, list[dict[str, Any]]], quarantined: list[QuarantinedLine] | None = None) -> "TelemetryStore":
        return cls(
            timers=_table("timer", rows.get("timer", [])),
            data=_table("data", rows.get("data", [])),
            faults=_table("fault", rows.get("fault", [])),
            signals=_table("signal", rows.get("signal", [])),
            quarantined=list(quarantined or []),
        )

    @classmethod
    def from_records(cls, records: Iterable[EventRecord]) -> "TelemetryStore":
        rows: dict[str, list[dict[str, Any]]] = {kind: [] for kind in COLUMNS}
        for i, event in enumerate(records):
            rows[event.kind].append(_row(event, f"mem:{i}"))
        return cls.from_rows(rows)

    def concat(self, other: "TelemetryStore") -> "TelemetryStore":
        """Union of two stores; rows sharing a key are kept once."""
        rows = {
            kind: pd.concat([mine, theirs], ignore_index=True).to_dict("records")
            for (kind, mine), theirs in zip(self.tables().items(), other.tables().values())
        }
        return TelemetryStore.from_rows(rows, self.quarantined + other.quarantined)

    def export(self, out_dir: Path) -> list[Path]:
        """Write one JSON table per event kind."""
        ensure_dir(out_dir)
        paths = []
        for kind, table in self.tables().items():
            path = out_dir / f"{kind}.json"
            table.to_json(path, orient="records", indent=2)
            paths.append(path)
        return paths


def ingest(spool_dir: Path, pattern: str = f"*{SPOOL_SUFFIX}") -> TelemetryStore:
    """
    Load every spool file under a directory.

    Malformed lines are quarantined with their file and line number; the rest
    still load. Files are read in name order and rows deduplicated, so the
    result does not depend on which copy of an event was seen first.
    """
    rows: dict[str, list[dict[str, Any]]] = {kind: [] for kind in COLUMNS}
    quarantined: list[QuarantinedLine] = []
    files = sorted(Path(spool_dir).glob(pattern)) if Path(spool_dir).is_dir() else []
    for path in files:
        with path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    event = EventRecord.model_validate(json.loads(line))
                except (json.JSONDecodeError, ValidationError) as e:
                    reason = str(e).splitlines()[0]
                    quarantined.append(QuarantinedLine(file=path.name, line=lineno, error=reason))
                    logger.warning(f"Quarantined {path.name}:{lineno}: {reason}")
                    continue
                rows[event.kind].append(_row(event, f"line:{line.strip()}"))
    store = TelemetryStore.from_rows(rows, quarantined)
    logger.info(f"Ingested {len(store)} events from {len(files)} spool files ({len(quarantined)} quarantined)")
    return store
