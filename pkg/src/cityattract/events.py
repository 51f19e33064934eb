"""Unified event schema and ingestion for geotagged activity records.

One record format covers all three activity styles (photo, tweet,
transaction): a user token, a UTC timestamp, a WGS84 point, an optional
declared origin country, and a dataset tag.  Files arrive as CSV (header
required) or JSONL with the same field names; malformed rows are counted
and skipped unless strict mode is on.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .output import dumps_stable

CANONICAL_COLUMNS = ("user_id", "timestamp", "lat", "lon", "origin_country", "dataset_tag")

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class IngestError(ValueError):
    """Malformed input stream, or first bad row in strict mode."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
        self.reason = message


@dataclass(frozen=True, slots=True)
class EventRecord:
    """One geotagged activity instance.

    ``timestamp`` is timezone-aware UTC with seconds precision;
    ``origin_country`` is an ISO-3166-1 alpha-2 code or None when the
    source does not declare one.
    """

    user_id: str
    timestamp: datetime
    lat: float
    lon: float
    origin_country: str | None
    dataset_tag: str


@dataclass
class IngestReport:
    """Accepted/rejected tallies for one parsed stream."""

    accepted: int = 0
    rejected: int = 0
    rejection_reasons: dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str) -> None:
        self.rejected += 1
        self.rejection_reasons[reason] = self.rejection_reasons.get(reason, 0) + 1

    def merge(self, other: "IngestReport") -> None:
        self.accepted += other.accepted
        self.rejected += other.rejected
        for reason, count in other.rejection_reasons.items():
            self.rejection_reasons[reason] = self.rejection_reasons.get(reason, 0) + count

    def to_json(self) -> str:
        return dumps_stable(
            {
                "accepted": self.accepted,
                "rejected": self.rejected,
                "rejection_reasons": dict(self.rejection_reasons),
            }
        )


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 UTC instant.

    Accepted forms: ``YYYY-MM-DD`` (midnight), ``YYYY-MM-DDTHH:MMZ``, or
    ``YYYY-MM-DDTHH:MM:SS[.ffffff]Z``.  Offsets other than the ``Z``
    suffix are rejected; sub-second digits are truncated.
    """
    if value.endswith("Z"):
        body = value[:-1]
    elif len(value) == 10 and "T" not in value:
        body = value
    else:
        raise ValueError(f"timestamp must be UTC with Z suffix: {value!r}")
    dt = datetime.fromisoformat(body)
    if dt.tzinfo is not None:
        raise ValueError(f"timestamp must not carry an explicit offset: {value!r}")
    return dt.replace(tzinfo=timezone.utc, microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def _make_record(
    user_id,
    timestamp,
    lat,
    lon,
    origin_country,
    dataset_tag,
) -> EventRecord | str:
    """Validate field values; return an EventRecord or a rejection reason."""
    if not isinstance(user_id, str) or not user_id:
        return "missing field"
    if not isinstance(dataset_tag, str) or not dataset_tag:
        return "missing field"
    if not isinstance(timestamp, str) or not timestamp:
        return "missing field"
    try:
        ts = parse_timestamp(timestamp)
    except ValueError:
        return "bad timestamp"
    try:
        lat_f = float(lat) if not isinstance(lat, bool) else None
        lon_f = float(lon) if not isinstance(lon, bool) else None
    except (TypeError, ValueError):
        return "bad coordinate"
    if lat_f is None or lon_f is None or lat_f != lat_f or lon_f != lon_f:
        return "bad coordinate"
    if not -90.0 <= lat_f <= 90.0:
        return "lat out of range"
    if not -180.0 <= lon_f <= 180.0:
        return "lon out of range"
    origin = origin_country if origin_country else None
    if origin is not None:
        if not isinstance(origin, str) or len(origin) != 2 or not origin.isalpha() or not origin.isupper() or not origin.isascii():
            return "bad origin country"
    return EventRecord(user_id, ts, lat_f, lon_f, origin, dataset_tag)


def _text_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            yield from fh
        return
    if isinstance(source, io.TextIOBase):
        yield from source
        return
    # byte stream
    yield from io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_events(
    source: str | Path | IO[bytes] | IO[str],
    format: str = "csv",
    strict: bool = False,
) -> tuple[list[EventRecord], IngestReport]:
    """Parse a CSV or JSONL stream into validated event records.

    Returns the accepted records in input order plus an IngestReport whose
    accepted + rejected counts add up to the number of data rows seen.
    Non-strict mode counts and skips malformed rows; strict mode raises
    IngestError at the first one.  Blank lines are ignored.
    """
    if format == "csv":
        parser = _parse_csv
    elif format == "jsonl":
        parser = _parse_jsonl
    else:
        raise IngestError(f"unknown format: {format!r}")
    records: list[EventRecord] = []
    report = IngestReport()
    for line_no, outcome in parser(_text_lines(source)):
        if isinstance(outcome, EventRecord):
            records.append(outcome)
            report.accepted += 1
        else:
            if strict:
                raise IngestError(outcome, line=line_no)
            report.reject(outcome)
    return records, report


def _parse_csv(lines: Iterable[str]) -> Iterator[tuple[int, EventRecord | str]]:
    reader = csv.reader(lines)
    indices: tuple[int, ...] | None = None
    width = 0
    line_no = 0
    for row in reader:
        line_no += 1
        if not row:
            continue
        if indices is None:
            names = [c.strip() for c in row]
            missing = [c for c in CANONICAL_COLUMNS if c not in names]
            if missing:
                raise IngestError(f"header is missing column(s): {', '.join(missing)}", line=line_no)
            indices = tuple(names.index(c) for c in CANONICAL_COLUMNS)
            width = max(indices) + 1
            continue
        if len(row) < width:
            yield line_no, "missing field"
            continue
        iu, it, ila, ilo, ioc, idt = indices
        yield line_no, _make_record(
            row[iu].strip(),
            row[it].strip(),
            row[ila].strip(),
            row[ilo].strip(),
            row[ioc].strip(),
            row[idt].strip(),
        )


def _parse_jsonl(lines: Iterable[str]) -> Iterator[tuple[int, EventRecord | str]]:
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError:
            yield line_no, "bad json"
            continue
        if not isinstance(obj, dict):
            yield line_no, "bad json"
            continue
        yield line_no, _make_record(
            obj.get("user_id"),
            obj.get("timestamp"),
            obj.get("lat"),
            obj.get("lon"),
            obj.get("origin_country"),
            obj.get("dataset_tag"),
        )


def events_to_csv(records: Sequence[EventRecord]) -> str:
    """Serialize records to the canonical CSV format (round-trip safe)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    for rec in records:
        # repr keeps the shortest exact representation: re-parsing must
        # reproduce the records bit-for-bit
        writer.writerow(
            (
                rec.user_id,
                format_timestamp(rec.timestamp),
                repr(rec.lat),
                repr(rec.lon),
                rec.origin_country or "",
                rec.dataset_tag,
            )
        )
    return buf.getvalue()


def write_events_csv(records: Sequence[EventRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(events_to_csv(records))
