"""Home-country inference from located activity records.

A user's home country is the one holding the highest number of their
records over the longest timespan: countries are ranked by event count,
ties by the span between the user's first and last event there, remaining
ties by lexicographically smallest country id.  Users with fewer located
events than ``min_events`` come out as UNDETERMINED.

Records that declare an origin country (e.g. card transactions) do not
need inference; resolve_origins prefers the declared value per record.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .events import EventRecord

UNDETERMINED = "UNDETERMINED"

# user -> country -> [count, first_ts, last_ts]
UserStats = dict[str, dict[str, list]]


@dataclass(frozen=True, slots=True)
class HomeRecord:
    user_id: str
    country: str
    event_count: int  # events in the chosen country; total located if undetermined
    timespan_seconds: int


def accumulate_stats(
    events: Sequence[EventRecord], country_of: Callable[[float, float], str | None]
) -> tuple[UserStats, int]:
    """Tally per-user per-country counts and time extents.

    Returns the tally and the number of events that resolved to no country.
    """
    return accumulate_stats_seq(events, (country_of(e.lat, e.lon) for e in events))


def accumulate_stats_seq(
    events: Sequence[EventRecord], countries: Iterable[str | None]
) -> tuple[UserStats, int]:
    """Like accumulate_stats but with countries already resolved per event."""
    stats: UserStats = {}
    unresolved = 0
    for event, country in zip(events, countries):
        if country is None:
            unresolved += 1
            continue
        per_user = stats.setdefault(event.user_id, {})
        entry = per_user.get(country)
        if entry is None:
            per_user[country] = [1, event.timestamp, event.timestamp]
        else:
            entry[0] += 1
            if event.timestamp < entry[1]:
                entry[1] = event.timestamp
            if event.timestamp > entry[2]:
                entry[2] = event.timestamp
    return stats, unresolved


def infer_home(user_id: str, per_country: Mapping[str, list], min_events: int = 1) -> HomeRecord:
    total = sum(entry[0] for entry in per_country.values())
    if total < min_events or not per_country:
        return HomeRecord(user_id, UNDETERMINED, total, 0)
    best_country = None
    best_key = None
    for country, (count, first, last) in per_country.items():
        span = int((last - first).total_seconds())
        key = (-count, -span, country)
        if best_key is None or key < best_key:
            best_key = key
            best_country = country
    return HomeRecord(user_id, best_country, -best_key[0], -best_key[1])


def infer_all(
    stats: UserStats, min_events: int = 1, all_users: Iterable[str] | None = None
) -> dict[str, HomeRecord]:
    """Homes for every user in stats; ``all_users`` extends coverage to
    users with no locatable events, who come out UNDETERMINED."""
    out = {uid: infer_home(uid, per_country, min_events) for uid, per_country in stats.items()}
    if all_users is not None:
        for uid in all_users:
            if uid not in out:
                out[uid] = HomeRecord(uid, UNDETERMINED, 0, 0)
    return out


def resolve_origin(home: HomeRecord | None, declared: str | None) -> str:
    """Origin country for one user: a declared value wins over inference."""
    if declared is not None:
        return declared
    return home.country if home is not None else UNDETERMINED


def origin_map(
    events: Sequence[EventRecord], homes: Mapping[str, HomeRecord]
) -> dict[str, str]:
    """Resolve every event owner to an origin country.

    Users whose records declare an origin keep the first declared value;
    the rest fall back to their inferred home, or UNDETERMINED when the
    user produced no locatable events at all.
    """
    declared: dict[str, str] = {}
    users: dict[str, None] = {}
    for event in events:
        users.setdefault(event.user_id, None)
        if event.origin_country is not None and event.user_id not in declared:
            declared[event.user_id] = event.origin_country
    return {uid: resolve_origin(homes.get(uid), declared.get(uid)) for uid in users}


def homes_to_csv(homes: Mapping[str, HomeRecord] | Iterable[HomeRecord]) -> str:
    records = homes.values() if isinstance(homes, Mapping) else homes
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("user_id", "country", "event_count", "timespan_seconds"))
    for rec in sorted(records, key=lambda r: r.user_id):
        writer.writerow((rec.user_id, rec.country, rec.event_count, rec.timespan_seconds))
    return buf.getvalue()


def write_homes_csv(homes: Mapping[str, HomeRecord] | Iterable[HomeRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(homes_to_csv(homes))


def read_homes_csv(path: str | Path) -> dict[str, HomeRecord]:
    out: dict[str, HomeRecord] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "country", "event_count", "timespan_seconds"]:
            raise ValueError(f"bad homes file header in {path}")
        for row in reader:
            if not row:
                continue
            rec = HomeRecord(row[0], row[1], int(row[2]), int(row[3]))
            out[rec.user_id] = rec
    return out
