"""Attractiveness scaling: power-law fits, log-binning, residual scores.

A region's attractiveness A is its share of all foreign-visitor events,
and it grows superlinearly with population p following A ~ a * p^b.  On
log10 scale that is ordinary least squares: log10(A) = log_a + b*log10(p).
The residual res = log10(A) - b*log10(p) - log_a ranks regions by over- or
under-performance against the trend, independent of absolute scale, which
is what makes residuals comparable across data sources.

All logs are base 10: the slope b is base-invariant, but intercepts and
residuals are not, so the base is fixed once here.  Sums use math.fsum,
which is exactly rounded and therefore independent of summation order.
"""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .events import EventRecord
from .geo import Assignment, RegionLayer
from .home import UNDETERMINED
from .special import t_two_sided_p


class StatsError(ValueError):
    """A statistics contract violation (empty/degenerate/insufficient input)."""


@dataclass(frozen=True, slots=True)
class AttractRow:
    region_id: str
    population: int
    events: int
    share: float  # A, this region's fraction of all counted foreign events


@dataclass(frozen=True)
class AttractivenessTable:
    dataset_tag: str
    layer: str
    target_country: str
    rows: tuple[AttractRow, ...]
    total_events: int  # foreign events counted into shares
    excluded_events: int  # foreign events in regions without population data
    excluded_regions: tuple[str, ...]


@dataclass(frozen=True)
class ScalingFit:
    b: float
    log_a: float
    r2: float
    p_value: float
    stderr_b: float
    n: int
    excluded_zero_A: int = 0


@dataclass(frozen=True, slots=True)
class BinRow:
    p_center: float  # geometric midpoint of the bin's population edges
    mean_A: float  # arithmetic mean of member shares
    member_count: int
    p_members: float  # geometric mean of member populations (fit abscissa)


@dataclass(frozen=True)
class BinnedTrend:
    bins: tuple[BinRow, ...]
    k: int


@dataclass(frozen=True, slots=True)
class ResidualScore:
    region_id: str
    res: float


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    n_common: int
    only_a: int
    only_b: int


# ---------------------------------------------------------------------------
# attractiveness

def compute_attractiveness(
    assignments: Assignment | Sequence[str | None],
    origins: Mapping[str, str],
    target_country: str,
    layer: RegionLayer,
    events: Sequence[EventRecord],
    dataset_tag: str = "",
) -> AttractivenessTable:
    """Per-region share of foreign-visitor events.

    An event counts when its owner's resolved origin is neither the target
    country nor UNDETERMINED and it falls in a region that has population
    data.  Regions without population cannot enter the fit, so their events
    are kept out of the normalization too and reported separately.
    """
    region_ids = assignments.region_ids if isinstance(assignments, Assignment) else assignments
    if len(region_ids) != len(events):
        raise StatsError(
            f"empty table: {len(region_ids)} assignments for {len(events)} events"
        )
    counts: dict[str, int] = {}
    for event, rid in zip(events, region_ids):
        origin = origins.get(event.user_id)
        if origin is None:
            raise StatsError(f"empty table: user {event.user_id!r} missing from origins")
        if origin == UNDETERMINED or origin == target_country or rid is None:
            continue
        counts[rid] = counts.get(rid, 0) + 1

    populated = [r for r in layer.regions if r.population is not None]
    excluded_regions = tuple(r.id for r in layer.regions if r.population is None)
    excluded_events = sum(counts.get(rid, 0) for rid in excluded_regions)
    # counts can also land in ids absent from the layer when assignments
    # were produced against a different layer; treat those as excluded
    known = {r.id for r in layer.regions}
    excluded_events += sum(c for rid, c in counts.items() if rid not in known)

    total = sum(counts.get(r.id, 0) for r in populated)
    if total == 0:
        raise StatsError("empty table: no foreign-visitor events in populated regions")
    rows = tuple(
        AttractRow(r.id, r.population, counts.get(r.id, 0), counts.get(r.id, 0) / total)
        for r in populated
    )
    return AttractivenessTable(
        dataset_tag=dataset_tag,
        layer=layer.label,
        target_country=target_country,
        rows=rows,
        total_events=total,
        excluded_events=excluded_events,
        excluded_regions=excluded_regions,
    )


# ---------------------------------------------------------------------------
# power-law fit

def fit_xy(xs: Sequence[float], ys: Sequence[float], excluded_zero_A: int = 0) -> ScalingFit:
    """OLS of y on x with slope significance from the exact t distribution."""
    n = len(xs)
    if n != len(ys):
        raise StatsError(f"insufficient data: {n} x values vs {len(ys)} y values")
    if n < 3:
        raise StatsError(f"insufficient data: {n} points, need >= 3")
    xm = math.fsum(xs) / n
    ym = math.fsum(ys) / n
    sxx = math.fsum((x - xm) ** 2 for x in xs)
    if sxx == 0.0:
        raise StatsError("degenerate abscissa: all x values identical")
    sxy = math.fsum((x - xm) * (y - ym) for x, y in zip(xs, ys))
    b = sxy / sxx
    log_a = ym - b * xm
    sse = math.fsum((y - (log_a + b * x)) ** 2 for x, y in zip(xs, ys))
    sst = math.fsum((y - ym) ** 2 for y in ys)
    r2 = 1.0 if sst == 0.0 else min(max(1.0 - sse / sst, 0.0), 1.0)
    df = n - 2
    stderr_b = math.sqrt((sse / df) / sxx)
    if stderr_b == 0.0:
        p_value = 1.0 if b == 0.0 else 0.0
    else:
        p_value = t_two_sided_p(b / stderr_b, df)
    return ScalingFit(b, log_a, r2, p_value, stderr_b, n, excluded_zero_A)


def positive_rows(table: AttractivenessTable) -> list[AttractRow]:
    return [row for row in table.rows if row.share > 0.0]


def fit_power_law(table: AttractivenessTable) -> ScalingFit:
    """Fit log10(A) = log_a + b*log10(p) over rows with A > 0.

    Zero-share rows have no logarithm; they are dropped and counted in
    excluded_zero_A so the omission stays visible downstream.
    """
    rows = positive_rows(table)
    excluded = len(table.rows) - len(rows)
    if len(rows) < 3:
        raise StatsError(f"insufficient data: {len(rows)} positive rows, need >= 3")
    xs = [math.log10(row.population) for row in rows]
    ys = [math.log10(row.share) for row in rows]
    return fit_xy(xs, ys, excluded_zero_A=excluded)


def attractiveness_ratio(b: float, factor: float) -> float:
    """Predicted attractiveness ratio between cities differing in
    population by ``factor``: factor**b.  With b = 1.5, a 3x larger city
    comes out around 5.2x more attractive."""
    if factor <= 0.0:
        raise StatsError(f"degenerate abscissa: population factor must be > 0, got {factor}")
    return factor ** b


# ---------------------------------------------------------------------------
# log-binning

def log_bin(table: AttractivenessTable, k: int = 5) -> BinnedTrend:
    """Average shares over k population ranges equally spaced in log10(p).

    The last bin includes its right edge; bins left empty are omitted.
    p_center is the geometric midpoint of the bin's edges, which stays
    well-defined even for single-member bins.
    """
    if k < 1:
        raise StatsError(f"insufficient data: bin count must be >= 1, got {k}")
    rows = positive_rows(table)
    if not rows:
        raise StatsError("insufficient data: 0 positive rows, need >= 1 to bin")
    xs = [math.log10(row.population) for row in rows]
    lo, hi = min(xs), max(xs)
    if lo == hi:
        mean = math.fsum(row.share for row in rows) / len(rows)
        return BinnedTrend((BinRow(10.0 ** lo, mean, len(rows), 10.0 ** lo),), k)
    edges = [lo + (hi - lo) * i / k for i in range(k + 1)]
    edges[k] = hi  # guard against the float endpoint drifting past hi
    members: list[list[tuple[float, float]]] = [[] for _ in range(k)]
    for x, row in zip(xs, rows):
        i = min(max(bisect_right(edges, x) - 1, 0), k - 1)
        members[i].append((x, row.share))
    bins = tuple(
        BinRow(
            10.0 ** ((edges[i] + edges[i + 1]) / 2.0),
            math.fsum(s for _, s in pts) / len(pts),
            len(pts),
            10.0 ** (math.fsum(x for x, _ in pts) / len(pts)),
        )
        for i, pts in enumerate(members)
        if pts
    )
    return BinnedTrend(bins, k)


def fit_binned(trend: BinnedTrend) -> ScalingFit:
    """OLS over the binned points, every non-empty bin weighted equally.

    The abscissa is each bin's member geometric mean, not the reported
    p_center: edge midpoints would tilt the slope whenever members sit
    off-center in their bins, even on noise-free data.
    """
    xs = [math.log10(row.p_members) for row in trend.bins]
    ys = [math.log10(row.mean_A) for row in trend.bins]
    return fit_xy(xs, ys)


# ---------------------------------------------------------------------------
# residuals and correlations

def residuals(table: AttractivenessTable, fit: ScalingFit) -> list[ResidualScore]:
    """Per-region res = log10(A) - b*log10(p) - log_a over fitted rows,
    sorted descending: the top of the list over-performs the trend."""
    scores = [
        ResidualScore(
            row.region_id,
            math.log10(row.share) - fit.b * math.log10(row.population) - fit.log_a,
        )
        for row in positive_rows(table)
    ]
    scores.sort(key=lambda s: (-s.res, s.region_id))
    return scores


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    if n != len(ys) or n < 2:
        raise StatsError(f"undefined correlation: need two equal-length vectors of >= 2 values, got {n} and {len(ys)}")
    xm = math.fsum(xs) / n
    ym = math.fsum(ys) / n
    sxx = math.fsum((x - xm) ** 2 for x in xs)
    syy = math.fsum((y - ym) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("undefined correlation: zero variance")
    sxy = math.fsum((x - xm) * (y - ym) for x, y in zip(xs, ys))
    return min(max(sxy / math.sqrt(sxx * syy), -1.0), 1.0)


def correlate_residuals(
    a: Sequence[ResidualScore], b: Sequence[ResidualScore]
) -> CorrelationResult:
    """Pearson correlation of two residual lists over shared region ids."""
    amap = {s.region_id: s.res for s in a}
    bmap = {s.region_id: s.res for s in b}
    common = sorted(amap.keys() & bmap.keys())
    if len(common) < 2:
        raise StatsError(f"insufficient data: {len(common)} shared regions, need >= 2")
    r = pearson([amap[k] for k in common], [bmap[k] for k in common])
    return CorrelationResult(r, len(common), len(amap) - len(common), len(bmap) - len(common))


# ---------------------------------------------------------------------------
# serialization

def fit_to_json(fit: ScalingFit, dataset: str, layer: str) -> dict:
    return {
        "dataset": dataset,
        "layer": layer,
        "b": fit.b,
        "log_a": fit.log_a,
        "r2": fit.r2,
        "p_value": fit.p_value,
        "stderr_b": fit.stderr_b,
        "n": fit.n,
        "excluded_zero_A": fit.excluded_zero_A,
    }


def _num(x: float) -> str:
    return format(x, ".12g")


def table_to_csv(table: AttractivenessTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("region_id", "population", "events", "share"))
    for row in table.rows:
        writer.writerow((row.region_id, row.population, row.events, _num(row.share)))
    return buf.getvalue()


def read_table_csv(
    path: str | Path, dataset_tag: str = "", layer: str = "", target_country: str = ""
) -> AttractivenessTable:
    rows: list[AttractRow] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["region_id", "population", "events", "share"]:
            raise StatsError(f"empty table: bad attractiveness header in {path}")
        for raw in reader:
            if not raw:
                continue
            rows.append(AttractRow(raw[0], int(raw[1]), int(raw[2]), float(raw[3])))
    return AttractivenessTable(
        dataset_tag=dataset_tag,
        layer=layer,
        target_country=target_country,
        rows=tuple(rows),
        total_events=sum(r.events for r in rows),
        excluded_events=0,
        excluded_regions=(),
    )


def residuals_to_csv(scores: Sequence[ResidualScore]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("region_id", "res"))
    for s in scores:
        writer.writerow((s.region_id, _num(s.res)))
    return buf.getvalue()


def read_residuals_csv(path: str | Path) -> list[ResidualScore]:
    out: list[ResidualScore] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["region_id", "res"]:
            raise StatsError(f"empty table: bad residuals header in {path}")
        for raw in reader:
            if not raw:
                continue
            out.append(ResidualScore(raw[0], float(raw[1])))
    return out


def binned_to_csv(trend: BinnedTrend) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("p_center", "mean_A", "member_count"))
    for row in trend.bins:
        writer.writerow((_num(row.p_center), _num(row.mean_A), row.member_count))
    return buf.getvalue()


def scatter_to_csv(table: AttractivenessTable, fit: ScalingFit) -> str:
    """Figure-ready per-region points: observed log-log pair plus the
    fitted line's value at the same abscissa."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("region_id", "log10_p", "log10_A", "fit_log10_A"))
    for row in positive_rows(table):
        x = math.log10(row.population)
        writer.writerow(
            (row.region_id, _num(x), _num(math.log10(row.share)), _num(fit.log_a + fit.b * x))
        )
    return buf.getvalue()
