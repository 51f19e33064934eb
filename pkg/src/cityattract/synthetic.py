"""Deterministic synthetic cities and event streams with known exponent.

Everything here exists to give the pipeline a ground truth to be judged
against: regions with log-uniform populations, attractiveness following
A ~ p^b with optional lognormal noise and optional per-month exponents,
and an event stream engineered so that every downstream stage (ingestion,
home inference, region assignment, fitting, seasonal windows) has a known
correct answer.

Construction guarantees, relied on by tests:
  - all randomness flows from one counter-based generator seeded by the
    spec, so identical specs give identical outputs on any thread count;
  - per-region monthly event counts are integerized by largest-remainder
    rounding, preserving each region's annual total exactly;
  - every foreign user gets at most 2 events inside any one city and
    exactly 2 anchor events in their home-country square spanning most of
    the year, so home inference must resolve them to the home country
    (anchor count ties are broken by the longer home timespan);
  - resident users post only inside cities, which lie inside the target
    country, so inference resolves them to the target country and the
    foreign filter must drop exactly their events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Sequence

from .events import EventRecord
from .geo import RegionLayer, load_layer
from .rng import CounterRng
from .scaling import AttractRow, AttractivenessTable

_CITY_SIDE = 0.2  # degrees; city squares this size sit in a row at lat 40
_CITY_GAP = 0.1
_CITY_LAT = 40.0
_COUNTRY_LAT = 50.0  # foreign-country squares sit far north of every city


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic world; hashable and replace()-friendly."""

    n_regions: int
    p_min: float
    p_max: float
    b_true: float
    noise_sigma: float
    events_per_unit: float
    seed: int
    seasonal_b: tuple[float, ...] | None = None  # 12 per-month exponents
    resident_share: float = 0.0  # fraction of city events made by residents
    target_country: str = "ES"
    foreign_countries: tuple[str, ...] = ("DE", "FR", "GB", "IT", "NL", "US")

    def __post_init__(self) -> None:
        if self.n_regions < 3:
            raise ValueError(f"n_regions must be >= 3, got {self.n_regions}")
        if self.p_min < 1:
            raise ValueError(f"p_min must be >= 1, got {self.p_min}")
        if self.p_min >= self.p_max:
            raise ValueError(f"need p_min < p_max, got {self.p_min} >= {self.p_max}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.events_per_unit <= 0:
            raise ValueError(f"events_per_unit must be > 0, got {self.events_per_unit}")
        if self.seasonal_b is not None and len(self.seasonal_b) != 12:
            raise ValueError(f"seasonal_b needs 12 entries, got {len(self.seasonal_b)}")
        if not 0.0 <= self.resident_share < 1.0:
            raise ValueError(f"resident_share must be in [0, 1), got {self.resident_share}")
        if not self.foreign_countries:
            raise ValueError("need at least one foreign country")


def region_ids(spec: SyntheticSpec) -> list[str]:
    width = max(2, len(str(spec.n_regions)))
    return [f"r{i + 1:0{width}d}" for i in range(spec.n_regions)]


def populations(spec: SyntheticSpec) -> list[int]:
    """Log-uniform integer populations on [p_min, p_max], one per region."""
    stream = CounterRng(spec.seed).stream(1)
    lo, hi = math.log10(spec.p_min), math.log10(spec.p_max)
    out = []
    for i in range(spec.n_regions):
        p = int(round(10.0 ** (lo + stream.uniform(i) * (hi - lo))))
        out.append(max(p, 1))
    return out


def epsilons(spec: SyntheticSpec) -> list[float]:
    """Per-region lognormal noise exponents (log10 units)."""
    if spec.noise_sigma == 0.0:
        return [0.0] * spec.n_regions
    stream = CounterRng(spec.seed).stream(2)
    return [spec.noise_sigma * stream.normal(i) for i in range(spec.n_regions)]


def monthly_exponents(spec: SyntheticSpec) -> tuple[float, ...]:
    if spec.seasonal_b is not None:
        return tuple(float(b) for b in spec.seasonal_b)
    return (spec.b_true,) * 12


def weight_matrix(spec: SyntheticSpec) -> list[list[float]]:
    """Expected foreign events per region and month:
    W[r][m-1] = events_per_unit * p_r^(b_m) * 10^(eps_r)."""
    pops = populations(spec)
    eps = epsilons(spec)
    months = monthly_exponents(spec)
    return [
        [spec.events_per_unit * (p ** bm) * (10.0 ** e) for bm in months]
        for p, e in zip(pops, eps)
    ]


def events_per_unit_for_total(spec: SyntheticSpec, total_events: int) -> SyntheticSpec:
    """Rescale events_per_unit so expected foreign city events = total_events."""
    if total_events < 1:
        raise ValueError(f"total_events must be >= 1, got {total_events}")
    base = replace(spec, events_per_unit=1.0)
    s = math.fsum(math.fsum(row) for row in weight_matrix(base))
    return replace(spec, events_per_unit=total_events / s)


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Apportion ``total`` integer units proportionally to ``weights``.

    Each entry gets the floor of its exact quota; leftover units go to the
    largest fractional remainders, ties to the lower index.  The result
    always sums to ``total`` exactly.
    """
    if total < 0:
        raise ValueError(f"total must be >= 0, got {total}")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be >= 0")
    s = math.fsum(weights)
    if s <= 0:
        if total:
            raise ValueError("cannot apportion a positive total over zero weights")
        return [0] * len(weights)
    quotas = [w * total / s for w in weights]
    base = [math.floor(q) for q in quotas]
    leftover = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (base[i] - quotas[i], i))
    for i in order[:leftover]:
        base[i] += 1
    return base


# ---------------------------------------------------------------------------
# table generation (no events, direct shares)

def generate_table(
    spec: SyntheticSpec, dataset_tag: str = "synthetic"
) -> tuple[AttractivenessTable, dict]:
    """Noisy power-law shares straight from the model, plus ground truth.

    Raw attractiveness p^b_true * 10^eps is normalized to shares, so the
    table carries no event counts; b_true survives normalization exactly.
    """
    ids = region_ids(spec)
    pops = populations(spec)
    eps = epsilons(spec)
    raw = [(p ** spec.b_true) * (10.0 ** e) for p, e in zip(pops, eps)]
    s = math.fsum(raw)
    rows = tuple(
        AttractRow(rid, p, 0, a / s) for rid, p, a in zip(ids, pops, raw)
    )
    table = AttractivenessTable(
        dataset_tag=dataset_tag,
        layer="synthetic",
        target_country=spec.target_country,
        rows=rows,
        total_events=0,
        excluded_events=0,
        excluded_regions=(),
    )
    truth = {
        "kind": "table",
        "seed": spec.seed,
        "n_regions": spec.n_regions,
        "p_min": spec.p_min,
        "p_max": spec.p_max,
        "b_true": spec.b_true,
        "noise_sigma": spec.noise_sigma,
        "region_ids": ids,
        "populations": pops,
        "epsilons": eps,
    }
    return table, truth


# ---------------------------------------------------------------------------
# layers

def make_city_layer(spec: SyntheticSpec, label: str = "cities") -> RegionLayer:
    """Disjoint population-bearing squares in a row inside the target country."""
    ids = region_ids(spec)
    pops = populations(spec)
    features = []
    for i, (rid, pop) in enumerate(zip(ids, pops)):
        lon0 = i * (_CITY_SIDE + _CITY_GAP)
        lat0 = _CITY_LAT
        ring = [
            [lon0, lat0],
            [lon0 + _CITY_SIDE, lat0],
            [lon0 + _CITY_SIDE, lat0 + _CITY_SIDE],
            [lon0, lat0 + _CITY_SIDE],
            [lon0, lat0],
        ]
        features.append(
            {
                "type": "Feature",
                "properties": {"id": rid, "name": f"City {rid}", "layer": label, "population": pop},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return load_layer({"type": "FeatureCollection", "name": label, "features": features})


def make_country_layer(spec: SyntheticSpec, label: str = "countries") -> RegionLayer:
    """The target country containing every city, plus far-away foreign squares."""
    span = spec.n_regions * (_CITY_SIDE + _CITY_GAP) + 1.0
    features = [
        {
            "type": "Feature",
            "properties": {"id": spec.target_country, "name": spec.target_country, "layer": label},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[-1.0, 38.0], [span, 38.0], [span, 44.0], [-1.0, 44.0], [-1.0, 38.0]]],
            },
        }
    ]
    for j, code in enumerate(spec.foreign_countries):
        lon0 = j * 0.5
        ring = [
            [lon0, _COUNTRY_LAT],
            [lon0 + _CITY_SIDE, _COUNTRY_LAT],
            [lon0 + _CITY_SIDE, _COUNTRY_LAT + _CITY_SIDE],
            [lon0, _COUNTRY_LAT + _CITY_SIDE],
            [lon0, _COUNTRY_LAT],
        ]
        features.append(
            {
                "type": "Feature",
                "properties": {"id": code, "name": code, "layer": label},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return load_layer({"type": "FeatureCollection", "name": label, "features": features})


def country_anchor(spec: SyntheticSpec, code: str) -> tuple[float, float]:
    """Center of a foreign country's square, for home-anchor events."""
    j = spec.foreign_countries.index(code)
    return (_COUNTRY_LAT + _CITY_SIDE / 2.0, j * 0.5 + _CITY_SIDE / 2.0)


# ---------------------------------------------------------------------------
# event generation

@dataclass(frozen=True)
class EventBundle:
    events: tuple[EventRecord, ...]
    city_layer: RegionLayer
    country_layer: RegionLayer
    truth: dict = field(compare=False)


def _month_bounds(year: int, month: int) -> tuple[datetime, int]:
    start = datetime(year, month, 1, tzinfo=timezone.utc)
    if month == 12:
        end = datetime(year + 1, 1, 1, tzinfo=timezone.utc)
    else:
        end = datetime(year, month + 1, 1, tzinfo=timezone.utc)
    return start, int((end - start).total_seconds())


def _place(stream, counter: int, lat0: float, lon0: float) -> tuple[float, float]:
    # keep points strictly interior (2% margin) so containment can never
    # hinge on boundary conventions
    u_lat = stream.uniform(counter + 1)
    u_lon = stream.uniform(counter + 2)
    lat = lat0 + _CITY_SIDE * (0.01 + 0.98 * u_lat)
    lon = lon0 + _CITY_SIDE * (0.01 + 0.98 * u_lon)
    return lat, lon


def generate_events(
    spec: SyntheticSpec, year: int = 2012, dataset_tag: str = "synthetic"
) -> EventBundle:
    """Build the full synthetic world: layers, events, and ground truth."""
    ids = region_ids(spec)
    pops = populations(spec)
    eps = epsilons(spec)
    months_b = monthly_exponents(spec)
    weights = weight_matrix(spec)
    city_layer = make_city_layer(spec)
    country_layer = make_country_layer(spec)
    root = CounterRng(spec.seed)

    annual = [math.floor(math.fsum(w) + 0.5) for w in weights]
    monthly = [largest_remainder(w, n) for w, n in zip(weights, annual)]

    events: list[EventRecord] = []
    n_foreign_users = 0
    country_cycle = 0
    n_countries = len(spec.foreign_countries)
    for r, rid in enumerate(ids):
        stream = root.stream(1000 + r)
        lon0 = r * (_CITY_SIDE + _CITY_GAP)
        e = 0  # event index within this region, drives the RNG counters
        for m in range(1, 13):
            count = monthly[r][m - 1]
            if count == 0:
                continue
            start, month_seconds = _month_bounds(year, m)
            # split this bucket into users of at most 2 events each, so a
            # user's in-city count can never beat their 2 home anchors
            for k in range((count + 1) // 2):
                uid = f"f{r}m{m}u{k}"
                code = spec.foreign_countries[country_cycle % n_countries]
                country_cycle += 1
                n_foreign_users += 1
                alat, alon = country_anchor(spec, code)
                events.append(
                    EventRecord(uid, datetime(year, 1, 2, 12, 0, 0, tzinfo=timezone.utc), alat, alon, None, dataset_tag)
                )
                events.append(
                    EventRecord(uid, datetime(year, 12, 28, 12, 0, 0, tzinfo=timezone.utc), alat, alon, None, dataset_tag)
                )
                for _ in range(min(2, count - 2 * k)):
                    ts = start + timedelta(seconds=int(stream.u64(3 * e) % month_seconds))
                    lat, lon = _place(stream, 3 * e, _CITY_LAT, lon0)
                    events.append(EventRecord(uid, ts, lat, lon, None, dataset_tag))
                    e += 1

    total_foreign = sum(annual)
    share = spec.resident_share
    total_res = math.floor(total_foreign * share / (1.0 - share) + 0.5) if share > 0 else 0
    res_by_region = largest_remainder([float(n) for n in annual], total_res) if total_res else [0] * len(ids)
    n_resident_users = 0
    for r, rid in enumerate(ids):
        count = res_by_region[r]
        if count == 0:
            continue
        stream = root.stream(2000 + r)
        lon0 = r * (_CITY_SIDE + _CITY_GAP)
        res_monthly = largest_remainder(weights[r], count)
        e = 0
        for m in range(1, 13):
            if res_monthly[m - 1] == 0:
                continue
            start, month_seconds = _month_bounds(year, m)
            for j in range(res_monthly[m - 1]):
                # residents post up to 4 events each; all are in-country,
                # so inference pins them to the target country
                uid = f"d{r}u{e // 4}"
                if e % 4 == 0:
                    n_resident_users += 1
                ts = start + timedelta(seconds=int(stream.u64(3 * e) % month_seconds))
                lat, lon = _place(stream, 3 * e, _CITY_LAT, lon0)
                events.append(EventRecord(uid, ts, lat, lon, None, dataset_tag))
                e += 1

    events.sort(key=lambda ev: (ev.timestamp, ev.user_id, ev.lat, ev.lon))

    truth = {
        "kind": "events",
        "seed": spec.seed,
        "year": year,
        "dataset_tag": dataset_tag,
        "n_regions": spec.n_regions,
        "p_min": spec.p_min,
        "p_max": spec.p_max,
        "b_true": spec.b_true,
        "noise_sigma": spec.noise_sigma,
        "events_per_unit": spec.events_per_unit,
        "monthly_b": list(months_b),
        "resident_share": spec.resident_share,
        "target_country": spec.target_country,
        "foreign_countries": list(spec.foreign_countries),
        "region_ids": ids,
        "populations": pops,
        "epsilons": eps,
        "weights": weights,
        "annual_foreign_events": annual,
        "monthly_foreign_events": monthly,
        "total_foreign_events": total_foreign,
        "total_resident_events": total_res,
        "resident_events_by_region": res_by_region,
        "n_foreign_users": n_foreign_users,
        "n_resident_users": n_resident_users,
        "total_events": len(events),
    }
    return EventBundle(tuple(events), city_layer, country_layer, truth)
