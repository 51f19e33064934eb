"""Shared fixtures: tiny layers and event builders used across test files."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from cityattract.events import EventRecord
from cityattract.geo import load_layer


def square_feature(rid: str, lat0: float, lon0: float, side: float, population=None, layer="test"):
    props = {"id": rid, "name": rid, "layer": layer}
    if population is not None:
        props["population"] = population
    ring = [
        [lon0, lat0],
        [lon0 + side, lat0],
        [lon0 + side, lat0 + side],
        [lon0, lat0 + side],
        [lon0, lat0],
    ]
    return {"type": "Feature", "properties": props, "geometry": {"type": "Polygon", "coordinates": [ring]}}


def layer_of(*features, name="test"):
    return load_layer({"type": "FeatureCollection", "name": name, "features": list(features)})


def ev(user="u1", ts="2012-06-01T12:00:00Z", lat=0.5, lon=0.5, origin=None, tag="t"):
    stamp = datetime.strptime(ts, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return EventRecord(user, stamp, lat, lon, origin, tag)


def polygon_feature(rid: str, rings_latlon, population=None, layer="test"):
    """Feature from open (lat, lon) rings; first ring outer, rest holes."""
    props = {"id": rid, "name": rid, "layer": layer}
    if population is not None:
        props["population"] = population
    coords = [[[lon, lat] for lat, lon in ring] + [[ring[0][1], ring[0][0]]] for ring in rings_latlon]
    return {"type": "Feature", "properties": props, "geometry": {"type": "Polygon", "coordinates": coords}}


# three shapes exercising distinct containment branches: plain convex,
# concave with a notch, and an outer ring with a hole
CONVEX_RING = [(0.0, 0.0), (0.2, 1.1), (1.0, 1.4), (1.7, 0.6), (1.1, -0.4)]
CONCAVE_RING = [
    (0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.2, 2.0), (1.2, 0.8),
    (0.8, 0.8), (0.8, 2.0), (0.0, 2.0),
]
HOLED_RINGS = [
    [(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (0.0, 3.0)],
    [(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0)],
]


def shape_regions():
    """The three fixture shapes as loaded Region objects keyed by id."""
    layer = layer_of(
        polygon_feature("convex", [CONVEX_RING], population=10),
        polygon_feature("concave", [CONCAVE_RING], population=10),
        polygon_feature("holed", HOLED_RINGS, population=10),
    )
    return {r.id: r for r in layer.regions}


@pytest.fixture
def unit_square_layer():
    return layer_of(square_feature("sq", 0.0, 0.0, 1.0, population=1000))
