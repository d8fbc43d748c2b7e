"""Polygon collections and the geometric predicates behind neighbourhood construction.

Coordinates are planar throughout: no CRS handling, no geodesic math. GeoJSON
input coordinates are taken verbatim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterator, Mapping, Sequence

from shapely import concave_hull as _geos_concave_hull
from shapely.geometry import MultiPoint, MultiPolygon, Polygon

Point = tuple[float, float]
Ring = tuple[Point, ...]  # closed: first vertex equals last vertex
PolygonRings = tuple[Ring, ...]  # outer ring first, holes after

#: Contiguity tolerance in coordinate units. Real datasets carry sliver gaps,
#: so "touching" is decided up to this distance rather than exactly.
DEFAULT_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


def _close_ring(coords: Sequence[Sequence[float]]) -> Ring:
    pts = [(float(x), float(y)) for x, y, *_ in coords]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        closed = pts
    else:
        closed = pts + pts[:1]
    if len(set(closed[:-1])) < 3:
        raise GeometryError(f"ring needs at least 3 distinct vertices, got {closed[:-1]}")
    return tuple(closed)


@dataclass(frozen=True)
class AreaUnit:
    """One named spatial unit: a polygon or multipolygon plus its attribute row."""

    name: str
    polygons: tuple[PolygonRings, ...]
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name:
            raise GeometryError("unit name must be non-empty")
        if not self.polygons:
            raise GeometryError(f"unit {self.name!r} has no polygons")

    @cached_property
    def geometry(self) -> Polygon | MultiPolygon:
        parts = [Polygon(rings[0], rings[1:]) for rings in self.polygons]
        return parts[0] if len(parts) == 1 else MultiPolygon(parts)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for ring in self._all_rings() for p in ring]
        ys = [p[1] for ring in self._all_rings() for p in ring]
        return min(xs), min(ys), max(xs), max(ys)

    def _all_rings(self) -> Iterator[Ring]:
        for rings in self.polygons:
            yield from rings

    def vertices(self) -> Iterator[Point]:
        """All ring vertices, without the closing duplicates."""
        for ring in self._all_rings():
            yield from ring[:-1]


@dataclass(frozen=True)
class AreaCollection:
    """Ordered, uniquely named units; 1-based positions at the public surface."""

    units: tuple[AreaUnit, ...]
    nb: Any = None  # attached NbStructure, if any

    def __post_init__(self) -> None:
        seen: dict[str, int] = {}
        for i, u in enumerate(self.units):
            if u.name in seen:
                raise GeometryError(f"duplicate unit name {u.name!r} at positions {seen[u.name] + 1} and {i + 1}")
            seen[u.name] = i

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self) -> Iterator[AreaUnit]:
        return iter(self.units)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {u.name: i for i, u in enumerate(self.units)}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(u.name for u in self.units)

    def position(self, name: str) -> int:
        """1-based position of the named unit."""
        try:
            return self._index[name] + 1
        except KeyError:
            raise GeometryError(f"unknown unit name {name!r}") from None

    def unit(self, ref: str | int) -> AreaUnit:
        """Look a unit up by name or 1-based position."""
        if isinstance(ref, str):
            return self.units[self.position(ref) - 1]
        if not 1 <= ref <= len(self.units):
            raise GeometryError(f"position {ref} out of range 1..{len(self.units)}")
        return self.units[ref - 1]

    def with_nb(self, nb: Any) -> "AreaCollection":
        return replace(self, nb=nb)

    def subset(self, names: Sequence[str]) -> "AreaCollection":
        keep = set(names)
        return AreaCollection(tuple(u for u in self.units if u.name in keep))

    def table(self) -> dict[str, list[Any]]:
        """Attribute table, column-major, columns in first-seen order."""
        cols: dict[str, list[Any]] = {}
        for u in self.units:
            for key in u.attrs:
                cols.setdefault(key, [])
        for u in self.units:
            for key, col in cols.items():
                col.append(u.attrs.get(key))
        return cols


def load_areas(doc: bytes | str, name_field: str) -> AreaCollection:
    """Read a GeoJSON FeatureCollection into an AreaCollection, in file order.

    Every feature must carry Polygon/MultiPolygon geometry and a unique
    `name_field` property. All properties are preserved as attributes.
    """
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
        raise GeometryError("document is not a GeoJSON FeatureCollection")

    units = []
    missing: list[int] = []
    for i, feat in enumerate(data.get("features", [])):
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            poly_coords = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            poly_coords = geom["coordinates"]
        else:
            raise GeometryError(f"feature {i}: geometry type {gtype!r} is not areal (Polygon/MultiPolygon)")
        props = feat.get("properties") or {}
        if name_field not in props or props[name_field] in (None, ""):
            missing.append(i)
            continue
        polygons = tuple(tuple(_close_ring(ring) for ring in rings) for rings in poly_coords)
        units.append(AreaUnit(name=str(props[name_field]), polygons=polygons, attrs=dict(props)))

    if missing:
        raise GeometryError(f"features missing {name_field!r} property: indices {missing}")
    names = [u.name for u in units]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise GeometryError(f"duplicate {name_field!r} values: {dupes}")
    return AreaCollection(tuple(units))


def dump_areas(coll: AreaCollection) -> bytes:
    """GeoJSON FeatureCollection for the collection, attributes then geometry."""
    feats = []
    for u in coll.units:
        props = dict(u.attrs)
        if coll.nb is not None:
            props["nb"] = list(coll.nb.adj[coll.position(u.name) - 1])
        feats.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": geometry_mapping(u),
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": feats}).encode()


def geometry_mapping(unit: AreaUnit) -> dict[str, Any]:
    """GeoJSON geometry dict for a unit, coordinates verbatim."""
    coords = [[[list(p) for p in ring] for ring in rings] for rings in unit.polygons]
    if len(coords) == 1:
        return {"type": "Polygon", "coordinates": coords[0]}
    return {"type": "MultiPolygon", "coordinates": coords}


def queen_contiguous(a: AreaUnit, b: AreaUnit, tol: float = DEFAULT_TOL) -> bool:
    """True when the units share at least a point of boundary, up to ``tol``."""
    if a.name == b.name:
        raise GeometryError("queen contiguity is defined for distinct units")
    if tol < 0:
        raise GeometryError("tol must be non-negative")
    # Cheap bbox reject before the exact distance.
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    if ax0 - tol > bx1 or bx0 - tol > ax1 or ay0 - tol > by1 or by0 - tol > ay1:
        return False
    return a.geometry.distance(b.geometry) <= tol


def min_distance(a: AreaUnit, b: AreaUnit) -> float:
    """Minimum distance between two units; 0 exactly when they touch or overlap."""
    return float(a.geometry.distance(b.geometry))


def centroid(a: AreaUnit) -> Point:
    """Area-weighted centroid over all parts."""
    if a.geometry.area == 0:
        raise GeometryError(f"unit {a.name!r} has zero area, centroid undefined")
    c = a.geometry.centroid
    return (float(c.x), float(c.y))


def knn_units(
    coll: AreaCollection,
    target: str,
    k: int,
    metric: str = "boundary",
) -> list[str]:
    """The k nearest other units, ascending distance, ties broken by collection order.

    ``metric`` is "boundary" (minimum boundary-to-boundary distance) or
    "centroid" (distance between area-weighted centroids).
    """
    n = len(coll)
    if not 1 <= k <= n - 1:
        raise GeometryError(f"k={k} out of range 1..{n - 1}")
    if metric not in ("boundary", "centroid"):
        raise GeometryError(f"unknown metric {metric!r}, expected 'boundary' or 'centroid'")
    t = coll.unit(target)
    if metric == "centroid":
        tc = centroid(t)
    ranked = []
    for pos0, u in enumerate(coll.units):
        if u.name == t.name:
            continue
        if metric == "boundary":
            d = min_distance(t, u)
        else:
            uc = centroid(u)
            d = math.hypot(uc[0] - tc[0], uc[1] - tc[1])
        ranked.append((d, pos0, u.name))
    ranked.sort(key=lambda r: (r[0], r[1]))
    return [name for _, _, name in ranked[:k]]


def concave_outline(a: AreaUnit, concavity: float = 2.0) -> Ring:
    """A single outline polygon containing every vertex of every part.

    ``concavity`` >= 1 controls how tightly the outline hugs the vertices;
    infinity degenerates to the convex hull. Display-only: never used in the
    assignment of contiguities.
    """
    pts = MultiPoint(list(dict.fromkeys(a.vertices())))
    if math.isinf(concavity):
        hull = pts.convex_hull
    else:
        ratio = 1.0 - 1.0 / max(float(concavity), 1.0)
        hull = _geos_concave_hull(pts, ratio=ratio)
    if hull.geom_type != "Polygon":  # collinear inputs collapse to a line
        hull = pts.convex_hull.buffer(DEFAULT_TOL, quad_segs=1)
    return tuple((float(x), float(y)) for x, y in hull.exterior.coords)
