"""Attach per-term effect estimates to an area collection and serialize the result.

Each penalized term contributes a value column and an ``se.``-prefixed twin,
joined to units by the term's grouping variable. Column order is fixed:
original attributes, the neighbour list (when a structure is attached),
then the prediction columns, with geometry last in serialized form.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .fit import FitResult, TermPrediction
from .geom import AreaCollection, GeometryError, geometry_mapping, load_areas


class AugmentError(ValueError):
    """A prediction column cannot be joined or serialized."""


_PRED_PREFIXES = ("random.effect.", "mrf.smooth.")


def is_prediction_column(name: str) -> bool:
    base = name[3:] if name.startswith("se.") else name
    return base.startswith(_PRED_PREFIXES)


@dataclass(frozen=True)
class AugmentedCollection:
    """A collection plus ordered prediction columns (value, then its se twin)."""

    base: AreaCollection
    added: tuple[tuple[str, tuple[float, ...]], ...]

    def __post_init__(self) -> None:
        n = len(self.base.units)
        seen = set()
        for name, vals in self.added:
            if name in seen:
                raise AugmentError(f"duplicate prediction column {name!r}")
            seen.add(name)
            if len(vals) != n:
                raise AugmentError(f"column {name!r} has {len(vals)} values for {n} units")

    @property
    def prediction_columns(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.added if not name.startswith("se."))

    def column(self, name: str) -> tuple[float, ...]:
        for n, vals in self.added:
            if n == name:
                return vals
        raise AugmentError(f"no prediction column named {name!r}")

    def table(self) -> dict[str, list]:
        """All columns except geometry, in contract order."""
        added_names = {name for name, _ in self.added}
        out: dict[str, list] = {}
        for name, vals in self.base.table().items():
            if name in added_names:
                continue  # replaced by the fresh prediction values
            if name == "nb" and self.base.nb is not None:
                continue  # the attached structure wins over a stale column
            out[name] = list(vals)
        if self.base.nb is not None:
            out["nb"] = [list(row) for row in self.base.nb.adj]
        for name, vals in self.added:
            out[name] = list(vals)
        return out


def st_augment(fit: FitResult, coll: AreaCollection) -> AugmentedCollection:
    """Join every penalized term's estimates (and ses) onto the collection.

    Units pick up the value of their level of the term's grouping variable; a
    repeated group therefore repeats its estimate. Columns already present
    under the same names are replaced, never duplicated.
    """
    effects: tuple[TermPrediction, ...]
    if hasattr(fit, "term_effects"):
        effects = tuple(fit.term_effects)
    else:
        effects = tuple(fit)
    added: list[tuple[str, tuple[float, ...]]] = []
    for t in effects:
        est = dict(zip(t.levels, (float(v) for v in t.estimate)))
        ses = dict(zip(t.levels, (float(v) for v in t.se)))
        vals = []
        for u in coll.units:
            if t.group in u.attrs:
                key = str(u.attrs[t.group])
            elif u.name in est:
                key = u.name
            else:
                raise AugmentError(
                    f"unit {u.name!r} has no value for grouping variable {t.group!r} of term {t.name!r}"
                )
            if key not in est:
                raise AugmentError(
                    f"unit {u.name!r}: level {key!r} is not among the fitted levels of {t.name!r}"
                )
            vals.append(key)
        added.append((t.name, tuple(est[k] for k in vals)))
        added.append((f"se.{t.name}", tuple(ses[k] for k in vals)))
    return AugmentedCollection(base=coll, added=tuple(added))


def transform_column(aug: AugmentedCollection, spec: str) -> AugmentedCollection:
    """Apply a named transform, e.g. ``"exp:mrf.smooth.province"``.

    Only ``exp`` is recognized; it replaces the named prediction column's
    values in place (its se twin is left untouched).
    """
    op, _, column = spec.partition(":")
    if op != "exp" or not column:
        raise AugmentError(f"unknown transform {spec!r}: expected 'exp:<column>'")
    names = [name for name, _ in aug.added]
    if column not in names:
        raise AugmentError(f"no prediction column named {column!r}")
    new = tuple(
        (name, tuple(math.exp(v) for v in vals) if name == column else vals)
        for name, vals in aug.added
    )
    return AugmentedCollection(base=aug.base, added=new)


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v)
    if v is None:
        return ""
    return str(v)


def export_augmented(aug: AugmentedCollection, format: str = "geojson") -> bytes:
    """Serialize with columns in contract order; geometry last (geojson) or dropped (csv)."""
    cols = aug.table()
    if format == "geojson":
        names = list(cols)
        feats = []
        for i, u in enumerate(aug.base.units):
            feats.append(
                {
                    "type": "Feature",
                    "properties": {name: cols[name][i] for name in names},
                    "geometry": geometry_mapping(u),
                }
            )
        return json.dumps({"type": "FeatureCollection", "features": feats}).encode()
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(cols)
        writer.writerow(names)
        for i in range(len(aug.base.units)):
            writer.writerow([_csv_cell(cols[name][i]) for name in names])
        return buf.getvalue().encode()
    raise AugmentError(f"unknown export format {format!r}: expected 'geojson' or 'csv'")


def load_augmented(doc: bytes | str, name_field: str | None = None) -> AugmentedCollection:
    """Read a serialized augmented collection back from GeoJSON.

    Prediction columns are recognized by their naming pattern; everything else
    stays a plain attribute. Without a name field, units are named by their
    1-based position.
    """
    if name_field is None:
        data = json.loads(doc if isinstance(doc, str) else doc.decode())
        if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
            raise GeometryError("document is not a GeoJSON FeatureCollection")
        feats = data.get("features", [])
        for i, feat in enumerate(feats):
            props = feat.setdefault("properties", None) or {}
            props["__row__"] = str(i + 1)
            feat["properties"] = props
        coll = load_areas(json.dumps(data), "__row__")
        coll = AreaCollection(
            units=tuple(
                type(u)(name=u.name, polygons=u.polygons, attrs={k: v for k, v in u.attrs.items() if k != "__row__"})
                for u in coll.units
            ),
            nb=coll.nb,
        )
    else:
        coll = load_areas(doc, name_field)

    pred_names: list[str] = []
    for u in coll.units:
        for k in u.attrs:
            if is_prediction_column(k) and k not in pred_names:
                pred_names.append(k)
    added = []
    base_units = []
    for u in coll.units:
        base_units.append(
            type(u)(
                name=u.name,
                polygons=u.polygons,
                attrs={k: v for k, v in u.attrs.items() if k not in pred_names},
            )
        )
    for name in pred_names:
        vals = []
        for u in coll.units:
            if name not in u.attrs:
                raise AugmentError(f"column {name!r} is missing for unit {u.name!r}")
            vals.append(float(u.attrs[name]))
        added.append((name, tuple(vals)))
    return AugmentedCollection(base=AreaCollection(units=tuple(base_units), nb=None), added=tuple(added))
