"""Command-line workflow: build, audit, and edit structures; fit; augment; render.

JSON files are the interchange between stages, so each stage can run and be
tested on its own. Errors print as a single JSON line on stderr with a
nonzero exit code.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from .augment import AugmentError, export_augmented, load_augmented, st_augment, transform_column
from .fit import FitError, fit_model, predictions_from_json, summary_json
from .formula import FormulaError
from .geom import AreaCollection, AreaUnit, GeometryError, load_areas
from .nbgraph import (
    NbError,
    check_islands,
    dist_band,
    export,
    import_nb,
    manual_cut,
    manual_join,
    st_bridges,
)
from .render import NbMapOpts, PredMapOpts, RenderError, render_nb_map, render_pred_maps


class CliError(ValueError):
    pass


_ERRORS = (
    GeometryError,
    NbError,
    FormulaError,
    FitError,
    AugmentError,
    RenderError,
    CliError,
    OSError,
    json.JSONDecodeError,
)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _ERRORS as exc:
            click.echo(json.dumps({"error": str(exc) or type(exc).__name__}), err=True)
            sys.exit(1)

    return wrapper


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _positional_names(n: int) -> list[str]:
    return [str(i) for i in range(1, n + 1)]


def _load_rows(doc: bytes) -> AreaCollection:
    """Load a collection naming units by 1-based position."""
    data = json.loads(doc)
    if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
        raise GeometryError("document is not a GeoJSON FeatureCollection")
    for i, feat in enumerate(data.get("features", [])):
        props = feat.get("properties") or {}
        props["__row__"] = str(i + 1)
        feat["properties"] = props
    coll = load_areas(json.dumps(data), "__row__")
    return AreaCollection(
        units=tuple(
            AreaUnit(
                name=u.name,
                polygons=u.polygons,
                attrs={k: v for k, v in u.attrs.items() if k != "__row__"},
            )
            for u in coll.units
        )
    )


def _infer_name_field(doc: bytes, names) -> str | None:
    data = json.loads(doc)
    feats = data.get("features", []) if isinstance(data, dict) else []
    if not feats:
        return None
    want = sorted(str(n) for n in names)
    for key in feats[0].get("properties") or {}:
        vals = []
        for f in feats:
            v = (f.get("properties") or {}).get(key)
            if v is None:
                break
            vals.append(str(v))
        else:
            if sorted(vals) == want:
                return key
    return None


def _load_coll(path: str, name_field: str | None, nb=None) -> AreaCollection:
    doc = _read(path)
    if name_field:
        return load_areas(doc, name_field)
    if nb is not None:
        inferred = _infer_name_field(doc, nb.names)
        if inferred:
            return load_areas(doc, inferred)
        coll = _load_rows(doc)
        if list(coll.names) == list(nb.names):
            return coll
        raise CliError(
            "cannot match the collection to the structure's names; pass --name-field"
        )
    return _load_rows(doc)


def _pair(value: str) -> tuple:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2 or not all(parts):
        raise CliError(f"expected a pair like A,B, got {value!r}")
    return tuple(int(p) if p.isdigit() else p for p in parts)


@click.group(help="Neighbourhood structures, penalized areal models, and SVG maps.")
def main() -> None:
    pass


@main.command("bridges")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Input areas GeoJSON.")
@click.option("--name-field", required=True, help="Property that names each unit.")
@click.option("--k", default=1, show_default=True, help="Nearest neighbours used to bridge islands.")
@click.option("--remove-islands", is_flag=True, help="Drop islands instead of bridging them.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output structure JSON.")
@guarded
def bridges_cmd(in_path, name_field, k, remove_islands, out_path):
    """Build a queen-contiguity structure, bridging (or removing) islands."""
    coll = load_areas(_read(in_path), name_field)
    nb = st_bridges(
        coll,
        link_islands_k=k,
        remove_islands=remove_islands,
        add_to_dataframe=False,
    )
    Path(out_path).write_bytes(export(nb, "json"))
    click.echo(f"{len(nb)} units, {len(nb.edges())} edges, {len(nb.induced)} induced links")


@main.command("check-islands")
@click.option("--nb", "nb_path", required=True, type=click.Path(exists=True), help="Structure JSON.")
@click.option("--json", "as_json", is_flag=True, help="Print the audit as JSON instead of a table.")
@guarded
def check_islands_cmd(nb_path, as_json):
    """Show which units were islands and the neighbours they were given."""
    audit = check_islands(import_nb(_read(nb_path), "json"))
    if as_json:
        click.echo(json.dumps(audit.as_list()))
        return
    text = audit.to_text()
    if sys.stdout.isatty() and os.environ.get("ARELINK_COLOR") != "never":
        head, _, rest = text.partition("\n")
        text = f"\033[1m{head}\033[0m\n{rest}" if rest else head
    click.echo(text)


@main.command("edit", context_settings={"ignore_unknown_options": True})
@click.option("--nb", "nb_path", required=True, type=click.Path(exists=True), help="Structure JSON.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output structure JSON.")
@click.argument("edits", nargs=-1, type=click.UNPROCESSED)
@guarded
def edit_cmd(nb_path, out_path, edits):
    """Apply --join A,B and --cut A,B edits, strictly left to right.

    \b
    --join A,B   add the undirected edge between units A and B
    --cut A,B    remove the existing edge between units A and B

    Units may be referenced by name or 1-based position. A cut of an edge
    that does not exist is an error.
    """
    ops = []
    toks = list(edits)
    i = 0
    while i < len(toks):
        tok = toks[i]
        if tok in ("--join", "--cut"):
            if i + 1 >= len(toks):
                raise CliError(f"{tok} needs a value like A,B")
            ops.append((tok[2:], toks[i + 1]))
            i += 2
        elif tok.startswith("--join=") or tok.startswith("--cut="):
            flag, _, val = tok.partition("=")
            ops.append((flag[2:], val))
            i += 1
        else:
            raise CliError(f"unexpected argument {tok!r}")
    if not ops:
        raise CliError("no edits given: use --join A,B or --cut A,B")
    nb = import_nb(_read(nb_path), "json")
    for kind, val in ops:
        a, b = _pair(val)
        nb = manual_join(nb, a, b) if kind == "join" else manual_cut(nb, a, b)
    Path(out_path).write_bytes(export(nb, "json"))
    click.echo(f"applied {len(ops)} edits; {len(nb.edges())} edges")


@main.command("quickmap")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Input areas GeoJSON.")
@click.option("--nb", "nb_path", required=True, type=click.Path(exists=True), help="Structure JSON.")
@click.option("--name-field", default=None, help="Property that names each unit (inferred if omitted).")
@click.option("--nodes", default="point", show_default=True, type=click.Choice(["point", "numeric"]))
@click.option("--hulls", is_flag=True, help="Draw concave hulls beneath the links.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output SVG file.")
@guarded
def quickmap_cmd(in_path, nb_path, name_field, nodes, hulls, out_path):
    """Render the neighbourhood graph over the polygons."""
    nb = import_nb(_read(nb_path), "json")
    coll = _load_coll(in_path, name_field, nb)
    svg = render_nb_map(coll, nb, NbMapOpts(nodes=nodes, concavehull=hulls))
    Path(out_path).write_bytes(svg)
    click.echo(f"wrote {out_path}")


@main.command("dist-band")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Input areas GeoJSON.")
@click.option("--name-field", default=None, help="Property that names each unit (positions if omitted).")
@click.option("--threshold", required=True, type=float, help="Centroid distance that makes two units neighbours.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output structure JSON.")
@guarded
def dist_band_cmd(in_path, name_field, threshold, out_path):
    """Build a structure linking units whose centroids lie within a radius."""
    coll = _load_coll(in_path, name_field)
    nb = dist_band(coll, threshold)
    Path(out_path).write_bytes(export(nb, "json"))
    click.echo(f"{len(nb)} units, {len(nb.edges())} edges")


@main.command("fit")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Input areas GeoJSON.")
@click.option("--nb", "nb_path", default=None, type=click.Path(exists=True), help="Structure JSON (needed for mrf terms).")
@click.option("--name-field", default=None, help="Property that names each unit (inferred if omitted).")
@click.option("--formula", required=True, help="Model formula, e.g. \"y ~ x + s(region, bs='mrf')\".")
@click.option("--family", default="gaussian", show_default=True, type=click.Choice(["gaussian", "poisson"]))
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output fit summary JSON.")
@guarded
def fit_cmd(in_path, nb_path, name_field, formula, family, out_path):
    """Fit the model and write its summary (terms, coefficients, predictions)."""
    nb = import_nb(_read(nb_path), "json") if nb_path else None
    coll = _load_coll(in_path, name_field, nb)
    fit = fit_model(coll, formula, family=family, nb=nb)
    Path(out_path).write_text(json.dumps(summary_json(fit), indent=2) + "\n")
    click.echo(
        f"aic={fit.aic:.4f} deviance_explained={fit.deviance_explained:.4f} "
        f"converged={str(fit.converged).lower()}"
    )


@main.command("augment")
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True), help="Fit summary JSON.")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Input areas GeoJSON.")
@click.option("--name-field", default=None, help="Property that names each unit.")
@click.option("--transform", "transforms", multiple=True, metavar="exp:COLUMN", help="Transform a prediction column in place.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output GeoJSON (or .csv).")
@guarded
def augment_cmd(fit_path, in_path, name_field, transforms, out_path):
    """Join per-term predictions (and se twins) onto the areas."""
    preds = predictions_from_json(json.loads(_read(fit_path)))
    if not preds:
        raise CliError("fit summary contains no term predictions")
    coll = _load_coll(in_path, name_field)
    aug = st_augment(preds, coll)
    for t in transforms:
        aug = transform_column(aug, t)
    fmt = "csv" if out_path.lower().endswith(".csv") else "geojson"
    Path(out_path).write_bytes(export_augmented(aug, fmt))
    click.echo(f"wrote {len(aug.added)} prediction columns")


@main.command("quickmap-preds")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Augmented GeoJSON.")
@click.option("--out-dir", required=True, type=click.Path(), help="Directory for one SVG per column.")
@click.option("--scale-low", default="darkgreen", show_default=True)
@click.option("--scale-mid", default="ivory", show_default=True)
@click.option("--scale-high", default="darkred", show_default=True)
@click.option("--scale-midpoint", default=0.0, show_default=True, type=float)
@guarded
def quickmap_preds_cmd(in_path, out_dir, scale_low, scale_mid, scale_high, scale_midpoint):
    """Render one choropleth per prediction column."""
    aug = load_augmented(_read(in_path))
    opts = PredMapOpts(
        scale_low=scale_low,
        scale_mid=scale_mid,
        scale_high=scale_high,
        scale_midpoint=scale_midpoint,
    )
    maps = render_pred_maps(aug, opts)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for column, svg in zip(aug.prediction_columns, maps):
        (out / f"{column}.svg").write_bytes(svg)
    click.echo(f"wrote {len(maps)} maps to {out_dir}")


@main.command("serve")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True), help="Input areas GeoJSON.")
@click.option("--name-field", default=None, help="Property that names each unit.")
@click.option("--port", default=8349, show_default=True, type=int)
@guarded
def serve_cmd(in_path, name_field, port):
    """Serve the editing-and-fitting session over HTTP for the companion UI."""
    from .server import serve_forever

    coll = _load_coll(in_path, name_field)
    click.echo(f"serving on http://127.0.0.1:{port}")
    serve_forever(coll, port)


if __name__ == "__main__":
    main()
