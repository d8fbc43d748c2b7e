"""Deterministic SVG maps: neighbourhood graphs and per-term choropleths.

Output is plain SVG 1.1 assembled from strings — identical inputs yield
byte-identical documents. Colours come from a fixed token table (the R-style
names used throughout plus CSS basics) or ``#RRGGBB`` literals. Choropleths
use a diverging low→mid→high scale, piecewise-linear in RGB and anchored at a
configurable midpoint; values outside the anchors clamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from .augment import AugmentedCollection
from .geom import AreaCollection, AreaUnit, centroid, concave_outline
from .nbgraph import NbStructure


class RenderError(ValueError):
    """Unresolvable colour token or inconsistent rendering inputs."""


COLOURS = {
    # R-style tokens
    "antiquewhite1": "#FFEFDB",
    "ivory": "#FFFFF0",
    "darkblue": "#00008B",
    "darkgreen": "#006400",
    "darkred": "#8B0000",
    "gray0": "#000000",
    "gray10": "#1A1A1A",
    "gray20": "#333333",
    "gray30": "#4D4D4D",
    "gray40": "#666666",
    "gray50": "#7F7F7F",
    "gray60": "#999999",
    "gray70": "#B3B3B3",
    "gray80": "#CCCCCC",
    "gray90": "#E5E5E5",
    "gray95": "#F2F2F2",
    "gray100": "#FFFFFF",
    # CSS basics
    "black": "#000000",
    "white": "#FFFFFF",
    "red": "#FF0000",
    "green": "#008000",
    "blue": "#0000FF",
    "yellow": "#FFFF00",
    "orange": "#FFA500",
    "purple": "#800080",
    "gray": "#808080",
    "lightgray": "#D3D3D3",
    "steelblue": "#4682B4",
    "tomato": "#FF6347",
    "firebrick": "#B22222",
    "navy": "#000080",
    "teal": "#008080",
    "olive": "#808000",
    "maroon": "#800000",
    "silver": "#C0C0C0",
    "cyan": "#00FFFF",
    "magenta": "#FF00FF",
    "pink": "#FFC0CB",
    "brown": "#A52A2A",
    "coral": "#FF7F50",
    "gold": "#FFD700",
    "khaki": "#F0E68C",
    "salmon": "#FA8072",
    "skyblue": "#87CEEB",
    "slategray": "#708090",
}


def resolve_colour(token: str) -> tuple[int, int, int]:
    """Token or #hex literal to an (r, g, b) triple; unknown tokens error."""
    t = str(token).strip()
    key = t.lower().replace("grey", "gray")
    if key in COLOURS:
        t = COLOURS[key]
    if len(t) == 7 and t[0] == "#":
        try:
            return int(t[1:3], 16), int(t[3:5], 16), int(t[5:7], 16)
        except ValueError:
            pass
    raise RenderError(f"unknown colour token {token!r}")


def _hex(rgb: tuple[int, int, int]) -> str:
    return "#{:02X}{:02X}{:02X}".format(*rgb)


def _lerp(a: tuple[int, int, int], b: tuple[int, int, int], t: float) -> tuple[int, int, int]:
    t = min(max(t, 0.0), 1.0)
    return tuple(int(round(a[i] + (b[i] - a[i]) * t)) for i in range(3))


def diverging_colour(value, lo, mid, hi, vmin, vmax, midpoint) -> str:
    """Piecewise-linear diverging fill, anchored at midpoint, clamped."""
    if vmax - vmin <= 0:
        return _hex(mid)
    if value <= midpoint:
        span = midpoint - vmin
        t = 1.0 if span <= 0 else (value - vmin) / span
        return _hex(_lerp(lo, mid, t))
    span = vmax - midpoint
    t = 0.0 if span <= 0 else (value - midpoint) / span
    return _hex(_lerp(mid, hi, t))


def _fmt(v: float) -> str:
    out = f"{v:.6g}"
    return "0" if out == "-0" else out


@dataclass(frozen=True)
class NbMapOpts:
    fillcol: str = "antiquewhite1"
    bordercol: str = "gray50"
    bordersize: float | None = None
    linkcol: str = "darkblue"
    linksize: float | None = None
    pointcol: str = "darkred"
    pointsize: float | None = None
    nodes: str = "point"  # point | numeric
    numericcol: str = "black"
    numericsize: float | None = None
    concavehull: bool = False
    hullcol: str = "darkgreen"
    hullsize: float | None = None


@dataclass(frozen=True)
class PredMapOpts:
    scale_low: str = "darkgreen"
    scale_mid: str = "ivory"
    scale_high: str = "darkred"
    scale_midpoint: float = 0.0
    bordercol: str = "gray50"
    bordersize: float | None = None


class _Canvas:
    """Shared geometry→SVG plumbing: bbox, 2% margin, y-flip, fixed formatting."""

    def __init__(self, units, title_band: float = 0.0):
        xs0, ys0, xs1, ys1 = [], [], [], []
        for u in units:
            x0, y0, x1, y1 = u.bounds
            xs0.append(x0)
            ys0.append(y0)
            xs1.append(x1)
            ys1.append(y1)
        xmin, ymin, xmax, ymax = min(xs0), min(ys0), max(xs1), max(ys1)
        mx = 0.02 * (xmax - xmin) or 1.0
        my = 0.02 * (ymax - ymin) or 1.0
        self.x0 = xmin - mx
        self.ytop = ymax + my
        self.vw = (xmax - xmin) + 2 * mx
        self.vh = (ymax - ymin) + 2 * my
        self.band = title_band * self.vh
        self.scale_ref = max(self.vw, self.vh)

    def pt(self, p) -> str:
        return f"{_fmt(p[0] - self.x0)},{_fmt(self.band + self.ytop - p[1])}"

    def xy(self, p) -> tuple[str, str]:
        return _fmt(p[0] - self.x0), _fmt(self.band + self.ytop - p[1])

    def path(self, unit: AreaUnit) -> str:
        parts = []
        for rings in unit.polygons:
            for ring in rings:
                pts = " L ".join(self.pt(p) for p in ring[:-1])
                parts.append(f"M {pts} Z")
        return " ".join(parts)

    def document(self, body: list[str]) -> bytes:
        h = self.vh + self.band
        width = 800.0
        height = round(width * h / self.vw, 2)
        head = (
            '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{_fmt(width)}" height="{_fmt(height)}" '
            f'viewBox="0 0 {_fmt(self.vw)} {_fmt(h)}">'
        )
        return "\n".join([head, *body, "</svg>"]).encode()


def _size(given: float | None, canvas: _Canvas, fraction: float) -> float:
    return float(given) if given is not None else fraction * canvas.scale_ref


def render_nb_map(coll: AreaCollection, nb: NbStructure | None = None, opts: NbMapOpts | None = None) -> bytes:
    """SVG of the collection with its neighbourhood graph overlaid.

    Polygons draw in collection order; each undirected edge is one centroid to
    centroid segment; nodes are circles or 1-based index glyphs; concave hulls,
    when enabled, sit beneath the links.
    """
    opts = opts or NbMapOpts()
    if nb is None:
        nb = coll.nb
    if nb is not None:
        missing = [n for n in nb.names if n not in set(coll.names)]
        if missing:
            raise RenderError(f"structure names not in the collection: {missing[:8]}")
    if opts.nodes not in ("point", "numeric"):
        raise RenderError(f"nodes mode must be 'point' or 'numeric', got {opts.nodes!r}")

    fill = _hex(resolve_colour(opts.fillcol))
    border = _hex(resolve_colour(opts.bordercol))
    linkc = _hex(resolve_colour(opts.linkcol))
    pointc = _hex(resolve_colour(opts.pointcol))
    numc = _hex(resolve_colour(opts.numericcol))
    hullc = _hex(resolve_colour(opts.hullcol))

    canvas = _Canvas(coll.units)
    bordersize = _size(opts.bordersize, canvas, 0.0025)
    linksize = _size(opts.linksize, canvas, 0.004)
    pointsize = _size(opts.pointsize, canvas, 0.012)
    numericsize = _size(opts.numericsize, canvas, 0.05)
    hullsize = _size(opts.hullsize, canvas, 0.003)

    body = ['<g id="units">']
    for u in coll.units:
        body.append(
            f'<path d="{canvas.path(u)}" fill="{fill}" stroke="{border}" '
            f'stroke-width="{_fmt(bordersize)}" fill-rule="evenodd"/>'
        )
    body.append("</g>")

    if opts.concavehull:
        body.append('<g id="hulls">')
        for u in coll.units:
            ring = concave_outline(u)
            pts = " ".join(canvas.pt(p) for p in ring)
            body.append(
                f'<polygon points="{pts}" fill="none" stroke="{hullc}" '
                f'stroke-width="{_fmt(hullsize)}"/>'
            )
        body.append("</g>")

    if nb is not None:
        centroids = {name: centroid(coll.unit(name)) for name in nb.names}
        body.append('<g id="links">')
        for i, j in nb.edges():
            x1, y1 = canvas.xy(centroids[nb.names[i - 1]])
            x2, y2 = canvas.xy(centroids[nb.names[j - 1]])
            body.append(
                f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                f'stroke="{linkc}" stroke-width="{_fmt(linksize)}"/>'
            )
        body.append("</g>")
        body.append('<g id="nodes">')
        for idx, name in enumerate(nb.names, start=1):
            x, y = canvas.xy(centroids[name])
            if opts.nodes == "numeric":
                body.append(
                    f'<text x="{x}" y="{y}" font-size="{_fmt(numericsize)}" '
                    f'font-family="sans-serif" fill="{numc}" text-anchor="middle" '
                    f'dominant-baseline="central">{idx}</text>'
                )
            else:
                body.append(f'<circle cx="{x}" cy="{y}" r="{_fmt(pointsize)}" fill="{pointc}"/>')
        body.append("</g>")

    return canvas.document(body)


def split_column_title(column: str) -> tuple[str, str]:
    """Column name → (title, subtitle): 'mrf.smooth.province' → ('province', 'mrf.smooth')."""
    for prefix in ("mrf.smooth.", "random.effect."):
        if column.startswith(prefix):
            return column[len(prefix):], prefix[:-1]
    return column, ""


def render_pred_maps(aug: AugmentedCollection, opts: PredMapOpts | None = None) -> list[bytes]:
    """One choropleth per non-se prediction column, in column order."""
    opts = opts or PredMapOpts()
    columns = aug.prediction_columns
    if not columns:
        raise RenderError("augmented collection has no prediction columns")
    lo = resolve_colour(opts.scale_low)
    mid = resolve_colour(opts.scale_mid)
    hi = resolve_colour(opts.scale_high)
    border = _hex(resolve_colour(opts.bordercol))

    out = []
    units = aug.base.units
    for column in columns:
        values = aug.column(column)
        vmin, vmax = min(values), max(values)
        canvas = _Canvas(units, title_band=0.14)
        bordersize = _size(opts.bordersize, canvas, 0.0025)
        title, subtitle = split_column_title(column)
        body = ['<g id="units">']
        for u, v in zip(units, values):
            fill = diverging_colour(v, lo, mid, hi, vmin, vmax, opts.scale_midpoint)
            body.append(
                f'<path d="{canvas.path(u)}" fill="{fill}" stroke="{border}" '
                f'stroke-width="{_fmt(bordersize)}" fill-rule="evenodd"/>'
            )
        body.append("</g>")
        tx = _fmt(canvas.vw / 2)
        body.append(
            f'<text id="title" x="{tx}" y="{_fmt(canvas.band * 0.45)}" '
            f'font-size="{_fmt(canvas.band * 0.38)}" font-family="sans-serif" '
            f'text-anchor="middle">{escape(title)}</text>'
        )
        body.append(
            f'<text id="subtitle" x="{tx}" y="{_fmt(canvas.band * 0.85)}" '
            f'font-size="{_fmt(canvas.band * 0.27)}" font-family="sans-serif" '
            f'fill="#555555" text-anchor="middle">{escape(subtitle)}</text>'
        )
        out.append(canvas.document(body))
    return out
