"""SVG rendering: determinism, element counts, and the diverging colour rule."""

import json

import pytest

from arelink.augment import AugmentedCollection, st_augment
from arelink.fit import fit_model
from arelink.geom import load_areas
from arelink.nbgraph import st_bridges
from arelink.render import (
    NbMapOpts,
    PredMapOpts,
    RenderError,
    diverging_colour,
    render_nb_map,
    render_pred_maps,
    resolve_colour,
    split_column_title,
)

from .conftest import rect_geojson


@pytest.fixture
def rect_coll():
    return st_bridges(load_areas(rect_geojson(), "name"), "name")


def test_nb_map_counts_polygons_and_edges(rect_coll):
    svg = render_nb_map(rect_coll).decode()
    assert svg.count("<path ") == 5
    # (2 + 3 + 3 + 1 + 1) / 2 undirected links
    assert svg.count("<line ") == 5
    assert svg.count("<circle ") == 5
    assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")


def test_nb_map_is_byte_deterministic(rect_coll):
    opts = NbMapOpts(nodes="numeric", concavehull=True, fillcol="gray90")
    a = render_nb_map(rect_coll, opts=opts)
    b = render_nb_map(rect_coll, opts=opts)
    assert a == b


def test_numeric_nodes_render_indices(rect_coll):
    svg = render_nb_map(rect_coll, opts=NbMapOpts(nodes="numeric")).decode()
    for i in range(1, 6):
        assert f">{i}</text>" in svg
    assert "<circle" not in svg


def test_hulls_sit_beneath_links(rect_coll):
    svg = render_nb_map(rect_coll, opts=NbMapOpts(concavehull=True)).decode()
    assert svg.count("<polygon ") == 5
    assert svg.index('<g id="hulls">') < svg.index('<g id="links">')
    assert svg.index('<g id="units">') < svg.index('<g id="hulls">')


def test_structure_outside_collection_is_rejected(rect_coll):
    from arelink.nbgraph import nb_from_edges

    alien = nb_from_edges(["Rect1", "Nowhere"], [(1, 2)])
    with pytest.raises(RenderError, match="Nowhere"):
        render_nb_map(rect_coll, nb=alien)


def test_empty_edge_structure_draws_no_segments(rect_coll):
    from arelink.nbgraph import nb_from_edges

    lone = nb_from_edges(list(rect_coll.names), [])
    svg = render_nb_map(rect_coll, nb=lone).decode()
    assert svg.count("<path ") == 5
    assert "<line " not in svg


def test_colour_tokens():
    assert resolve_colour("antiquewhite1") == (0xFF, 0xEF, 0xDB)
    assert resolve_colour("gray90") == (0xE5, 0xE5, 0xE5)
    assert resolve_colour("grey90") == (0xE5, 0xE5, 0xE5)
    assert resolve_colour("#0a0B0c") == (10, 11, 12)
    assert resolve_colour("Ivory") == (255, 255, 240)
    with pytest.raises(RenderError, match="unknown colour token"):
        resolve_colour("heliotrope")
    with pytest.raises(RenderError):
        render_nb_map(
            st_bridges(load_areas(rect_geojson(), "name"), "name"),
            opts=NbMapOpts(fillcol="not-a-colour"),
        )


def test_diverging_scale_midpoint_and_linearity():
    lo, mid, hi = (0, 0, 0), (100, 100, 100), (200, 0, 0)
    # exact midpoint value takes the mid colour
    assert diverging_colour(0.0, lo, mid, hi, -1.0, 2.0, 0.0) == "#646464"
    # halfway from vmin to midpoint is the RGB halfway point
    assert diverging_colour(-0.5, lo, mid, hi, -1.0, 2.0, 0.0) == "#323232"
    # halfway from midpoint to vmax
    assert diverging_colour(1.0, lo, mid, hi, -1.0, 2.0, 0.0) == "#963232"
    # clamping beyond the anchors
    assert diverging_colour(99.0, lo, mid, hi, -1.0, 2.0, 0.0) == "#C80000"
    assert diverging_colour(-99.0, lo, mid, hi, -1.0, 2.0, 0.0) == "#000000"
    # constant column collapses to the mid colour
    assert diverging_colour(5.0, lo, mid, hi, 5.0, 5.0, 0.0) == "#646464"


def test_title_subtitle_split():
    assert split_column_title("mrf.smooth.province") == ("province", "mrf.smooth")
    assert split_column_title("random.effect.llti|msoa") == ("llti|msoa", "random.effect")
    assert split_column_title("random.effect.msoa") == ("msoa", "random.effect")


def fitted_rect_aug():
    doc = rect_geojson({f"Rect{i}": {"resp": [2.0, 1.0, 0.0, -1.0, 3.0][i - 1]} for i in range(1, 6)})
    coll = st_bridges(load_areas(doc, "name"), "name")
    fit = fit_model(coll, "resp ~ s(name, bs='mrf')", family="gaussian")
    return st_augment(fit, coll)


def test_pred_maps_one_per_prediction_column():
    aug = fitted_rect_aug()
    maps = render_pred_maps(aug)
    assert len(maps) == len(aug.prediction_columns) == 1
    svg = maps[0].decode()
    assert svg.count("<path ") == 5
    assert ">name</text>" in svg
    assert ">mrf.smooth</text>" in svg
    assert render_pred_maps(aug)[0] == maps[0]  # deterministic bytes


def test_constant_column_renders_all_mid(rect_coll):
    aug = AugmentedCollection(
        base=rect_coll,
        added=(
            ("mrf.smooth.name", (0.7, 0.7, 0.7, 0.7, 0.7)),
            ("se.mrf.smooth.name", (0.1, 0.1, 0.1, 0.1, 0.1)),
        ),
    )
    opts = PredMapOpts(scale_low="darkgreen", scale_mid="ivory", scale_high="darkred")
    svg = render_pred_maps(aug, opts)[0].decode()
    assert svg.count('fill="#FFFFF0"') == 5


def test_midpoint_value_gets_mid_colour(rect_coll):
    aug = AugmentedCollection(
        base=rect_coll,
        added=(
            ("mrf.smooth.name", (-1.0, 0.0, 2.0, 1.0, -0.5)),
            ("se.mrf.smooth.name", (0.1,) * 5),
        ),
    )
    svg = render_pred_maps(aug, PredMapOpts(scale_midpoint=0.0))[0].decode()
    paths = [ln for ln in svg.splitlines() if ln.startswith("<path ")]
    assert 'fill="#FFFFF0"' in paths[1]  # Rect2 carries the exact midpoint value
    assert 'fill="#006400"' in paths[0]  # vmin takes the low anchor
    assert 'fill="#8B0000"' in paths[2]  # vmax takes the high anchor


def test_pred_maps_require_a_prediction_column(rect_coll):
    bare = AugmentedCollection(base=rect_coll, added=())
    with pytest.raises(RenderError, match="no prediction columns"):
        render_pred_maps(bare)
