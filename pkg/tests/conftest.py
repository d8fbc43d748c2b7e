import json

import pytest

from arelink import load_areas, st_bridges

# The five-rectangle fixture: three mutually contiguous rectangles and two
# islands (Rect4 off to the east, Rect5 floating above Rect1).
RECT_RINGS = {
    "Rect1": [(0, 0), (2, 0), (2, 2), (0, 2)],
    "Rect2": [(2, 0), (4, 0), (4, 2), (2, 2)],
    "Rect3": [(2, 2), (4, 2), (4, 4), (2, 4)],
    "Rect4": [(5, 0), (6, 0), (6, 1), (5, 1)],
    "Rect5": [(0.8, 3), (1.8, 3), (1.8, 4), (0.8, 4)],
}


def rect_geojson(extra_props=None):
    feats = []
    for name, ring in RECT_RINGS.items():
        coords = [list(p) for p in ring] + [list(ring[0])]
        props = {"name": name}
        if extra_props:
            props.update(extra_props.get(name, {}))
        feats.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": [coords]},
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": feats})


@pytest.fixture
def rects():
    return load_areas(rect_geojson(), "name")


@pytest.fixture
def rects_nb(rects):
    return st_bridges(rects, add_to_dataframe=False)
