"""Neighbourhood structures over polygon collections, areal regression, quick maps."""

__version__ = "0.1.0"

from .augment import AugmentedCollection, export_augmented, load_augmented, st_augment
from .fit import FitError, FitResult, fit_model, summary_json
from .formula import FormulaError, ModelSpec, format_formula, parse_formula
from .geom import AreaCollection, AreaUnit, GeometryError, dump_areas, load_areas
from .nbgraph import (
    IslandAudit,
    NbError,
    NbStructure,
    check_islands,
    components,
    dist_band,
    export,
    import_nb,
    manual_cut,
    manual_join,
    st_bridges,
)

__all__ = [
    "AreaCollection",
    "AreaUnit",
    "AugmentedCollection",
    "FitError",
    "FitResult",
    "FormulaError",
    "GeometryError",
    "IslandAudit",
    "ModelSpec",
    "NbError",
    "NbStructure",
    "check_islands",
    "components",
    "dist_band",
    "dump_areas",
    "export",
    "export_augmented",
    "fit_model",
    "format_formula",
    "import_nb",
    "load_areas",
    "load_augmented",
    "manual_cut",
    "manual_join",
    "parse_formula",
    "st_augment",
    "st_bridges",
    "summary_json",
    "__version__",
]
