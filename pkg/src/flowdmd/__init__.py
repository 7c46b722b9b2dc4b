"""Exact dynamic mode decomposition for weekly origin-destination flows."""

__version__ = "0.1.0"

from .dmd import DmdModel, fit, load_model, predict, reconstruct, save_model, spectrum
from .evaluation import (
    ErrorReport,
    PlantedSystem,
    SplitSpec,
    evaluate_split,
    generate_planted,
    relative_l2_error,
    relative_linf_error,
)
from .ingest import (
    ColumnMap,
    FlowRecord,
    OdMatrix,
    PlaceIndex,
    SnapshotMatrix,
    build_od_matrix,
    build_snapshot_matrix,
    infer_pop_flow,
    parse_flow_csv,
    symmetrize,
)

__all__ = [
    "ColumnMap", "DmdModel", "ErrorReport", "FlowRecord", "OdMatrix", "PlaceIndex",
    "PlantedSystem", "SnapshotMatrix", "SplitSpec", "build_od_matrix",
    "build_snapshot_matrix", "evaluate_split", "fit", "generate_planted",
    "infer_pop_flow", "load_model", "parse_flow_csv", "predict", "reconstruct",
    "relative_l2_error", "relative_linf_error", "save_model", "spectrum", "symmetrize",
]
