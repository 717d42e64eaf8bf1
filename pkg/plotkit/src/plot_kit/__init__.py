"""Figure rendering for run artifacts; consumes only the pinned CSV schemas."""

from .panels import (
    EVOLUTION_SCHEMA,
    PATHS_SCHEMA,
    NoRowsError,
    PanelSpec,
    SchemaError,
    load_table,
    panel_data,
    render,
    render_grid,
)

__version__ = "0.1.0"
