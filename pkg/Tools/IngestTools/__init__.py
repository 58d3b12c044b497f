"""Dataset loading, validation and city aggregation."""

from .ingest_core import (
    DEFAULT_EXCLUDED_DIVISIONS,
    SCHEMAS,
    aggregate_population,
    aggregate_to_cities,
    filter_sectors,
    load_dataset,
    write_dataset,
)
from .models import AuxCityPanel, CommutingTable, EmploymentPanel, FirmYearTable, FlowMatrix, PopulationPanel

__all__ = [
    "AuxCityPanel",
    "CommutingTable",
    "DEFAULT_EXCLUDED_DIVISIONS",
    "EmploymentPanel",
    "FirmYearTable",
    "FlowMatrix",
    "PopulationPanel",
    "SCHEMAS",
    "aggregate_population",
    "aggregate_to_cities",
    "filter_sectors",
    "load_dataset",
    "write_dataset",
]
