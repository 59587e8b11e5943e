"""Battery state-of-charge estimation: cell model, fitting, Kalman filters, benchmarks."""

from ._core import (
    DomainError,
    EcmParams,
    Error,
    FitError,
    NumericalFault,
    OcvTable,
    ParseError,
    ValidationError,
    __version__,
    build_ocv_table,
    default_cell,
    default_ocv_table,
    estimate,
    fit_passive_components,
    mae,
    make_drive_profile,
    make_incremental_current_profile,
    run_sweep,
    simulate,
)

__all__ = [
    "DomainError",
    "EcmParams",
    "Error",
    "FitError",
    "NumericalFault",
    "OcvTable",
    "ParseError",
    "ValidationError",
    "__version__",
    "build_ocv_table",
    "default_cell",
    "default_ocv_table",
    "estimate",
    "fit_passive_components",
    "mae",
    "make_drive_profile",
    "make_incremental_current_profile",
    "run_sweep",
    "simulate",
]
