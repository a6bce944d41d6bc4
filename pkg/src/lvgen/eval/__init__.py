from .bruteforce import chamfer_brute, coverage_brute, mmd_brute, one_nna_brute
from .chamfer import chamfer, chamfer_matrix, set_eval_threads
from .generative import (
    SOURCES,
    CloudSet,
    coverage,
    generative_metrics,
    mmd,
    one_nna,
    subsample,
)
from .clinical import CLINICAL_METRICS, clinical_table, clinical_values, relative_error
from .report import MetricReport, render_figures

__all__ = [
    "chamfer_brute",
    "coverage_brute",
    "mmd_brute",
    "one_nna_brute",
    "chamfer",
    "chamfer_matrix",
    "set_eval_threads",
    "SOURCES",
    "CloudSet",
    "coverage",
    "generative_metrics",
    "mmd",
    "one_nna",
    "subsample",
    "CLINICAL_METRICS",
    "clinical_table",
    "clinical_values",
    "relative_error",
    "MetricReport",
    "render_figures",
]
