from .metrics import (
    ClipProvider, DinoProvider, MetricsReport, Providers, clip_d, clip_t, composite, dino_i,
)
from .report import ReportRow, emit_report, read_report, rows_from_results
from .runner import RouterMode, VariantResult, default_grid, run_variant, sweep
from .suite import EditCase, generate_suite, load_suite, benchmark_split, save_suite, stratify

__all__ = [
    "ClipProvider", "DinoProvider", "MetricsReport", "Providers", "clip_d", "clip_t", "composite",
    "dino_i", "ReportRow", "emit_report", "read_report", "rows_from_results", "RouterMode",
    "VariantResult", "default_grid", "run_variant", "sweep", "EditCase", "generate_suite",
    "load_suite", "benchmark_split", "save_suite", "stratify",
]
