"""Experiment harness: configs, grid runs, summaries, resource tables."""
from .config import (OUTPUT_ENV, DEFAULT_MODELS, BackendSpec, DatasetSpec, ExperimentConfig,
                     ModelSpec, config_from_dict, load_config, parse_layers, run_seed)
from .runner import (RECORD_COLUMNS, NoiseComparison, RunRecord, comparison_from_records,
                     emit_report, noise_comparison, read_records, resource_rows, resource_table, run_cell,
                     run_experiment, summarize, write_records)

__all__ = [
    "OUTPUT_ENV", "DEFAULT_MODELS", "BackendSpec", "DatasetSpec", "ExperimentConfig", "ModelSpec",
    "config_from_dict", "load_config", "parse_layers", "run_seed", "RECORD_COLUMNS",
    "NoiseComparison", "RunRecord", "comparison_from_records", "emit_report", "noise_comparison",
    "read_records", "resource_rows", "resource_table", "run_cell", "run_experiment", "summarize", "write_records",
]
