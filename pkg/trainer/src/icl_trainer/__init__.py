"""Meta in-context-learning trainer for the Fourier-regression benchmark.

Trains a decoder-only transformer (no positional encoding) on freshly sampled
regression prompts and exports its per-step predictions as record files that
the benchmark's ``ingest-validate``, ``metrics``, ``profile`` and ``risk``
commands consume.  The two packages communicate only through files: task
streams come in via ``gen`` output, predictions go out as records.
"""

from icl_trainer.config import ScenarioParams, TrainConfig, parse_grid_scenario_id
from icl_trainer.model import DecoderRegressor
from icl_trainer.sampling import PromptSampler
from icl_trainer.training import (
    TrainingDiverged,
    curriculum_length,
    curriculum_order,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from icl_trainer.export import export_records, read_stream_file, write_record_file

__all__ = [
    "ScenarioParams",
    "TrainConfig",
    "parse_grid_scenario_id",
    "DecoderRegressor",
    "PromptSampler",
    "TrainingDiverged",
    "curriculum_length",
    "curriculum_order",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "export_records",
    "read_stream_file",
    "write_record_file",
]
