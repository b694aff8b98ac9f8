"""Window-attention classifier for multivariate time series.

The public surface, bottom to top:

- :mod:`danet.tensor`: float64 reverse-mode autodiff on numpy arrays.
- :mod:`danet.data`: ``.ts`` file parsing, normalization, padding, batching.
- :mod:`danet.layers`: window partition, squeeze-excitation window gating,
  sparse and dense windowed attention, the dual-attention block.
- :mod:`danet.network`: model configuration, parameter init, forward pass,
  checkpoints.
- :mod:`danet.training`: cross-entropy, Adam, the training loop.
- :mod:`danet.evaluation`: accuracy/rank/win/MPCE comparison reports.
- :mod:`danet.estimator`: scikit-learn style ``DANetClassifier``.
- :mod:`danet.cli`: ``danet train / gradcheck / report`` commands.
"""

from danet.data import (
    BatchPlan,
    ChannelStats,
    MvDataset,
    ParseError,
    SchemaError,
    VocabularyError,
    make_batches,
    pad_to_multiple,
    parse_ts_file,
    write_ts_file,
    zscore_normalize,
)
from danet.estimator import DANetClassifier
from danet.evaluation import EvalReport, build_report, mpce, ranking_summary
from danet.gradcheck import gradcheck_report, run_gradcheck
from danet.network import (
    ModelConfig,
    ModelParams,
    expected_param_shapes,
    expected_stage_lengths,
    init_params,
    load_checkpoint,
    model_forward,
    padded_sequence_length,
    save_checkpoint,
)
from danet.tensor import ShapeError, Tensor
from danet.training import TrainConfig, cross_entropy, evaluate_split, train_model

__all__ = [
    "BatchPlan",
    "ChannelStats",
    "DANetClassifier",
    "EvalReport",
    "ModelConfig",
    "ModelParams",
    "MvDataset",
    "ParseError",
    "SchemaError",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "VocabularyError",
    "build_report",
    "cross_entropy",
    "evaluate_split",
    "expected_param_shapes",
    "expected_stage_lengths",
    "gradcheck_report",
    "init_params",
    "load_checkpoint",
    "make_batches",
    "model_forward",
    "mpce",
    "pad_to_multiple",
    "padded_sequence_length",
    "parse_ts_file",
    "ranking_summary",
    "run_gradcheck",
    "save_checkpoint",
    "train_model",
    "write_ts_file",
    "zscore_normalize",
]

__version__ = "0.1.0"
