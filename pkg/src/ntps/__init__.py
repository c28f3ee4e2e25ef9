"""Next-token/perception subspace overlap scoring for sentence corpora.

The library measures how much of the label-relevant feature subspace of a
sequence model's hidden states is already captured by the directions that
drive next-token prediction. Everything downstream of raw activations runs
off second-moment summaries: accumulate once, then score, sweep, compare
against task metrics, or rank datasets by adaptation headroom. A synthetic
corpus generator with a planted overlap level backs the validation suite.
"""

from .analysis import (
    GainEntry,
    GainPrediction,
    LogisticFit,
    ProbeFit,
    SweepCell,
    SweepResult,
    logistic_probe,
    max_workers,
    ols_probe,
    one_hot,
    predict_lora_gain,
    score_stats,
    spearman,
    sweep,
)
from .formats import (
    FileHeader,
    FormatError,
    MetricsRow,
    iter_activations,
    read_activation_header,
    read_activations,
    read_metrics,
    read_stats,
    write_activations,
    write_metrics,
    write_stats,
)
from .linalg import EigPair, check_symmetric, pinv, projector, solve_gevp
from .stats import Moments, SentenceSample, SufficientStats, merge, selection_products
from .subspace import (
    BoundsReport,
    MarginCheck,
    Subspace,
    autoregressive_subspace,
    excess_loss_and_bounds,
    k_from_proportion,
    margin_decode_check,
    ntps,
    optimal_w,
    optimal_z,
    perception_loss,
    perception_subspace,
)
from .synth import (
    SynthConfig,
    corpus_moments,
    default_grid,
    generate,
    planted_frames,
    theorem_suite,
)

__version__ = "0.1.0"

__all__ = [
    "BoundsReport",
    "EigPair",
    "FileHeader",
    "FormatError",
    "GainEntry",
    "GainPrediction",
    "LogisticFit",
    "MarginCheck",
    "MetricsRow",
    "Moments",
    "ProbeFit",
    "SentenceSample",
    "Subspace",
    "SufficientStats",
    "SweepCell",
    "SweepResult",
    "SynthConfig",
    "autoregressive_subspace",
    "check_symmetric",
    "corpus_moments",
    "default_grid",
    "excess_loss_and_bounds",
    "generate",
    "iter_activations",
    "k_from_proportion",
    "logistic_probe",
    "margin_decode_check",
    "max_workers",
    "merge",
    "ntps",
    "ols_probe",
    "one_hot",
    "optimal_w",
    "optimal_z",
    "perception_loss",
    "perception_subspace",
    "pinv",
    "planted_frames",
    "predict_lora_gain",
    "projector",
    "read_activation_header",
    "read_activations",
    "read_metrics",
    "read_stats",
    "score_stats",
    "selection_products",
    "solve_gevp",
    "spearman",
    "sweep",
    "write_activations",
    "write_metrics",
    "write_stats",
]
