"""Weight-sharing design-space exploration for small CNNs."""

from .codebook import Codebook, CompressionStats, apply_codebook, kmeans_1d, kmeans_1d_all, layer_compression
from .errors import FormatError, InfeasibleError, RankDeficientError, ShapeError, WSError
from .layer_explorer import CandidateSet, CurvePoint, SensitivityCurve, SweepConfig, select_layer_candidates, sweep_model
from .model import LabeledDataset, LayerSpec, ModelSpec, accuracy_loss, forward, score, score_calls
from .network_explorer import (
    EvalRecord,
    ParetoFront,
    compare_fronts,
    enumerate_ktuples,
    exhaustive_explore,
    hypervolume,
    pareto_front,
    predicted_explore,
    predicted_pipeline,
)
from .predictor import PredictionModel, RegressionSample, fit, predict, validate

__version__ = "0.1.0"
