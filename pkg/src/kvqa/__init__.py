"""Knowledge-based visual question answering, built from first principles.

The pipeline: retrieve facts for a question, write them into a key-value
memory whose values keep all three triplet elements, build a spatial graph
over detected objects, then alternate memory reads and knowledge-guided
graph attention for a configurable number of reasoning steps before
classifying the answer. Training runs on a small reverse-mode autodiff
engine; everything is deterministic under a seed.
"""

from . import ablation, autodiff, config, data, estimator, graph, memory, model
from . import prepare, retrieval, training
from .ablation import AblationSetup, AblationTable, run_ablation
from .estimator import AnswerClassifier, SamplePreparer
from .graph import SpatialGraph, build_graph
from .memory import KnowledgeMemory, build_memory, read_memory
from .model import ModelConfig, ModelOutput, init_params, run_model, small_config
from .prepare import PreparedSample, prepare_dataset, prepare_sample
from .retrieval import build_query, retrieve_top_k
from .training import (
    EvalReport,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    evaluate,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ablation", "autodiff", "config", "data", "estimator", "graph", "memory",
    "model", "prepare", "retrieval", "training",
    "AblationSetup", "AblationTable", "run_ablation",
    "AnswerClassifier", "SamplePreparer",
    "SpatialGraph", "build_graph",
    "KnowledgeMemory", "build_memory", "read_memory",
    "ModelConfig", "ModelOutput", "init_params", "run_model", "small_config",
    "PreparedSample", "prepare_dataset", "prepare_sample",
    "build_query", "retrieve_top_k",
    "EvalReport", "TrainConfig", "TrainingDiverged", "TrainResult",
    "evaluate", "load_checkpoint", "lr_at", "save_checkpoint", "train",
    "__version__",
]
