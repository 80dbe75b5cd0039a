"""Progressive blocking for entity resolution."""

from .blocking import Block, BlockCollection, build_blocks
from .comparison import BlockingGraph, effective_budget
from .er import ClusterState, Oracle
from .evaluation import Metrics, clustering_metrics, pair_recall
from .hierarchy import BlockHierarchy, build_layers, clean_layers
from .pipeline import RoundTrace, converged, run_pblocking
from .records import GroundTruth, PipelineConfig, Record, RecordSet, load_dataset, load_ground_truth
from .scoring import SimilarityStore, score_blocks

__all__ = [
    "Block", "BlockCollection", "BlockHierarchy", "BlockingGraph", "ClusterState", "GroundTruth",
    "Metrics", "Oracle", "PipelineConfig", "Record", "RecordSet", "RoundTrace", "SimilarityStore",
    "build_blocks", "build_layers", "clean_layers", "clustering_metrics", "converged",
    "effective_budget", "load_dataset", "load_ground_truth", "pair_recall", "run_pblocking",
    "score_blocks",
]
