"""Pair recall of a blocking graph and pairwise clustering quality."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .comparison import BlockingGraph
from .records import GroundTruth


@dataclass(frozen=True)
class Metrics:
    pair_recall: float = float("nan")
    precision: float = float("nan")
    recall: float = float("nan")
    fscore: float = float("nan")
    candidates: int = 0
    queries: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _pairs_within(a: np.ndarray, b: np.ndarray) -> int:
    """Number of record pairs sharing both label ``a`` and label ``b``."""
    if len(a) == 0:
        return 0
    _, counts = np.unique(np.stack([a, b]), axis=1, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _count_pairs(labels: np.ndarray) -> int:
    _, counts = np.unique(labels, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def pair_recall(graph: BlockingGraph, gt: GroundTruth) -> float:
    """Fraction of true matching pairs connected through matching edges of graph."""
    if gt.match_count == 0:
        return 1.0
    truth = gt.cluster_of
    match = truth[graph.us] == truth[graph.vs]
    us, vs = graph.us[match], graph.vs[match]
    g = sparse.coo_matrix((np.ones(len(us)), (us, vs)), shape=(gt.n, gt.n))
    _, comp = connected_components(g, directed=False)
    return _pairs_within(truth, comp) / gt.match_count


def clustering_metrics(state, gt: GroundTruth) -> Metrics:
    """Pairwise precision, recall and F-score of a predicted clustering.

    ``state`` is a ClusterState or an array of predicted labels. Empty
    predictions have precision 1.
    """
    pred = np.asarray(state.labels() if hasattr(state, "labels") else state)
    predicted = _count_pairs(pred)
    tp = _pairs_within(pred, gt.cluster_of)
    precision = tp / predicted if predicted else 1.0
    recall = tp / gt.match_count if gt.match_count else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    queries = getattr(state, "queries_spent", 0)
    return Metrics(precision=precision, recall=recall, fscore=f, queries=queries)


def evaluate(graph: BlockingGraph, gt: GroundTruth, state=None) -> Metrics:
    pr = pair_recall(graph, gt)
    if state is None:
        return Metrics(pair_recall=pr, candidates=len(graph))
    m = clustering_metrics(state, gt)
    return Metrics(pr, m.precision, m.recall, m.fscore, len(graph), m.queries)
