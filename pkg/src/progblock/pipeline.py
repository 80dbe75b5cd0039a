"""The progressive blocking loop: block, score, emit candidates, let ER make
some progress, feed its partial result back, repeat."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .blocking import BlockCollection, build_blocks
from .comparison import BlockingGraph, build_graph, effective_budget
from .er import ClusterState, Oracle, apply_feedback, run_edge_er, run_node_er
from .evaluation import clustering_metrics, pair_recall
from .hierarchy import BlockHierarchy, build_layers, clean_layers
from .records import GroundTruth, PipelineConfig, RecordSet
from .scoring import ScoreTable, SimilarityStore, score_blocks
from .similarity import JaccardPrior

log = logging.getLogger(__name__)


@dataclass
class RoundTrace:
    round: int
    H_edge_count: int
    pair_recall: float
    er_queries: int
    blocks_active: int
    fscore_partial: float
    wall_ms: int
    candidates_emitted: int = 0
    budget: int = 0
    nonmatch_edges: int = 0
    match_entries: int = 0
    pairs_progressed: int = 0
    positives: int = 0
    negatives: int = 0
    layers: list = field(default_factory=list)
    top_blocks: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fscore"] = self.fscore_partial
        return d


@dataclass
class PipelineResult:
    graph: BlockingGraph
    state: ClusterState
    traces: list[RoundTrace]
    converged: bool
    hierarchy: BlockHierarchy
    scores: ScoreTable
    final_pair_recall: float = float("nan")
    final_fscore: float = float("nan")

    @property
    def rounds(self) -> int:
        return len(self.traces)


def converged(old: BlockingGraph, new_graph: BlockingGraph) -> bool:
    """Edge-set equality; weights are ignored."""
    return len(old) == len(new_graph) and bool(np.array_equal(old.keys, new_graph.keys))


def round_quota(n: int, phi: float) -> int:
    """Pairs the ER step processes between two feedback rounds."""
    lg = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    return max(1, math.ceil(phi * n * lg * lg))


def run_er_step(graph: BlockingGraph, oracle: Oracle, state: ClusterState, cfg: PipelineConfig,
                quota: int) -> ClusterState:
    if cfg.er_method == "node":
        unit = cfg.node_progress
        if unit == "records":
            quota = max(1, math.ceil(cfg.phi * graph.n))
        return run_node_er(graph, oracle, state, quota, unit)
    return run_edge_er(graph, oracle, state, quota)


def run_pblocking(rs: RecordSet, gt: GroundTruth, cfg: PipelineConfig, *, prior=None,
                  base: BlockCollection | None = None, finish_er: bool = True,
                  top_blocks: int = 0) -> PipelineResult:
    """Run the feedback loop until the candidate graph stops changing or the
    round limit ``floor(1/phi)`` is hit.

    ``gt`` feeds only the oracle and the per-round evaluation. ``prior``
    defaults to token Jaccard; ``base`` overrides block building. With
    ``finish_er`` the ER method is run over every remaining edge of the final
    graph, so the returned clustering is a complete ER result on it.
    """
    n = rs.n
    if gt.n != n:
        raise ValueError(f"ground truth covers {gt.n} records, dataset has {n}")
    if base is None:
        base = build_blocks(rs, cfg.bb_method, q=cfg.qgram_q, w=cfg.window_w,
                            canopy_threshold=cfg.canopy_threshold, seed=cfg.seed)
    if prior is None:
        prior = JaccardPrior.from_records(rs)
    sim = SimilarityStore(prior, n)
    if cfg.max_rounds == 1:
        # refined layers are never activated without feedback
        h = BlockHierarchy(base, cfg.hierarchy_depth_d)
    else:
        h = build_layers(base, cfg.hierarchy_depth_d, cfg.blocks_per_record_cap)
    budget = effective_budget(n, cfg.pair_budget_M, cfg.budget_constant)
    quota = round_quota(n, cfg.phi)
    oracle = Oracle(gt, cfg.oracle_error_rate, cfg.seed, cfg.oracle_votes)
    state = ClusterState(n)

    def trace(rnd, graph, emitted, started):
        t = RoundTrace(
            round=rnd, H_edge_count=len(graph), pair_recall=pair_recall(graph, gt),
            er_queries=state.queries_spent, blocks_active=int(h.active.sum()),
            fscore_partial=clustering_metrics(state, gt).fscore,
            wall_ms=int((time.perf_counter() - started) * 1000), candidates_emitted=emitted,
            budget=budget, nonmatch_edges=state.nonmatch_count(), match_entries=n,
            pairs_progressed=state.pairs_progressed, positives=state.positives,
            negatives=state.negatives, layers=h.layer_counts(),
            top_blocks=scores.top(h, top_blocks) if top_blocks else [])
        log.info("round %d: |H|=%d PR=%.4f queries=%d", rnd, t.H_edge_count, t.pair_recall, t.er_queries)
        return t

    started = time.perf_counter()
    rnd = 1
    try:
        scores = score_blocks(h, sim, cfg, 1)
        graph, emitted = build_graph(h, scores, sim, budget, cfg.top_k_per_record)
        traces = [trace(1, graph, emitted, started)]
        done = False
        for rnd in range(2, cfg.max_rounds + 1):
            started = time.perf_counter()
            run_er_step(graph, oracle, state, cfg, quota)
            sim = apply_feedback(sim, state)
            scores = score_blocks(h, sim, cfg, rnd, scores)
            clean_layers(h, scores.score)
            new_graph, emitted = build_graph(h, scores, sim, budget, cfg.top_k_per_record)
            traces.append(trace(rnd, new_graph, emitted, started))
            done = converged(graph, new_graph)
            graph = new_graph
            if done:
                break
    except Exception as exc:
        raise RuntimeError(f"round {rnd}: {exc}") from exc

    if finish_er and len(graph):
        run_er_step(graph, oracle, state, replace(cfg, node_progress="pairs"), len(graph))
    return PipelineResult(graph, state, traces, done, h, scores,
                          final_pair_recall=traces[-1].pair_recall,
                          final_fscore=clustering_metrics(state, gt).fscore)
