"""Simulated downstream ER: a noisy memoised oracle plus Edge and Node
strategies that grow a partial clustering incrementally."""

from __future__ import annotations

import numpy as np

from ._keyed import keyed_uniform
from .comparison import BlockingGraph
from .records import GroundTruth
from .scoring import SimilarityStore


class Oracle:
    """Answers "does u match v?" from ground truth, flipping each answer with
    probability ``error_rate``. With ``votes > 1`` the answer is the majority
    of that many independent noisy draws. Answers are memoised per pair."""

    def __init__(self, ground_truth: GroundTruth, error_rate: float = 0.0, seed: int = 0, votes: int = 1):
        if not 0.0 <= error_rate < 1.0:
            raise ValueError("error_rate must be in [0, 1)")
        if votes < 1 or votes % 2 == 0:
            raise ValueError("votes must be a positive odd number")
        self.ground_truth = ground_truth
        self.error_rate = error_rate
        self.seed = seed
        self.votes = votes
        self.memo: dict[tuple[int, int], bool] = {}

    def answer(self, u: int, v: int) -> bool:
        if u == v:
            raise ValueError("cannot query a record against itself")
        key = (u, v) if u < v else (v, u)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        truth = bool(self.ground_truth.cluster_of[u] == self.ground_truth.cluster_of[v])
        if self.error_rate > 0:
            flips = sum(float(keyed_uniform(self.seed, key[0], key[1], stream=k)[0]) < self.error_rate
                        for k in range(self.votes))
            ans = truth != (flips * 2 > self.votes)
        else:
            ans = truth
        self.memo[key] = ans
        return ans

    __call__ = answer


def oracle_answer(o: Oracle, u: int, v: int) -> bool:
    return o.answer(u, v)


class ClusterState:
    """Partial ER result: union-find over records plus non-match links
    between entity ids (component roots)."""

    def __init__(self, n: int):
        self.n = n
        self.parent = list(range(n))
        self.size = [1] * n
        self.nonmatch: dict[int, set[int]] = {}
        self.queries_spent = 0
        self.pairs_progressed = 0
        self.records_progressed = 0
        self.positives = 0
        self.negatives = 0
        self.conflicts_dropped = 0
        self.seen: set[int] = set()
        self.placed = np.zeros(n, dtype=bool)

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        # positive answers dominate: a stale non-match between the two goes away
        links_a = self.nonmatch.get(ra, set())
        links_b = self.nonmatch.pop(rb, set())
        if rb in links_a:
            links_a.discard(rb)
            self.conflicts_dropped += 1
        links_b.discard(ra)
        for other in links_b:
            s = self.nonmatch[other]
            s.discard(rb)
            s.add(ra)
            links_a.add(other)
        if links_a:
            self.nonmatch[ra] = links_a
        else:
            self.nonmatch.pop(ra, None)
        return ra

    def add_nonmatch(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        self.nonmatch.setdefault(ra, set()).add(rb)
        self.nonmatch.setdefault(rb, set()).add(ra)

    def are_nonmatch(self, ra: int, rb: int) -> bool:
        return rb in self.nonmatch.get(ra, ())

    def same(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def labels(self) -> np.ndarray:
        return np.fromiter((self.find(i) for i in range(self.n)), dtype=np.int64, count=self.n)

    def nonmatch_pairs(self) -> set[tuple[int, int]]:
        return {(a, b) for a, links in self.nonmatch.items() for b in links if a < b}

    def nonmatch_count(self) -> int:
        return sum(len(s) for s in self.nonmatch.values()) // 2

    def components(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for i in range(self.n):
            groups.setdefault(self.find(i), []).append(i)
        return list(groups.values())

    def _process(self, u: int, v: int, oracle: Oracle) -> bool | None:
        """Resolve one pair: by transitivity when possible, else by query.
        Returns the oracle's answer, or None when the pair was inferred."""
        ru, rv = self.find(u), self.find(v)
        if ru == rv or self.are_nonmatch(ru, rv):
            return None
        self.queries_spent += 1
        if oracle.answer(u, v):
            self.positives += 1
            self.union(ru, rv)
            return True
        self.negatives += 1
        self.add_nonmatch(ru, rv)
        return False


def _edge_order(graph: BlockingGraph) -> np.ndarray:
    return np.lexsort((graph.keys, -graph.weights))


def run_edge_er(graph: BlockingGraph, o: Oracle, state: ClusterState, pair_quota: int) -> ClusterState:
    """Process blocking-graph edges by weight desc until ``pair_quota`` new
    pairs have been processed. Transitively resolved pairs count as processed
    without spending a query; pairs processed in earlier calls are skipped."""
    if pair_quota < 1:
        raise ValueError("pair_quota must be >= 1")
    n = graph.n
    done = 0
    us, vs = graph.us, graph.vs
    for i in _edge_order(graph).tolist():
        u, v = int(us[i]), int(vs[i])
        key = u * n + v
        if key in state.seen:
            continue
        state.seen.add(key)
        state.pairs_progressed += 1
        done += 1
        state._process(u, v, o)
        if done >= pair_quota:
            break
    return state


def run_node_er(graph: BlockingGraph, o: Oracle, state: ClusterState, pair_quota: int,
                unit: str = "pairs") -> ClusterState:
    """Grow clusters record by record, highest blocking-graph degree first.

    Each record is compared, heaviest edge first, with already placed
    neighbours; one query per neighbouring cluster, stopping at the first
    positive answer. Progress is counted in processed pairs or, with
    ``unit="records"``, in processed records.
    """
    if pair_quota < 1:
        raise ValueError("pair_quota must be >= 1")
    if unit not in ("pairs", "records"):
        raise ValueError("unit must be 'pairs' or 'records'")
    n = graph.n
    deg = graph.per_node_degree
    order = np.lexsort((np.arange(n), -deg))
    adj: list[list[tuple[float, int]]] = [[] for _ in range(n)]
    for u, v, w in zip(graph.us.tolist(), graph.vs.tolist(), graph.weights.tolist()):
        adj[u].append((-w, v))
        adj[v].append((-w, u))
    done = 0
    for r in order.tolist():
        if done >= pair_quota:
            break
        if deg[r] == 0:
            continue
        pending = [w for _, w in sorted(adj[r])
                   if state.placed[w] and w != r and (min(r, w) * n + max(r, w)) not in state.seen]
        if state.placed[r] and not pending:
            continue
        for w in pending:
            state.seen.add(min(r, w) * n + max(r, w))
            state.pairs_progressed += 1
            if unit == "pairs":
                done += 1
            answer = state._process(r, w, o)
            if answer or (unit == "pairs" and done >= pair_quota):
                break
        if not state.placed[r]:
            state.placed[r] = True
            state.records_progressed += 1
            if unit == "records":
                done += 1
    return state


def apply_feedback(sim: SimilarityStore, state: ClusterState) -> SimilarityStore:
    """Similarity store whose overrides mirror the current partial clustering."""
    return sim.with_feedback(state.labels(), state.nonmatch_pairs())
