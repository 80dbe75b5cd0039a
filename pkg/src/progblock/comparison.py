"""Comparison cleaning: budgeted candidate enumeration and meta-blocking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .hierarchy import BlockHierarchy
from .records import DataFormatError
from .scoring import rank_blocks


def _score_array(scores) -> np.ndarray:
    return np.asarray(getattr(scores, "score", scores), dtype=np.float64)


def effective_budget(n: int, max_pairs: int, c: float = 4.0) -> int:
    if n < 2:
        return 1
    return max(1, min(int(max_pairs), math.ceil(c * n * math.log2(n) ** 2)))


@dataclass
class BlockingGraph:
    """Candidate pairs ``(us[i], vs[i])`` with ``us < vs``, sorted by pair key."""

    n: int
    us: np.ndarray
    vs: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_pairs(cls, n: int, us, vs, weights=None) -> "BlockingGraph":
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        if np.any(us == vs):
            raise ValueError("self pairs are not allowed")
        a, b = np.minimum(us, vs), np.maximum(us, vs)
        w = np.ones(len(a)) if weights is None else np.asarray(weights, dtype=np.float64)
        keys, first = np.unique(a * n + b, return_index=True)
        return cls(n, keys // n, keys % n, w[first])

    @classmethod
    def empty(cls, n: int) -> "BlockingGraph":
        z = np.zeros(0, dtype=np.int64)
        return cls(n, z, z.copy(), np.zeros(0))

    def __len__(self) -> int:
        return len(self.us)

    @property
    def keys(self) -> np.ndarray:
        return self.us * self.n + self.vs

    @property
    def edges(self) -> set[tuple[int, int]]:
        return set(zip(self.us.tolist(), self.vs.tolist()))

    @property
    def per_node_degree(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.us, self.vs]), minlength=self.n)

    def weight_of(self, u: int, v: int) -> float:
        a, b = min(u, v), max(u, v)
        i = np.searchsorted(self.keys, a * self.n + b)
        if i < len(self) and self.us[i] == a and self.vs[i] == b:
            return float(self.weights[i])
        raise KeyError((u, v))


def write_edges(graph: BlockingGraph, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "weight"])
        for u, v, wt in zip(graph.us.tolist(), graph.vs.tolist(), graph.weights.tolist()):
            w.writerow([u, v, repr(wt)])


def load_edges(path, n: int) -> BlockingGraph:
    """Read ``u,v[,weight]`` rows; a non-numeric first row is a header."""
    us, vs, ws = [], [], []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                u, v = int(row[0]), int(row[1])
                wt = float(row[2]) if len(row) > 2 and row[2] != "" else 1.0
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise DataFormatError(f"{path}: line {lineno}: expected u,v[,weight]") from None
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise DataFormatError(f"{path}: line {lineno}: bad edge ({u}, {v})")
            us.append(u)
            vs.append(v)
            ws.append(wt)
    return BlockingGraph.from_pairs(n, us, vs, ws)


def _block_pairs(members: np.ndarray, n: int):
    s = len(members)
    if s * (s - 1) // 2 <= 1_000_000:
        ii, jj = np.triu_indices(s, 1)
        yield members[ii] * n + members[jj]
        return
    for i in range(s - 1):
        yield members[i] * n + members[i + 1:]


def enumerate_candidates(h: BlockHierarchy, scores, budget: int, ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Emit distinct intra-block pairs of active blocks, best blocks first.

    Blocks are visited by score desc, size asc, id asc; the block that
    crosses the budget is cut in member-id order. Returns ``(us, vs)`` in
    emission order.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = h.n
    sizes = h.sizes()
    ids = h.active_ids() if ids is None else np.asarray(ids)
    ids = ids[sizes[ids] >= 2]
    order = rank_blocks(_score_array(scores), sizes, ids)
    seen = np.zeros(0, dtype=np.int64)
    emitted: list[np.ndarray] = []
    remaining = budget
    pending: list[np.ndarray] = []
    pending_count = 0

    def flush():
        nonlocal seen, remaining, pending, pending_count
        keys = np.concatenate(pending)
        pending, pending_count = [], 0
        _, first = np.unique(keys, return_index=True)
        fresh = keys[np.sort(first)]
        if seen.size:
            fresh = fresh[~np.isin(fresh, seen, assume_unique=True)]
        fresh = fresh[:remaining]
        if fresh.size:
            emitted.append(fresh)
            seen = np.union1d(seen, fresh)
            remaining -= fresh.size

    for bid in order:
        for chunk in _block_pairs(h.members[bid], n):
            pending.append(chunk)
            pending_count += chunk.size
            if pending_count >= max(remaining, 65536):
                flush()
                if remaining == 0:
                    break
        if remaining == 0:
            break
    if pending and remaining:
        flush()
    keys = np.concatenate(emitted) if emitted else np.zeros(0, dtype=np.int64)
    return keys // n, keys % n


def shared_block_scores(h: BlockHierarchy, scores, us, vs) -> np.ndarray:
    """Sum of scores over active blocks containing both endpoints of each pair."""
    ids = h.active_ids()
    if len(us) == 0 or ids.size == 0:
        return np.zeros(len(us))
    rows = np.concatenate([h.members[b] for b in ids])
    cols = np.repeat(np.arange(ids.size), [len(h.members[b]) for b in ids])
    member = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(h.n, ids.size))
    weighted = member.multiply(_score_array(scores)[ids][None, :]).tocsr()
    out = np.empty(len(us))
    step = 200_000
    for lo in range(0, len(us), step):
        a, b = us[lo:lo + step], vs[lo:lo + step]
        out[lo:lo + step] = np.asarray(weighted[a].multiply(member[b]).sum(axis=1)).ravel()
    return out


def top_k_filter(n: int, us, vs, weights, k: int) -> np.ndarray:
    """Mask of pairs ranked within the top ``k`` of either endpoint."""
    m = len(us)
    if m == 0:
        return np.zeros(0, dtype=bool)
    node = np.concatenate([us, vs])
    other = np.concatenate([vs, us])
    w = np.concatenate([weights, weights])
    edge = np.concatenate([np.arange(m), np.arange(m)])
    order = np.lexsort((other, -w, node))
    node_sorted = node[order]
    starts = np.searchsorted(node_sorted, node_sorted, side="left")
    rank = np.arange(order.size) - starts
    keep = np.zeros(m, dtype=bool)
    keep[edge[order[rank < k]]] = True
    return keep


def meta_block(us, vs, sim, h: BlockHierarchy, scores, k: int) -> BlockingGraph:
    """Weight pairs by prior similarity times shared block score; keep a pair
    if it is among the ``k`` heaviest pairs of either endpoint."""
    if k < 1:
        raise ValueError("k must be >= 1")
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    prior = sim.prior.pairs(us, vs) if len(us) else np.zeros(0)
    weights = prior * shared_block_scores(h, scores, us, vs)
    keep = top_k_filter(h.n, us, vs, weights, k)
    return BlockingGraph.from_pairs(h.n, us[keep], vs[keep], weights[keep])


def build_graph(h: BlockHierarchy, scores, sim, budget: int, k: int):
    """Enumerate within budget, then meta-block. Returns (graph, emitted)."""
    us, vs = enumerate_candidates(h, scores, budget)
    return meta_block(us, vs, sim, h, scores, k), len(us)
