"""Block scores from prior similarities and ER feedback.

A block's score is its mean pairwise match probability times its
uniformity, the exponential of minus the entropy of an estimated cluster
distribution (so 1 for a pure block). Both are computed on a sample of
``gamma * ceil(log2 n)`` records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hierarchy import BlockHierarchy


class SimilarityStore:
    """Per-pair match probability: feedback where resolved, prior otherwise.

    ``labels[r]`` is the entity id of record ``r`` (records never resolved
    keep their own id). ``nonmatch`` holds entity-id pairs declared
    non-matching; the declaration covers every record pair across the two
    entities.
    """

    def __init__(self, prior, n: int, labels=None, nonmatch=None):
        self.prior = prior
        self.n = n
        self.labels = np.arange(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
        pairs = set() if nonmatch is None else {(min(a, b), max(a, b)) for a, b in nonmatch}
        self._nonmatch = pairs
        keys = np.fromiter((a * n + b for a, b in pairs), dtype=np.int64, count=len(pairs))
        self._nonmatch_keys = np.sort(keys)

    @property
    def feedback_match(self) -> np.ndarray:
        return self.labels

    @property
    def feedback_nonmatch(self) -> set[tuple[int, int]]:
        return self._nonmatch

    def with_feedback(self, labels, nonmatch) -> "SimilarityStore":
        return SimilarityStore(self.prior, self.n, labels, nonmatch)

    def _override(self, la, lb, values):
        values = np.where(la == lb, 1.0, values)
        if self._nonmatch_keys.size:
            keys = np.minimum(la, lb) * self.n + np.maximum(la, lb)
            values = np.where(np.isin(keys, self._nonmatch_keys) & (la != lb), 0.0, values)
        return values

    def pairs(self, us, vs) -> np.ndarray:
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        return self._override(self.labels[us], self.labels[vs], self.prior.pairs(us, vs))

    def p_m(self, u: int, v: int) -> float:
        return float(self.pairs([u], [v])[0])

    def matrix(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        lab = self.labels[ids]
        m = self._override(lab[:, None], lab[None, :], self.prior.matrix(ids))
        np.fill_diagonal(m, 0.0)
        return m


@dataclass(frozen=True)
class BlockScore:
    p: float
    u: float
    score: float
    sampled: bool
    sample_size: int


def tfidf_init(size: int, n: int) -> float:
    if size < 1:
        raise ValueError("block must have at least one member")
    return math.log(1.0 + n / size)


def uniform_init(block=None) -> float:
    return 1.0


def sample_bound(gamma: int, n: int) -> int:
    return gamma * max(1, math.ceil(math.log2(n))) if n > 1 else gamma


def sample_block(members, gamma: int, n: int, seed) -> np.ndarray:
    """All members if the block is within the sampling bound, else a uniform
    sample without replacement of ``gamma * ceil(log2 n)`` members."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    members = np.asarray(members, dtype=np.int64)
    bound = sample_bound(gamma, n)
    if len(members) <= bound:
        return members
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(members, size=bound, replace=False))


def _upper_mean(m: np.ndarray) -> float:
    s = len(m)
    return float(np.triu(m, 1).sum() / (s * (s - 1) / 2))


def matching_probability(sample, sim: SimilarityStore) -> float:
    if len(sample) < 2:
        raise ValueError("matching probability needs at least two records")
    return _upper_mean(sim.matrix(sample))


def accuracy_sample_size(n: int, eps: float, c: float = 1.0) -> int:
    """Records to sample for a (1 +- eps) estimate of p(B): c * log2(n) / eps^2."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must be in (0, 1)")
    return math.ceil(c * max(1, math.ceil(math.log2(n))) / (eps * eps))


def sampled_probability(members, sim: SimilarityStore, size: int, seed) -> float:
    """p(B) on a uniform sample of ``size`` members (all of them if fewer)."""
    members = np.asarray(members, dtype=np.int64)
    if len(members) > size:
        members = np.sort(np.random.default_rng(seed).choice(members, size=size, replace=False))
    return matching_probability(members, sim)


def greedy_partition(pm: np.ndarray) -> list[int]:
    """Part sizes of the greedy expected-cluster-size partition.

    Repeatedly: compute each remaining record's expected cluster size E
    (sum of p_m to the other remaining records), take the record with the
    largest E plus the next floor(E) records in non-increasing E order, and
    recurse on the rest. Ties in E prefer records closer to the head.
    """
    alive = np.ones(len(pm), dtype=bool)
    e = pm.sum(axis=1)
    parts = []
    while alive.any():
        rem = np.flatnonzero(alive)
        head = int(rem[np.argmax(e[rem])])
        take = min(rem.size, 1 + int(math.floor(e[head] + 1e-9)))
        order = rem[np.lexsort((rem, -pm[head, rem], -e[rem]))]
        chosen = np.concatenate(([head], order[order != head]))[:take]
        parts.append(take)
        alive[chosen] = False
        e = e - pm[:, chosen].sum(axis=1)
    return parts


def uniformity_from_parts(parts) -> float:
    sizes = np.asarray(parts, dtype=np.float64)
    frac = sizes / sizes.sum()
    entropy = float(-(frac * np.log(frac)).sum())
    return math.exp(-entropy)


def estimate_uniformity(sample, sim: SimilarityStore) -> float:
    if len(sample) <= 1:
        return 1.0
    return uniformity_from_parts(greedy_partition(sim.matrix(sample)))


def score_block(members, sim: SimilarityStore, gamma: int, n: int, seed) -> BlockScore:
    sample = sample_block(members, gamma, n, seed)
    if len(sample) < 2:
        return BlockScore(0.0, 1.0, 0.0, False, len(sample))
    pm = sim.matrix(sample)
    p = _upper_mean(pm)
    u = uniformity_from_parts(greedy_partition(pm))
    return BlockScore(p, u, p * u, len(sample) < len(members), len(sample))


@dataclass
class ScoreTable:
    """Per-block scores indexed by hierarchy block id."""

    score: np.ndarray
    p: np.ndarray
    u: np.ndarray
    rescored: np.ndarray
    pairs_touched: int = 0

    def __getitem__(self, bid):
        return self.score[bid]

    def __len__(self) -> int:
        return len(self.score)

    def top(self, h: BlockHierarchy, k: int = 20) -> list[dict]:
        order = rank_blocks(self.score, h.sizes())[:k]
        return [{"block": h.describe(int(b)), "p": round(float(self.p[b]), 4),
                 "u": round(float(self.u[b]), 4), "score": round(float(self.score[b]), 4)}
                for b in order]


def rank_blocks(scores, sizes, ids=None) -> np.ndarray:
    """Block ids by score desc, then size asc, then id asc."""
    ids = np.arange(len(scores)) if ids is None else np.asarray(ids)
    scores = np.asarray(scores)[ids]
    sizes = np.asarray(sizes)[ids]
    return ids[np.lexsort((ids, sizes, -scores))]


def initial_scores(h: BlockHierarchy, method: str = "tfidf") -> ScoreTable:
    sizes = h.sizes()
    if method == "tfidf":
        s = np.log1p(h.n / sizes)
    elif method == "uniform":
        s = np.ones(len(sizes))
    else:
        raise ValueError(f"unknown score initialisation {method!r}")
    nan = np.full(len(sizes), np.nan)
    return ScoreTable(s, nan, nan.copy(), np.zeros(len(sizes), dtype=bool))


def score_blocks(h: BlockHierarchy, sim: SimilarityStore, cfg, round: int,
                 previous: ScoreTable | None = None) -> ScoreTable:
    """Round 1: size-based initial scores. Later rounds: sampled p * u for the
    ``rescore_factor * n`` blocks ranked highest by the previous round; all
    other blocks keep their previous score."""
    if round < 1:
        raise ValueError("round must be >= 1")
    if round == 1 or previous is None:
        return initial_scores(h, cfg.bc_init)
    sizes = h.sizes()
    prev = np.asarray(previous.score)
    if len(prev) < len(sizes):
        prev = np.concatenate([prev, initial_scores(h, cfg.bc_init).score[len(prev):]])
    table = ScoreTable(prev.copy(), previous.p.copy(), previous.u.copy(),
                       np.zeros(len(sizes), dtype=bool))
    limit = cfg.rescore_factor * h.n
    for bid in rank_blocks(prev, sizes)[:limit]:
        bs = score_block(h.members[bid], sim, cfg.gamma, h.n, (cfg.seed, round, int(bid)))
        table.score[bid], table.p[bid], table.u[bid] = bs.score, bs.p, bs.u
        table.rescored[bid] = True
        table.pairs_touched += bs.sample_size * (bs.sample_size - 1) // 2
    return table
