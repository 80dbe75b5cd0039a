"""Synthetic instances: geometric block generation on a sphere and the noisy
edge similarity model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._keyed import keyed_uniform
from .blocking import BlockCollection
from .records import GroundTruth, RecordSet


def _labels_from_sizes(cluster_sizes, n: int) -> np.ndarray:
    sizes = [int(s) for s in cluster_sizes]
    if sum(sizes) != n or any(s < 1 for s in sizes):
        raise ValueError(f"cluster sizes must be positive and sum to n={n}")
    return np.repeat(np.arange(len(sizes)), sizes)


def uniform_sphere(n: int, t: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform on the unit sphere S^t in R^(t+1)."""
    x = rng.standard_normal((n, t + 1))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass(frozen=True)
class GeometricModel:
    n: int
    t: int = 2
    alpha: float = 2.0
    cluster_sizes: tuple[int, ...] = ()
    seed: int = 0
    clustered_placement: bool = False
    spread: float = 0.05

    @property
    def ball_count(self) -> int:
        """Expected points in a ball of volume alpha * ln(n) / n."""
        return math.ceil(self.alpha * math.log(self.n))


def _stub_records(blocks: BlockCollection) -> RecordSet:
    # block keys double as tokens, so a record's tokens are the blocks it is in
    return RecordSet.from_texts(" ".join(f"b{b}" for b in mine) for mine in blocks.record_to_blocks)


def ball_blocks(points: np.ndarray, k: int, chunk: int = 1024) -> list[np.ndarray]:
    """For every point, itself plus every point at most as far as its k-th
    nearest neighbour (ties included)."""
    n = len(points)
    k = min(k, n - 1)
    out = []
    for lo in range(0, n, chunk):
        d2 = 2.0 - 2.0 * (points[lo:lo + chunk] @ points.T)
        np.maximum(d2, 0.0, out=d2)
        for i, row in enumerate(d2):
            row[lo + i] = -1.0
            kth = np.partition(row, k)[k]
            out.append(np.flatnonzero(row <= kth + 1e-12))
    return out


def generate_geometric(m: GeometricModel, points: np.ndarray | None = None):
    """Place records on S^t and give every record a block of its ball.

    Returns ``(records, blocks, truth)``. Cluster labels are independent of
    the geometry unless ``clustered_placement`` is set, in which case each
    cluster is scattered around its own random centre.
    """
    if m.n < 2:
        raise ValueError("need at least two records")
    rng = np.random.default_rng(m.seed)
    sizes = m.cluster_sizes or (1,) * m.n
    labels = _labels_from_sizes(sizes, m.n)
    labels = labels[rng.permutation(m.n)]
    if points is None:
        if m.clustered_placement:
            centres = uniform_sphere(len(sizes), m.t, rng)
            x = centres[labels] + m.spread * rng.standard_normal((m.n, m.t + 1))
            points = x / np.linalg.norm(x, axis=1, keepdims=True)
        else:
            points = uniform_sphere(m.n, m.t, rng)
    points = np.asarray(points, dtype=np.float64)
    balls = ball_blocks(points, m.ball_count)
    blocks = BlockCollection.from_groups(((f"ball{u}", b) for u, b in enumerate(balls)), m.n)
    return _stub_records(blocks), blocks, GroundTruth.from_labels(labels.tolist())


def blocking_graph_edge_count(blocks: BlockCollection) -> int:
    keys = []
    for b in blocks:
        m = np.asarray(b.members, dtype=np.int64)
        if len(m) > 1:
            i, j = np.triu_indices(len(m), 1)
            keys.append(m[i] * blocks.n + m[j])
    return int(np.unique(np.concatenate(keys)).size) if keys else 0


@dataclass(frozen=True)
class NoisyEdgeModel:
    """Pair similarities with threshold ``theta`` and flip scales ``beta``
    (matching pairs) and ``beta_prime`` (non-matching pairs).

    A matching pair lands in [theta, 1] with probability 1 - beta/n and in
    [0, theta) otherwise. Under the default ``"mirrored"`` reading a
    non-matching pair lands in [0, theta) with probability 1 - beta'/n; the
    ``"literal"`` reading gives it the matching distribution with beta'.
    """

    n: int
    theta: float = 0.5
    beta: float = 0.0
    beta_prime: float = 0.0
    seed: int = 0
    reading: str = "mirrored"

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must be in (0, 1)")
        if self.reading not in ("mirrored", "literal"):
            raise ValueError("reading must be 'mirrored' or 'literal'")
        for name in ("beta", "beta_prime"):
            if not 0.0 <= getattr(self, name) <= self.n:
                raise ValueError(f"{name} must be in [0, n]")

    @classmethod
    def log_scaled(cls, n: int, theta: float = 0.5, c: float = 1.0, c_prime: float | None = None,
                   seed: int = 0, reading: str = "mirrored") -> "NoisyEdgeModel":
        """beta = c ln n and beta' = c' ln n."""
        c_prime = c if c_prime is None else c_prime
        return cls(n, theta, c * math.log(n), c_prime * math.log(n), seed, reading)

    @property
    def mu_g(self) -> float:
        f = self.beta / self.n
        return (1 - f) * (1 + self.theta) / 2 + f * self.theta / 2

    @property
    def mu_r(self) -> float:
        f = self.beta_prime / self.n
        if self.reading == "literal":
            return (1 - f) * (1 + self.theta) / 2 + f * self.theta / 2
        return (1 - f) * self.theta / 2 + f * (1 + self.theta) / 2


def noisy_similarity(model: NoisyEdgeModel, u, v, is_match) -> np.ndarray | float:
    """Similarity draw for pair(s) ``(u, v)``; deterministic per pair and seed."""
    scalar = np.ndim(u) == 0 and np.ndim(v) == 0
    u = np.atleast_1d(np.asarray(u, dtype=np.int64))
    v = np.atleast_1d(np.asarray(v, dtype=np.int64))
    if np.any(u == v):
        raise ValueError("similarity is defined for distinct records only")
    is_match = np.broadcast_to(np.asarray(is_match, dtype=bool), u.shape)
    branch = keyed_uniform(model.seed, u, v, stream=0)
    value = keyed_uniform(model.seed, u, v, stream=1)
    th = model.theta
    high = th + (1 - th) * value
    low = th * value
    mflip = model.beta / model.n
    nflip = model.beta_prime / model.n
    match_sim = np.where(branch < 1 - mflip, high, low)
    if model.reading == "literal":
        non_sim = np.where(branch < 1 - nflip, high, low)
    else:
        non_sim = np.where(branch < 1 - nflip, low, high)
    out = np.where(is_match, match_sim, non_sim)
    return float(out[0]) if scalar else out


class NoisyPrior:
    """Prior similarity drawn from a noisy edge model given true clusters."""

    def __init__(self, model: NoisyEdgeModel, cluster_of):
        self.model = model
        self.cluster_of = np.asarray(cluster_of, dtype=np.int64)

    @property
    def n(self) -> int:
        return len(self.cluster_of)

    def pairs(self, us, vs) -> np.ndarray:
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        if us.size == 0:
            return np.zeros(0)
        return noisy_similarity(self.model, us, vs, self.cluster_of[us] == self.cluster_of[vs])

    def matrix(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        s = len(ids)
        out = np.zeros((s, s))
        if s < 2:
            return out
        i, j = np.triu_indices(s, 1)
        vals = self.pairs(ids[i], ids[j])
        out[i, j] = vals
        out[j, i] = vals
        return out


def full_scan_probability(members, prior, chunk: int = 2_000_000) -> float:
    """Exact mean prior similarity over all pairs of a block."""
    members = np.asarray(members, dtype=np.int64)
    s = len(members)
    total = 0.0
    rows_per = max(1, chunk // max(1, s))
    for lo in range(0, s - 1, rows_per):
        hi = min(s - 1, lo + rows_per)
        us = np.repeat(members[lo:hi], [s - 1 - r for r in range(lo, hi)])
        vs = np.concatenate([members[r + 1:] for r in range(lo, hi)])
        total += float(prior.pairs(us, vs).sum())
    return total / (s * (s - 1) / 2)


@dataclass
class NoisyInstance:
    records: RecordSet
    blocks: BlockCollection
    truth: GroundTruth
    model: NoisyEdgeModel
    params: dict = field(default_factory=dict)

    def prior(self) -> NoisyPrior:
        return NoisyPrior(self.model, self.truth.cluster_of)


def generate_noisy_instance(n: int = 2000, n_clusters: int = 40, *, theta: float = 0.5,
                            beta_scale: float = 1.0, beta_prime_scale: float | None = None,
                            coverage: float = 0.9, clean_blocks_per_cluster: int = 2,
                            intruders: float = 0.1, dirty_block_size: int = 20,
                            dirty_blocks_per_record: int = 3, cluster_skew: float = 0.0,
                            seed: int = 0, reading: str = "mirrored") -> NoisyInstance:
    """Clustered records covered by clean large blocks and dirty small blocks.

    Every cluster gets ``clean_blocks_per_cluster`` blocks, each holding a
    ``coverage`` fraction of the cluster (staggered windows over a random
    order, so their union is the whole cluster) plus ``intruders * |C|``
    random outsiders. On top, every record sits in about
    ``dirty_blocks_per_record`` small random blocks. Small dirty blocks rank
    first under size-based scoring, which is what a feedback loop has to
    undo. Similarities follow a noisy edge model with beta = beta_scale *
    ln n.
    """
    rng = np.random.default_rng(seed)
    if cluster_skew > 0:
        w = rng.pareto(1.0 / cluster_skew, n_clusters) + 1.0
    else:
        w = np.ones(n_clusters)
    sizes = np.maximum(2, np.floor(w / w.sum() * n)).astype(int)
    while sizes.sum() > n:
        sizes[np.argmax(sizes)] -= 1
    sizes[np.argmin(sizes)] += n - sizes.sum()
    labels = _labels_from_sizes(sizes, n)[rng.permutation(n)]
    truth = GroundTruth.from_labels(labels.tolist())
    clusters = truth.clusters()
    groups = []
    for c, members in enumerate(clusters):
        members = rng.permutation(np.asarray(members))
        size = len(members)
        take = min(size, max(2, int(round(coverage * size))))
        for j in range(clean_blocks_per_cluster):
            # cyclic windows, so together the clean blocks cover the cluster
            start = (j * size) // clean_blocks_per_cluster
            inside = members[(start + np.arange(take)) % size]
            outside = rng.choice(n, size=int(round(intruders * len(members))), replace=False)
            groups.append((f"clean{c}.{j}", np.concatenate([inside, outside])))
    n_dirty = max(1, (n * dirty_blocks_per_record) // dirty_block_size)
    slots = np.concatenate([rng.permutation(n) for _ in range(dirty_blocks_per_record)])
    for j in range(n_dirty):
        groups.append((f"dirty{j}", slots[j * dirty_block_size:(j + 1) * dirty_block_size]))
    blocks = BlockCollection.from_groups(groups, n)
    model = NoisyEdgeModel.log_scaled(n, theta, beta_scale, beta_prime_scale, seed, reading)
    params = dict(n=n, n_clusters=n_clusters, theta=theta, beta_scale=beta_scale,
                  beta_prime_scale=beta_prime_scale, coverage=coverage,
                  clean_blocks_per_cluster=clean_blocks_per_cluster, intruders=intruders,
                  dirty_block_size=dirty_block_size, dirty_blocks_per_record=dirty_blocks_per_record,
                  cluster_skew=cluster_skew, seed=seed, reading=reading)
    return NoisyInstance(_stub_records(blocks), blocks, truth, model, params)
