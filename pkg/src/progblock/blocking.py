"""First-layer block building: standard, q-gram, sorted neighbourhood, canopy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable

import numpy as np

from .records import DataFormatError, RecordSet, qgrams
from .similarity import JaccardPrior


@dataclass(frozen=True)
class Block:
    id: int
    key: Hashable
    members: tuple[int, ...]
    level: int = 1

    def __len__(self) -> int:
        return len(self.members)

    @property
    def size(self) -> int:
        return len(self.members)


class BlockCollection:
    """Blocks plus the inverse record -> block-id index."""

    def __init__(self, blocks: list[Block], n: int):
        self.blocks = blocks
        self.n = n
        self.record_to_blocks: list[list[int]] = [[] for _ in range(n)]
        for b in blocks:
            for r in b.members:
                self.record_to_blocks[r].append(b.id)

    @classmethod
    def from_groups(cls, groups: Iterable[tuple[Hashable, Iterable[int]]], n: int,
                    dedup_members: bool = False) -> "BlockCollection":
        blocks: list[Block] = []
        seen: set[tuple[int, ...]] = set()
        for key, members in groups:
            m = tuple(sorted(set(int(x) for x in members)))
            if not m:
                continue
            if dedup_members:
                if m in seen:
                    continue
                seen.add(m)
            blocks.append(Block(len(blocks), key, m, 1))
        return cls(blocks, n)

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i: int) -> Block:
        return self.blocks[i]

    def by_key(self, key) -> Block:
        for b in self.blocks:
            if b.key == key:
                return b
        raise KeyError(key)

    def sizes(self) -> np.ndarray:
        return np.fromiter((len(b) for b in self.blocks), dtype=np.int64, count=len(self.blocks))

    def pair_count(self) -> int:
        s = self.sizes()
        return int((s * (s - 1) // 2).sum())

    def size_histogram(self) -> dict[int, int]:
        vals, counts = np.unique(self.sizes(), return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


def _inverted(index_items: Iterable[tuple[int, Iterable[str]]]) -> dict[str, list[int]]:
    inv: dict[str, list[int]] = {}
    for rid, toks in index_items:
        for t in set(toks):
            inv.setdefault(t, []).append(rid)
    return inv


def standard_blocking(rs: RecordSet) -> BlockCollection:
    inv = _inverted((r.id, r.tokens) for r in rs)
    return BlockCollection.from_groups(((t, inv[t]) for t in sorted(inv)), rs.n)


def qgram_blocking(rs: RecordSet, q: int = 3) -> BlockCollection:
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    inv = _inverted((r.id, (g for t in r.tokens for g in qgrams(t, q))) for r in rs)
    return BlockCollection.from_groups(((g, inv[g]) for g in sorted(inv)), rs.n)


def _windows(tokens: list[str], w: int) -> list[tuple[str, ...]]:
    if len(tokens) <= w:
        return [tuple(tokens)] if tokens else []
    return [tuple(tokens[i:i + w]) for i in range(len(tokens) - w + 1)]


def sorted_neighborhood(rs: RecordSet, w: int = 3) -> BlockCollection:
    """Slide a window of ``w`` distinct sorted tokens over every attribute.

    A window block holds every record containing any of the window's tokens in
    that attribute. Blocks with identical member sets are kept once.
    """
    if w < 2:
        raise ValueError(f"window must be >= 2, got {w}")
    groups = []
    for attr in rs.attribute_names():
        inv = _inverted((r.id, r.attribute_tokens(attr)) for r in rs)
        for window in _windows(sorted(inv), w):
            members = set()
            for t in window:
                members.update(inv[t])
            groups.append(((attr,) + window, members))
    return BlockCollection.from_groups(groups, rs.n, dedup_members=True)


def _canopy_pass(prior: JaccardPrior, eligible: np.ndarray, loose: float, tight: float,
                 rng: np.random.Generator, tag: str):
    remaining = set(eligible.tolist())
    out = []
    while remaining:
        pool = sorted(remaining)
        seed = pool[int(rng.integers(len(pool)))]
        sims = prior.row(seed, eligible)
        members = eligible[sims >= loose]
        consumed = eligible[sims >= tight]
        out.append(((tag, seed), set(members.tolist()) | {seed}))
        remaining.difference_update(consumed.tolist())
        remaining.discard(seed)
    return out


def canopy_clustering(rs: RecordSet, sim_threshold: float = 0.5, seed: int = 0) -> BlockCollection:
    """Canopies over Jaccard similarity; one pass per attribute plus one over all.

    Loose threshold is ``sim_threshold``; members at or above
    ``min(1, 2 * sim_threshold)`` stop being eligible as future seeds.
    """
    if not 0.0 < sim_threshold <= 1.0:
        raise ValueError("sim_threshold must be in (0, 1]")
    loose, tight = sim_threshold, min(1.0, 2.0 * sim_threshold)
    rng = np.random.default_rng(seed)
    views: list[tuple[str, list[set[str]]]] = [("*", [r.token_set for r in rs])]
    names = rs.attribute_names()
    if len(names) > 1:
        views += [(a, [set(r.attribute_tokens(a)) for r in rs]) for a in names]
    groups = []
    for tag, token_sets in views:
        eligible = np.array([i for i, t in enumerate(token_sets) if t], dtype=np.int64)
        if eligible.size == 0:
            continue
        groups += _canopy_pass(JaccardPrior(token_sets), eligible, loose, tight, rng, tag)
    return BlockCollection.from_groups(groups, rs.n, dedup_members=True)


def build_blocks(rs: RecordSet, method: str, *, q: int = 3, w: int = 3,
                 canopy_threshold: float = 0.5, seed: int = 0) -> BlockCollection:
    if method == "standard":
        return standard_blocking(rs)
    if method == "qgram":
        return qgram_blocking(rs, q)
    if method == "sorted_neighborhood":
        return sorted_neighborhood(rs, w)
    if method == "canopy":
        return canopy_clustering(rs, canopy_threshold, seed)
    raise ValueError(f"unknown block building method {method!r}")


def write_blocks(blocks: BlockCollection, path) -> None:
    """Long format: one ``block,record_id`` row per membership."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "record_id"])
        for b in blocks:
            for r in b.members:
                w.writerow([b.key, r])


def load_blocks(path, n: int) -> BlockCollection:
    groups: dict[str, list[int]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row == ["block", "record_id"]):
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
            try:
                rid = int(row[1])
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}: bad record id {row[1]!r}") from None
            if not 0 <= rid < n:
                raise DataFormatError(f"{path}: line {lineno}: record id {rid} not in dataset")
            groups.setdefault(row[0], []).append(rid)
    return BlockCollection.from_groups(groups.items(), n)
