"""Intersection block hierarchy: layer creation and correlation-based cleaning.

Layer ``L`` holds intersections of ``L`` distinct first-layer blocks. A block
is identified by its canonical key, the sorted tuple of its first-layer
constituent ids. Creation runs once; cleaning only flips ``active`` flags so
the created layers are reused across rounds.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .blocking import BlockCollection


class BlockHierarchy:
    def __init__(self, base: BlockCollection, depth: int):
        self.n = base.n
        self.depth = depth
        self.base = base
        self.keys: list[tuple[int, ...]] = []
        self.members: list[np.ndarray] = []
        self.level: list[int] = []
        self.parent_links: dict[int, tuple[int, int]] = {}
        self.index: dict[tuple[int, ...], int] = {}
        self.layers: list[list[int]] = [[] for _ in range(max(depth, 1))]
        self.combinations_examined = 0
        for b in base.blocks:
            self._add((b.id,), np.asarray(b.members, dtype=np.int64), 1)
        self._active = np.ones(len(self.keys), dtype=bool)

    def _add(self, key, members, level, parents=None) -> int:
        bid = len(self.keys)
        self.keys.append(key)
        self.members.append(members)
        self.level.append(level)
        self.index[key] = bid
        self.layers[level - 1].append(bid)
        if parents is not None:
            self.parent_links[bid] = parents
        return bid

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def active(self) -> np.ndarray:
        if len(self._active) < len(self.keys):
            grown = np.zeros(len(self.keys), dtype=bool)
            grown[:len(self._active)] = self._active
            self._active = grown
        return self._active

    def sizes(self) -> np.ndarray:
        return np.fromiter((len(m) for m in self.members), dtype=np.int64, count=len(self.members))

    def levels(self) -> np.ndarray:
        return np.asarray(self.level, dtype=np.int64)

    def active_ids(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def block_id(self, *base_ids: int) -> int:
        return self.index[tuple(sorted(base_ids))]

    def describe(self, bid: int) -> str:
        return " & ".join(str(self.base.blocks[i].key) for i in self.keys[bid])

    def layer_counts(self) -> list[dict[str, int]]:
        act = self.active
        return [{"layer": i + 1, "blocks": len(ids), "active": int(act[ids].sum()) if ids else 0}
                for i, ids in enumerate(self.layers) if ids]

    def deactivate_refined(self) -> None:
        act = self.active
        act[np.asarray(self.level) > 1] = False


def build_layers(base: BlockCollection, d: int, cap: int = 20) -> BlockHierarchy:
    """Create layers 2..d-1 by intersecting each record's first-layer blocks.

    A record in more than ``cap`` first-layer blocks only combines its ``cap``
    smallest ones. Intersections with fewer than two members are dropped.
    Refined blocks start inactive; ``clean_layers`` decides which to use.
    """
    if d < 1:
        raise ValueError("depth must be >= 1")
    h = BlockHierarchy(base, d)
    sizes = base.sizes()
    for v in range(base.n):
        mine = base.record_to_blocks[v]
        if len(mine) < 2 or d < 3:
            continue
        if len(mine) > cap:
            mine = sorted(mine, key=lambda b: (sizes[b], b))[:cap]
        mine = sorted(mine)
        frontier = [(b,) for b in mine]
        for level in range(2, d):
            nxt = []
            for key in frontier:
                pid = h.index[key]
                for b in mine:
                    if b <= key[-1]:
                        continue
                    h.combinations_examined += 1
                    child = key + (b,)
                    if child in h.index:
                        nxt.append(child)
                        continue
                    inter = np.intersect1d(h.members[pid], h.members[b], assume_unique=True)
                    if len(inter) < 2:
                        continue
                    other = h.index[key[:-1] + (b,)]
                    h._add(child, inter, level, (pid, other))
                    nxt.append(child)
            if not nxt:
                break
            frontier = nxt
    h.deactivate_refined()
    return h


def lemma_bound(n: int, blocks_per_record: int, d: int) -> int:
    """Upper bound n * sum_{i=1..d} C(g, i) on hierarchy size."""
    return n * sum(comb(blocks_per_record, i) for i in range(1, d + 1))


def get_parents(h: BlockHierarchy, block_id: int) -> tuple[int, ...]:
    """Nearest active ancestors of a refined block.

    Inactive direct parents are replaced by their own parents, recursively;
    first-layer blocks always count as active.
    """
    if h.level[block_id] == 1:
        raise ValueError(f"block {block_id} is a first-layer block and has no parents")
    act = h.active
    out: list[int] = []
    stack = list(reversed(h.parent_links[block_id]))
    while stack:
        p = stack.pop()
        if h.level[p] == 1 or act[p]:
            if p not in out:
                out.append(p)
        else:
            stack.extend(reversed(h.parent_links[p]))
    return tuple(out)


def clean_layers(h: BlockHierarchy, scores, n: int | None = None) -> BlockHierarchy:
    """Flip active flags of refined blocks by the two correlation criteria.

    A refined block stays active if its score beats the product of its
    parents' scores, or if its relative size beats the product of its
    parents' relative sizes. Layers are visited bottom-up so that parent
    activity is settled before children look it up.
    """
    n = h.n if n is None else n
    scores = np.asarray(scores, dtype=np.float64)
    act = h.active
    sizes = h.sizes()
    for layer in h.layers[1:]:
        for bid in layer:
            parents = get_parents(h, bid)
            score_prod = float(np.prod(scores[list(parents)]))
            size_prod = float(np.prod(sizes[list(parents)] / n))
            act[bid] = scores[bid] > score_prod or sizes[bid] / n > size_prod
    return h
