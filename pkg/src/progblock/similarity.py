"""Prior pairwise similarities.

A prior exposes ``pairs(us, vs)`` for aligned id arrays and ``matrix(ids)``
for the full square matrix of a sample. Both return values in [0, 1].
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy import sparse


def binary_token_matrix(token_sets: Sequence[Iterable[str]]) -> sparse.csr_matrix:
    vocab: dict[str, int] = {}
    indptr = [0]
    indices: list[int] = []
    for toks in token_sets:
        cols = {vocab.setdefault(t, len(vocab)) for t in toks}
        indices.extend(sorted(cols))
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.float64)
    return sparse.csr_matrix((data, np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
                             shape=(len(token_sets), max(1, len(vocab))))


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    union = len(a | b)
    return len(a & b) / union if union else 0.0


class JaccardPrior:
    """Unweighted Jaccard similarity of record token sets."""

    def __init__(self, token_sets: Sequence[Iterable[str]]):
        self.X = binary_token_matrix(token_sets)
        self.sizes = np.asarray(self.X.sum(axis=1)).ravel()

    @classmethod
    def from_records(cls, rs) -> "JaccardPrior":
        return cls([r.token_set for r in rs])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def _ratio(self, inter, union):
        out = np.zeros(np.shape(inter), dtype=np.float64)
        np.divide(inter, union, out=out, where=union > 0)
        return out

    def pairs(self, us, vs) -> np.ndarray:
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        if us.size == 0:
            return np.zeros(0)
        inter = np.asarray(self.X[us].multiply(self.X[vs]).sum(axis=1)).ravel()
        union = self.sizes[us] + self.sizes[vs] - inter
        return self._ratio(inter, union)

    def matrix(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        sub = self.X[ids]
        inter = (sub @ sub.T).toarray()
        sz = self.sizes[ids]
        union = sz[:, None] + sz[None, :] - inter
        return self._ratio(inter, union)

    def row(self, u: int, ids=None) -> np.ndarray:
        """Similarity of ``u`` to every record (or to ``ids``)."""
        target = self.X if ids is None else self.X[np.asarray(ids, dtype=np.int64)]
        inter = np.asarray((target @ self.X[u].T).todense()).ravel()
        sz = self.sizes if ids is None else self.sizes[np.asarray(ids, dtype=np.int64)]
        return self._ratio(inter, sz + self.sizes[u] - inter)
