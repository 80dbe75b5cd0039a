"""Records, ground truth, tokenization and pipeline configuration.

Datasets are read from csv (header row required) or jsonl (one object per
line). Record ids are the 0-based row order of the file. Ground truth is a
two-column csv ``record_id,entity_id``.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_WORD = re.compile(r"[^\W_]+")


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed."""


def word_tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def qgrams(token: str, q: int) -> list[str]:
    # tokens shorter than q are kept whole, no padding
    if len(token) <= q:
        return [token]
    return [token[i:i + q] for i in range(len(token) - q + 1)]


def tokenize_text(text: str, scheme: str = "word", q: int = 3) -> list[str]:
    words = word_tokens(text)
    if scheme == "word":
        return words
    if scheme == "qgram":
        if q < 2:
            raise ValueError(f"q-gram size must be >= 2, got {q}")
        return [g for w in words for g in qgrams(w, q)]
    raise ValueError(f"unknown tokenization scheme {scheme!r}")


@dataclass(frozen=True)
class Record:
    id: int
    attributes: tuple[tuple[str, str], ...]
    tokens: tuple[str, ...] = ()

    @classmethod
    def build(cls, rid: int, attributes: Iterable[tuple[str, str]]) -> "Record":
        attrs = tuple((str(k), "" if v is None else str(v)) for k, v in attributes)
        return cls(rid, attrs, tuple(tokenize(attrs)))

    @property
    def token_set(self) -> frozenset[str]:
        return frozenset(self.tokens)

    def text(self) -> str:
        return " ".join(v for _, v in self.attributes)

    def attribute_tokens(self, name: str) -> list[str]:
        return [t for k, v in self.attributes if k == name for t in word_tokens(v)]


def tokenize(record, scheme: str = "word", q: int = 3) -> list[str]:
    """Token multiset (as a list) of a record or of raw attribute pairs.

    ``scheme`` is ``"word"`` or ``"qgram"``; the q-gram scheme yields the
    character q-grams of every word token.
    """
    attrs = record.attributes if isinstance(record, Record) else record
    out: list[str] = []
    for _, value in attrs:
        out.extend(tokenize_text(value, scheme, q))
    return out


@dataclass(frozen=True)
class RecordSet:
    records: tuple[Record, ...]

    def __post_init__(self):
        for i, r in enumerate(self.records):
            if r.id != i:
                raise ValueError(f"record at position {i} has id {r.id}")

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[tuple[str, str]]]) -> "RecordSet":
        return cls(tuple(Record.build(i, row) for i, row in enumerate(rows)))

    @classmethod
    def from_texts(cls, texts: Iterable[str], attribute: str = "text") -> "RecordSet":
        return cls.from_rows([[(attribute, t)] for t in texts])

    @property
    def n(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> Record:
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def attribute_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            for k, _ in r.attributes:
                seen.setdefault(k, None)
        return list(seen)


@dataclass(frozen=True)
class GroundTruth:
    cluster_of: np.ndarray
    match_count: int

    @classmethod
    def from_labels(cls, labels: Sequence) -> "GroundTruth":
        dense: dict = {}
        ids = np.fromiter((dense.setdefault(x, len(dense)) for x in labels),
                          dtype=np.int64, count=len(labels))
        sizes = np.bincount(ids) if len(ids) else np.zeros(0, dtype=np.int64)
        return cls(ids, int((sizes * (sizes - 1) // 2).sum()))

    @property
    def n(self) -> int:
        return len(self.cluster_of)

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_of.max()) + 1 if len(self.cluster_of) else 0

    def is_match(self, u, v):
        return self.cluster_of[u] == self.cluster_of[v]

    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_clusters)]
        for rid, c in enumerate(self.cluster_of.tolist()):
            out[c].append(rid)
        return out


def load_dataset(path, format: str | None = None) -> RecordSet:
    path = Path(path)
    fmt = format or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise DataFormatError(f"{path}: empty file")
    if fmt == "csv":
        rows = _read_csv_rows(path, text)
    elif fmt == "jsonl":
        rows = _read_jsonl_rows(path, text)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if not rows:
        raise DataFormatError(f"{path}: no records")
    return RecordSet.from_rows(rows)


def _read_csv_rows(path: Path, text: str) -> list[list[tuple[str, str]]]:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except (StopIteration, csv.Error) as exc:
        raise DataFormatError(f"{path}: unreadable header: {exc}") from None
    rows = []
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise DataFormatError(f"{path}: line {reader.line_num}: {exc}") from None
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
        rows.append(list(zip(header, row)))
    return rows


def _read_jsonl_rows(path: Path, text: str) -> list[list[tuple[str, str]]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise DataFormatError(f"{path}: line {lineno}: expected a JSON object")
        rows.append([(k, "" if v is None else str(v)) for k, v in obj.items()])
    return rows


def write_dataset(rs: RecordSet, path, format: str = "csv") -> None:
    path = Path(path)
    if format == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for r in rs:
                fh.write(json.dumps(dict(r.attributes)) + "\n")
        return
    names = rs.attribute_names()
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in rs:
            d = dict(r.attributes)
            w.writerow([d.get(k, "") for k in names])


def load_ground_truth(path, n: int | None = None) -> GroundTruth:
    """Read ``record_id,entity_id`` rows; a non-numeric first row is a header.

    When ``n`` is given every id in ``0..n-1`` must appear exactly once.
    """
    path = Path(path)
    labels: dict[int, str] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
            try:
                rid = int(row[0])
            except ValueError:
                if lineno == 1:
                    continue
                raise DataFormatError(f"{path}: line {lineno}: bad record id {row[0]!r}") from None
            if rid < 0 or (n is not None and rid >= n):
                raise DataFormatError(f"{path}: line {lineno}: record id {rid} not in dataset")
            if rid in labels:
                raise DataFormatError(f"{path}: line {lineno}: duplicate record id {rid}")
            labels[rid] = row[1].strip()
    size = n if n is not None else (max(labels) + 1 if labels else 0)
    missing = [i for i in range(size) if i not in labels]
    if missing:
        raise DataFormatError(f"{path}: no entity for record ids {missing[:5]}")
    return GroundTruth.from_labels([labels[i] for i in range(size)])


def write_ground_truth(gt: GroundTruth, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "entity_id"])
        for rid, c in enumerate(gt.cluster_of.tolist()):
            w.writerow([rid, c])


BB_METHODS = ("standard", "qgram", "sorted_neighborhood", "canopy")


@dataclass(frozen=True)
class PipelineConfig:
    bb_method: str = "standard"
    bc_init: str = "tfidf"
    cc_method: str = "meta_blocking"
    er_method: str = "edge"
    phi: float = 0.01
    pair_budget_M: int = 10_000_000
    hierarchy_depth_d: int = 10
    gamma: int = 12
    top_k_per_record: int = 100
    oracle_error_rate: float = 0.0
    seed: int = 0
    # knobs below have no counterpart in the original method description
    oracle_votes: int = 1
    node_progress: str = "pairs"
    blocks_per_record_cap: int = 20
    rescore_factor: int = 2
    budget_constant: float = 4.0
    qgram_q: int = 3
    window_w: int = 3
    canopy_threshold: float = 0.5

    def __post_init__(self):
        if self.bb_method not in BB_METHODS:
            raise ValueError(f"bb_method must be one of {BB_METHODS}")
        if self.bc_init not in ("tfidf", "uniform"):
            raise ValueError("bc_init must be 'tfidf' or 'uniform'")
        if self.cc_method != "meta_blocking":
            raise ValueError("cc_method must be 'meta_blocking'")
        if self.er_method not in ("edge", "node"):
            raise ValueError("er_method must be 'edge' or 'node'")
        if not 0.0 < self.phi <= 1.0:
            raise ValueError(f"phi must be in (0, 1], got {self.phi}")
        if not 0.0 <= self.oracle_error_rate < 1.0:
            raise ValueError("oracle_error_rate must be in [0, 1)")
        if self.oracle_votes < 1 or self.oracle_votes % 2 == 0:
            raise ValueError("oracle_votes must be a positive odd integer")
        if self.node_progress not in ("pairs", "records"):
            raise ValueError("node_progress must be 'pairs' or 'records'")
        for name in ("pair_budget_M", "hierarchy_depth_d", "gamma", "top_k_per_record",
                     "blocks_per_record_cap", "rescore_factor"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.canopy_threshold <= 1.0:
            raise ValueError("canopy_threshold must be in (0, 1]")

    @property
    def max_rounds(self) -> int:
        return max(1, int(1.0 / self.phi + 1e-9))

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            default = getattr(cls, key)
            kw[key] = type(default)(raw) if not isinstance(raw, type(default)) else raw
        return cls(**kw)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"config line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
