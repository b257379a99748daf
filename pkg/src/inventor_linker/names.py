"""Inventor name folding and lexical clustering.

Names are compared on a folded key (case-folded, accents stripped,
punctuation turned into spaces, tokens sorted), so "REYMOND David" and
"David Reymond" share a key.  Keys are linked when their Levenshtein ratio
reaches the threshold; clusters are the connected components of that graph.
"""

from __future__ import annotations

import hashlib
import logging
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from rapidfuzz.distance import Levenshtein
from rapidfuzz.process import cdist

log = logging.getLogger(__name__)

DEFAULT_NAME_THRESHOLD = 90
_BLOCK = 1024


def fold_name(raw: str) -> str:
    text = unicodedata.normalize("NFKD", raw.casefold())
    chars = []
    for ch in text:
        if unicodedata.combining(ch):
            continue
        chars.append(ch if ch.isalnum() else " ")
    tokens = "".join(chars).lower().split()
    return " ".join(sorted(tokens))


def _ratio(distance: int, longest: int) -> int:
    if longest == 0:
        return 100
    # round half up, in integers
    score = (200 * (longest - distance) + longest) // (2 * longest)
    if distance and score == 100:
        return 99
    return score


def similarity(a: str, b: str) -> int:
    """Levenshtein ratio in [0, 100] of two folded keys.

    Only identical strings score 100; a single edit on a very long string
    that would round up to 100 is reported as 99.
    """
    return _ratio(Levenshtein.distance(a, b), max(len(a), len(b)))


def similarity_matrix(keys: Sequence[str], workers: int = 1) -> np.ndarray:
    """All-pairs :func:`similarity` over ``keys`` as an int matrix."""
    n = len(keys)
    out = np.empty((n, n), dtype=np.int16)
    if n == 0:
        return out
    lengths = np.fromiter((len(k) for k in keys), dtype=np.int64, count=n)
    for start in range(0, n, _BLOCK):
        stop = min(n, start + _BLOCK)
        dist = cdist(keys[start:stop], keys, scorer=Levenshtein.distance,
                     dtype=np.int64, workers=workers)
        longest = np.maximum(lengths[start:stop, None], lengths[None, :])
        safe = np.where(longest == 0, 1, longest)
        score = (200 * (safe - dist) + safe) // (2 * safe)
        score = np.where((dist > 0) & (score == 100), 99, score)
        out[start:stop] = np.where(longest == 0, 100, score)
    return out


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


@dataclass(frozen=True, order=True)
class NameVariant:
    raw: str
    folded: str

    @classmethod
    def of(cls, raw: str) -> NameVariant:
        return cls(raw, fold_name(raw))


@dataclass(frozen=True)
class InventorCluster:
    cluster_id: str
    canonical: str
    variants: frozenset[NameVariant]
    patent_refs: frozenset[str]

    def to_json(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "canonical": self.canonical,
            "variants": [{"raw": v.raw, "folded": v.folded} for v in sorted(self.variants)],
            "patent_refs": sorted(self.patent_refs),
        }

    @classmethod
    def from_json(cls, obj: dict) -> InventorCluster:
        return cls(
            cluster_id=obj["cluster_id"],
            canonical=obj["canonical"],
            variants=frozenset(NameVariant(v["raw"], v["folded"]) for v in obj["variants"]),
            patent_refs=frozenset(obj["patent_refs"]),
        )


def choose_canonical(raws: Iterable[str]) -> str:
    """Longest raw form; ties go to the lexicographically smallest."""
    return min(raws, key=lambda r: (-len(r), r))


def cluster_id_for(folded_keys: Iterable[str]) -> str:
    blob = "\n".join(sorted(set(folded_keys)))
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:16]


def link_components(keys: Sequence[str], threshold: int, workers: int = 1) -> list[int]:
    """Union-find roots of ``keys`` linked at ``similarity >= threshold``."""
    uf = UnionFind(len(keys))
    if len(keys) > 1:
        sims = similarity_matrix(keys, workers=workers)
        rows, cols = np.nonzero(np.triu(sims >= threshold, k=1))
        for i, j in zip(rows.tolist(), cols.tolist()):
            uf.union(i, j)
    return [uf.find(i) for i in range(len(keys))]


def cluster_inventors(
    names: Iterable[tuple[str, str]],
    threshold: int = DEFAULT_NAME_THRESHOLD,
    workers: int = 1,
) -> list[InventorCluster]:
    """Cluster ``(raw name, publication number)`` pairs into inventors."""
    if not 0 <= threshold <= 100:
        raise ValueError(f"threshold must lie in [0, 100], got {threshold}")
    refs: dict[str, set[str]] = defaultdict(set)
    folded: dict[str, str] = {}
    for raw, number in names:
        key = folded.get(raw)
        if key is None:
            key = folded[raw] = fold_name(raw)
        if not key:
            log.warning("ignoring inventor name %r on %s: nothing left after folding", raw, number)
            continue
        refs[raw].add(number)

    keys = sorted({folded[r] for r in refs})
    roots = link_components(keys, threshold, workers)
    root_of = dict(zip(keys, roots))

    members: dict[int, list[str]] = defaultdict(list)
    for raw in refs:
        members[root_of[folded[raw]]].append(raw)

    clusters = []
    for raws in members.values():
        variants = frozenset(NameVariant(r, folded[r]) for r in raws)
        clusters.append(
            InventorCluster(
                cluster_id=cluster_id_for(v.folded for v in variants),
                canonical=choose_canonical(raws),
                variants=variants,
                patent_refs=frozenset().union(*(refs[r] for r in raws)),
            )
        )
    clusters.sort(key=lambda c: c.canonical)
    return clusters
