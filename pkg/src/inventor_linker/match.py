"""The author/inventor decision rule and per-corpus statistics.

A publication is attributed to an inventor when one of the IPCCAT
predictions for its abstract both scores strictly above the threshold and
shares its first ``prefix_len`` characters with one of the patent's own IPC
codes.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .biblio import GeoPoint, HomonymSet
from .classify import Classification
from .corpus import PatentRecord
from .errors import MissingStageArtifact
from .ipc import IpcCode, ipc_prefix
from .names import InventorCluster

DEFAULT_SCORE_THRESHOLD = 800
DEFAULT_PREFIX_LEN = 4
UNDEFINED = "—"


def percent(numerator: int, denominator: int, places: int = 2) -> Decimal | None:
    """``100 * num / den`` rounded half-up to ``places`` decimals; None if den == 0."""
    if denominator == 0:
        return None
    quantum = Decimal(1).scaleb(-places)
    return (Decimal(100 * numerator) / Decimal(denominator)).quantize(quantum, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class MatchDecision:
    cluster_id: str
    pub_id: str
    publication_number: str
    matched: bool
    overlapping_codes: tuple[str, ...]
    best_score: int
    threshold_used: int
    prefix_len_used: int

    def to_json(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "pub_id": self.pub_id,
            "publication_number": self.publication_number,
            "matched": self.matched,
            "overlapping_codes": list(self.overlapping_codes),
            "best_score": self.best_score,
            "threshold_used": self.threshold_used,
            "prefix_len_used": self.prefix_len_used,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> MatchDecision:
        return cls(
            cluster_id=obj["cluster_id"],
            pub_id=obj["pub_id"],
            publication_number=obj["publication_number"],
            matched=bool(obj["matched"]),
            overlapping_codes=tuple(obj["overlapping_codes"]),
            best_score=int(obj["best_score"]),
            threshold_used=int(obj["threshold_used"]),
            prefix_len_used=int(obj["prefix_len_used"]),
        )


def decide_match(
    patent_codes: Sequence[IpcCode],
    classification: Classification,
    threshold: int = DEFAULT_SCORE_THRESHOLD,
    prefix_len: int = DEFAULT_PREFIX_LEN,
    *,
    cluster_id: str = "",
    pub_id: str = "",
    publication_number: str = "",
) -> MatchDecision:
    if not patent_codes:
        raise ValueError("decide_match needs at least one patent IPC code")
    if not 1 <= prefix_len <= 8:
        raise ValueError(f"prefix_len must lie in [1, 8], got {prefix_len}")
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    patent_prefixes = {ipc_prefix(c, prefix_len) for c in patent_codes}
    overlap: set[str] = set()
    best = 0
    for pred in classification.predictions:
        if pred.score <= threshold:
            continue
        head = ipc_prefix(pred.code, prefix_len)
        if head in patent_prefixes:
            overlap.add(head)
            best = max(best, pred.score)
    return MatchDecision(
        cluster_id=cluster_id,
        pub_id=pub_id or classification.text_ref,
        publication_number=publication_number,
        matched=bool(overlap),
        overlapping_codes=tuple(sorted(overlap)),
        best_score=best,
        threshold_used=threshold,
        prefix_len_used=prefix_len,
    )


@dataclass(frozen=True)
class AuthorInventorCandidate:
    cluster_id: str
    matched_publications: tuple[str, ...]
    evidence: tuple[MatchDecision, ...]
    canonical: str = ""
    geo: GeoPoint | None = None

    def to_json(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "canonical": self.canonical,
            "matched_publications": list(self.matched_publications),
            "evidence": [d.to_json() for d in self.evidence],
            "geo": self.geo.to_json() if self.geo else None,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> AuthorInventorCandidate:
        return cls(
            cluster_id=obj["cluster_id"],
            matched_publications=tuple(obj["matched_publications"]),
            evidence=tuple(MatchDecision.from_json(d) for d in obj["evidence"]),
            canonical=obj.get("canonical", ""),
            geo=GeoPoint.from_json(obj["geo"]) if obj.get("geo") else None,
        )


def aggregate_candidates(
    decisions: Iterable[MatchDecision],
    canonical_of: Mapping[str, str] | None = None,
) -> list[AuthorInventorCandidate]:
    """One candidate per cluster with at least one matched decision."""
    canonical_of = canonical_of or {}
    evidence: dict[str, list[MatchDecision]] = {}
    for d in decisions:
        if d.matched:
            evidence.setdefault(d.cluster_id, []).append(d)
    out = []
    for cid, ds in evidence.items():
        ds.sort(key=lambda d: (d.pub_id, d.publication_number))
        out.append(AuthorInventorCandidate(
            cluster_id=cid,
            matched_publications=tuple(sorted({d.pub_id for d in ds})),
            evidence=tuple(ds),
            canonical=canonical_of.get(cid, ""),
        ))
    out.sort(key=lambda c: (c.canonical, c.cluster_id))
    return out


def match_corpus(
    patents: Iterable[PatentRecord],
    clusters: Iterable[InventorCluster],
    homonym_sets: Iterable[HomonymSet],
    classifications: Mapping[str, Classification],
    threshold: int = DEFAULT_SCORE_THRESHOLD,
    prefix_len: int = DEFAULT_PREFIX_LEN,
) -> list[MatchDecision]:
    """Evaluate every (cluster, publication, patent) triple.

    Publications without a classification (empty abstracts) and patents
    without IPC codes produce no decision at all.
    """
    by_number = {p.publication_number: p for p in patents}
    by_cluster = {h.cluster_id: h for h in homonym_sets}
    decisions = []
    for cluster in clusters:
        hset = by_cluster.get(cluster.cluster_id)
        if hset is None:
            continue
        for pub in hset.publications:
            classification = classifications.get(pub.pub_id)
            if classification is None:
                continue
            for number in sorted(cluster.patent_refs):
                patent = by_number.get(number)
                if patent is None or not patent.ipc_codes:
                    continue
                decisions.append(decide_match(
                    patent.ipc_codes, classification, threshold, prefix_len,
                    cluster_id=cluster.cluster_id, pub_id=pub.pub_id,
                    publication_number=number,
                ))
    decisions.sort(key=lambda d: (d.cluster_id, d.pub_id, d.publication_number))
    return decisions


@dataclass(frozen=True)
class CorpusStats:
    corpus_id: str
    n_patents: int
    n_inventors: int
    n_homonyms: int
    n_candidates: int
    proportion_matched: Decimal | None

    @classmethod
    def from_counts(cls, corpus_id: str, n_patents: int, n_inventors: int,
                    n_homonyms: int, n_candidates: int) -> CorpusStats:
        return cls(corpus_id, n_patents, n_inventors, n_homonyms, n_candidates,
                   percent(n_candidates, n_homonyms, 2))

    @property
    def proportion_text(self) -> str:
        return UNDEFINED if self.proportion_matched is None else str(self.proportion_matched)

    def to_json(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "n_patents": self.n_patents,
            "n_inventors": self.n_inventors,
            "n_homonyms": self.n_homonyms,
            "n_candidates": self.n_candidates,
            "proportion_matched": self.proportion_text,
        }


@dataclass
class CorpusArtifacts:
    corpus_id: str
    patents: Sequence[PatentRecord] | None = None
    clusters: Sequence[InventorCluster] | None = None
    homonym_sets: Sequence[HomonymSet] | None = None
    candidates: Sequence[AuthorInventorCandidate] | None = None


def compute_corpus_stats(artifacts: CorpusArtifacts) -> CorpusStats:
    for stage, value in (
        ("ingest", artifacts.patents),
        ("normalize", artifacts.clusters),
        ("homonyms", artifacts.homonym_sets),
        ("match", artifacts.candidates),
    ):
        if value is None:
            raise MissingStageArtifact(stage)
    return CorpusStats.from_counts(
        artifacts.corpus_id,
        n_patents=len(artifacts.patents),
        n_inventors=len(artifacts.clusters),
        n_homonyms=sum(1 for h in artifacts.homonym_sets if h.has_homonyms),
        n_candidates=len(artifacts.candidates),
    )
