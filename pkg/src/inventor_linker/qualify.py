"""Random-sample qualification of candidates and the two summary tables."""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import (
    EmptyCandidates,
    InvalidParams,
    InvalidVerdict,
    MissingStageArtifact,
    UnknownClusterId,
)
from .match import DEFAULT_SCORE_THRESHOLD, UNDEFINED, AuthorInventorCandidate, CorpusStats, percent


def required_sample_size(N: int, e: float, z: float = 1.96, p: float = 0.5) -> int:
    """Sample size for margin ``e`` with the finite-population correction."""
    if N < 1:
        raise InvalidParams(f"population must be >= 1, got {N}")
    if not 0 < e < 1:
        raise InvalidParams(f"margin must lie in (0, 1), got {e}")
    if z <= 0 or not 0 <= p <= 1:
        raise InvalidParams(f"bad z={z} or p={p}")
    n0 = z * z * p * (1 - p) / (e * e)
    if n0 == 0:
        return 1
    n = math.ceil(n0 / (1 + (n0 - 1) / N))
    return max(1, min(n, N))


def margin_of_error(n: int, N: int, z: float = 1.96, p: float = 0.5) -> float:
    if not 1 <= n <= N:
        raise InvalidParams(f"need 1 <= n <= N, got n={n}, N={N}")
    if z <= 0 or not 0 <= p <= 1:
        raise InvalidParams(f"bad z={z} or p={p}")
    if N == 1:
        return 0.0
    return z * math.sqrt(p * (1 - p) / n) * math.sqrt((N - n) / (N - 1))


class SamplingMode(str, Enum):
    FRACTION = "fraction"
    TARGET_MARGIN = "target-margin"


@dataclass(frozen=True)
class SamplingParams:
    mode: SamplingMode = SamplingMode.FRACTION
    fraction: float = 0.10
    z: float = 1.96
    p: float = 0.5
    e_target: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplingMode(self.mode))
        if not 0 < self.fraction <= 1:
            raise InvalidParams(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.z <= 0:
            raise InvalidParams(f"z must be positive, got {self.z}")
        if not 0 <= self.p <= 1:
            raise InvalidParams(f"p must lie in [0, 1], got {self.p}")
        if not 0 < self.e_target < 1:
            raise InvalidParams(f"e_target must lie in (0, 1), got {self.e_target}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


class Verdict(str, Enum):
    PENDING = "pending"
    VERIFIED = "verified"
    DOUBT = "doubt"
    ERROR = "error"

    @classmethod
    def parse(cls, value) -> Verdict:
        if isinstance(value, Verdict):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidVerdict(f"unknown verdict {value!r}") from None


@dataclass(frozen=True)
class AuditEntry:
    timestamp: str
    cluster_id: str
    previous: str
    new: str


@dataclass(frozen=True)
class QualificationSample:
    corpus_id: str
    sampled_cluster_ids: tuple[str, ...]
    params: SamplingParams
    verdicts: Mapping[str, Verdict]
    population_size: int = 0
    audit: tuple[AuditEntry, ...] = ()

    def counts(self) -> dict[Verdict, int]:
        out = {v: 0 for v in Verdict}
        for v in self.verdicts.values():
            out[v] += 1
        return out

    @property
    def size(self) -> int:
        return len(self.sampled_cluster_ids)

    def to_json(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "population_size": self.population_size,
            "params": self.params.to_json(),
            "sampled_cluster_ids": list(self.sampled_cluster_ids),
            "verdicts": {k: self.verdicts[k].value for k in self.sampled_cluster_ids},
            "audit": [asdict(a) for a in self.audit],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> QualificationSample:
        return cls(
            corpus_id=obj["corpus_id"],
            sampled_cluster_ids=tuple(obj["sampled_cluster_ids"]),
            params=SamplingParams(**obj["params"]),
            verdicts={k: Verdict(v) for k, v in obj["verdicts"].items()},
            population_size=int(obj.get("population_size", 0)),
            audit=tuple(AuditEntry(**a) for a in obj.get("audit", [])),
        )


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def sample_size_for(population: int, params: SamplingParams) -> int:
    if params.mode is SamplingMode.FRACTION:
        return min(population, max(1, _round_half_up(params.fraction * population)))
    return min(population, required_sample_size(population, params.e_target, params.z, params.p))


def draw_sample(
    candidates: Iterable[AuthorInventorCandidate | str],
    params: SamplingParams,
    corpus_id: str = "",
) -> QualificationSample:
    """Seeded uniform draw without replacement.

    The population is sorted first, so the draw depends only on the set of
    candidate ids and the seed.
    """
    ids = sorted({c.cluster_id if isinstance(c, AuthorInventorCandidate) else c for c in candidates})
    if not ids:
        raise EmptyCandidates("cannot sample from an empty candidate list")
    k = sample_size_for(len(ids), params)
    chosen = random.Random(params.seed).sample(ids, k)
    return QualificationSample(
        corpus_id=corpus_id,
        sampled_cluster_ids=tuple(chosen),
        params=params,
        verdicts={cid: Verdict.PENDING for cid in chosen},
        population_size=len(ids),
    )


def record_verdict(
    sample: QualificationSample,
    cluster_id: str,
    verdict: Verdict | str,
    now: datetime | None = None,
) -> QualificationSample:
    if cluster_id not in sample.verdicts:
        raise UnknownClusterId(cluster_id)
    verdict = Verdict.parse(verdict)
    if verdict is Verdict.PENDING:
        raise InvalidVerdict("a verdict must be verified, doubt or error")
    stamp = (now or datetime.now(timezone.utc)).isoformat(timespec="seconds")
    entry = AuditEntry(stamp, cluster_id, sample.verdicts[cluster_id].value, verdict.value)
    verdicts = dict(sample.verdicts)
    verdicts[cluster_id] = verdict
    return replace(sample, verdicts=verdicts, audit=sample.audit + (entry,))


# --- report ---------------------------------------------------------------------


@dataclass(frozen=True)
class QualificationRow:
    corpus_id: str
    inventors: int
    candidates: int
    sample_size: int
    verified: int
    doubt: int
    error: int
    pending: int

    @property
    def verified_pct(self):
        return percent(self.verified, self.sample_size, 0)

    @property
    def error_pct(self):
        return percent(self.error, self.sample_size, 2)

    @property
    def sampling_rate(self):
        return percent(self.sample_size, self.candidates, 0)

    def to_json(self) -> dict:
        def txt(x):
            return UNDEFINED if x is None else str(x)
        return {
            "corpus_id": self.corpus_id,
            "inventors": self.inventors,
            "candidates": self.candidates,
            "sample_size": self.sample_size,
            "sampling_rate_pct": txt(self.sampling_rate),
            "verified": self.verified,
            "verified_pct": txt(self.verified_pct),
            "doubt": self.doubt,
            "error": self.error,
            "error_pct": txt(self.error_pct),
            "pending": self.pending,
        }


@dataclass(frozen=True)
class QualificationReport:
    rows: tuple[QualificationRow, ...]
    totals: QualificationRow
    stats: tuple[CorpusStats, ...]
    threshold: int = DEFAULT_SCORE_THRESHOLD
    margins: Mapping[str, float | None] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "table1": {
                "rows": [r.to_json() for r in self.rows],
                "total": self.totals.to_json(),
            },
            "table2": [s.to_json() for s in self.stats],
            "margin_of_error": {
                k: (None if v is None else round(v, 4)) for k, v in self.margins.items()
            },
        }

    def to_structured(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return render_text(self)


def _row_from(stats: CorpusStats, sample: QualificationSample | None) -> QualificationRow:
    if sample is None:
        return QualificationRow(stats.corpus_id, stats.n_inventors, stats.n_candidates, 0, 0, 0, 0, 0)
    c = sample.counts()
    return QualificationRow(
        corpus_id=stats.corpus_id,
        inventors=stats.n_inventors,
        candidates=stats.n_candidates,
        sample_size=sample.size,
        verified=c[Verdict.VERIFIED],
        doubt=c[Verdict.DOUBT],
        error=c[Verdict.ERROR],
        pending=c[Verdict.PENDING],
    )


def build_report(
    stats: Sequence[CorpusStats],
    samples: Mapping[str, QualificationSample],
    threshold: int = DEFAULT_SCORE_THRESHOLD,
    z: float = 1.96,
    p: float = 0.5,
) -> QualificationReport:
    rows = []
    for s in stats:
        sample = samples.get(s.corpus_id)
        if sample is None and s.n_candidates > 0:
            raise MissingStageArtifact(f"sample:{s.corpus_id}")
        rows.append(_row_from(s, sample))
    totals = QualificationRow(
        "Total",
        *(sum(getattr(r, f) for r in rows) for f in
          ("inventors", "candidates", "sample_size", "verified", "doubt", "error", "pending")),
    )
    margins = {}
    for r in rows + [totals]:
        margins[r.corpus_id] = (
            margin_of_error(r.sample_size, r.candidates, z, p)
            if 1 <= r.sample_size <= r.candidates else None
        )
    return QualificationReport(tuple(rows), totals, tuple(stats), threshold, margins)


def _fmt_pct(value, suffix=" %") -> str:
    return UNDEFINED if value is None else f"{value}{suffix}"


def _table(header: list[str], body: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()
    out = [line(header), "  ".join("-" * w for w in widths)]
    out.extend(line(r) for r in body)
    return out


def render_text(report: QualificationReport) -> str:
    cols = list(report.rows) + [report.totals]
    header = ["Corpus"] + [r.corpus_id for r in cols]
    body = [
        ["Inventors"] + [str(r.inventors) for r in cols],
        [f"Author-inventor candidates (score > {report.threshold})"] + [str(r.candidates) for r in cols],
        ["Sample"] + [str(r.sample_size) for r in cols],
        ["Sampling rate"] + [_fmt_pct(r.sampling_rate) for r in cols],
        ["Verified candidates"] + [f"{r.verified} ({_fmt_pct(r.verified_pct)})" for r in cols],
        ["Doubt"] + [str(r.doubt) for r in cols],
        ["Error"] + [str(r.error) for r in cols[:-1]]
        + [f"{report.totals.error} ({_fmt_pct(report.totals.error_pct)})"],
    ]
    if report.totals.pending:
        body.append(["Pending"] + [str(r.pending) for r in cols])
    body.append(["Margin of error"] + [
        UNDEFINED if report.margins.get(r.corpus_id) is None
        else f"{report.margins[r.corpus_id]:.4f}" for r in cols
    ])
    lines = ["Table 1. Qualification results on random samples of author-inventor candidates", ""]
    lines += _table(header, body)

    header2 = ["Corpus"] + [s.corpus_id for s in report.stats]
    body2 = [
        ["Patents"] + [str(s.n_patents) for s in report.stats],
        ["Unique normalized inventors"] + [str(s.n_inventors) for s in report.stats],
        ["Homonymous authors (before disambiguation)"] + [str(s.n_homonyms) for s in report.stats],
        [f"Author-inventor candidates (score > {report.threshold})"] + [str(s.n_candidates) for s in report.stats],
        ["Proportion matched among homonymous authors"] + [s.proportion_text for s in report.stats],
    ]
    lines += ["", "", "Table 2. Author-inventor proportions after homonym resolution", ""]
    lines += _table(header2, body2)
    return "\n".join(lines) + "\n"
