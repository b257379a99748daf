"""Text to ranked IPC categories.

Two backends: a remote IPCCAT-style categoriser reached over HTTP, and a
keyword-lexicon stub that is deterministic and offline.  Both return a
:class:`Classification` sorted by descending score, ties broken by symbol.

Lexicon file format: UTF-8, one ``keyword IPC-code`` pair per line, ``#``
starts a comment::

    # oncology
    tumor     A61P35/00
    antibody  A61K
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import EmptyText, InvalidIpcSymbol, LexiconMissing, LexiconParseError
from .ipc import IpcCode, parse_ipc
from .transport import HttpTransport

DEFAULT_TOP_K = 5
DEFAULT_TEXT_CAP = 8 * 1024
GRANULARITIES = ("subclass", "group")

_KEYWORD_RE = re.compile(r"^\w+(?:-\w+)*$")
_TERM_RE = re.compile(r"\w+(?:-\w+)*")


@dataclass(frozen=True)
class IpcPrediction:
    code: IpcCode
    score: int

    def __post_init__(self):
        if self.score < 0:
            raise ValueError(f"negative score {self.score}")


@dataclass(frozen=True)
class Classification:
    text_ref: str
    predictions: tuple[IpcPrediction, ...]
    classifier_id: str

    @property
    def is_empty(self) -> bool:
        return not self.predictions

    def to_json(self) -> dict:
        return {
            "text_ref": self.text_ref,
            "classifier_id": self.classifier_id,
            "predictions": [[p.code.symbol, p.score] for p in self.predictions],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> Classification:
        return cls(
            text_ref=obj["text_ref"],
            predictions=tuple(IpcPrediction(parse_ipc(c), int(s)) for c, s in obj["predictions"]),
            classifier_id=obj["classifier_id"],
        )


def rank_predictions(scores: Mapping[IpcCode, int], top_k: int = DEFAULT_TOP_K) -> tuple[IpcPrediction, ...]:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0].symbol))
    return tuple(IpcPrediction(code, score) for code, score in ordered[:top_k])


@dataclass(frozen=True)
class StubLexicon:
    entries: Mapping[str, frozenset[IpcCode]]

    def __post_init__(self):
        for keyword in self.entries:
            if not keyword or keyword != keyword.lower() or not _KEYWORD_RE.match(keyword):
                raise ValueError(f"invalid lexicon keyword {keyword!r}")

    @property
    def digest(self) -> str:
        blob = json.dumps(
            {k: sorted(c.symbol for c in v) for k, v in self.entries.items()}, sort_keys=True
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def parse_lexicon(lines) -> StubLexicon:
    entries: dict[str, set[IpcCode]] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise LexiconParseError(lineno, "expected '<keyword> <IPC code>'")
        keyword, symbol = parts[0].lower(), parts[1]
        if not _KEYWORD_RE.match(keyword):
            raise LexiconParseError(lineno, f"invalid keyword {parts[0]!r}")
        try:
            code = parse_ipc(symbol)
        except InvalidIpcSymbol as exc:
            raise LexiconParseError(lineno, exc.reason) from None
        entries.setdefault(keyword, set()).add(code)
    return StubLexicon({k: frozenset(v) for k, v in entries.items()})


def load_lexicon(path: str | Path) -> StubLexicon:
    path = Path(path)
    if not path.is_file():
        raise LexiconMissing(f"lexicon {path} not found")
    with path.open(encoding="utf-8") as fh:
        return parse_lexicon(fh)


def normalize_text(text: str, cap_bytes: int = DEFAULT_TEXT_CAP) -> str:
    """Collapse whitespace and truncate to ``cap_bytes`` at a sentence end."""
    text = " ".join((text or "").split())
    raw = text.encode("utf-8")
    if len(raw) <= cap_bytes:
        return text
    head = raw[:cap_bytes].decode("utf-8", "ignore")
    cut = max(head.rfind(". "), head.rfind("! "), head.rfind("? "))
    return head[: cut + 1] if cut > 0 else head


def text_terms(text: str) -> set[str]:
    terms = set()
    for term in _TERM_RE.findall(text.lower()):
        terms.add(term)
        if "-" in term:
            terms.update(term.split("-"))
    return terms


class StubClassifier:
    """Scores each code 100 x (distinct lexicon keywords for it in the text)."""

    points_per_keyword = 100

    def __init__(self, lexicon: StubLexicon | None, top_k: int = DEFAULT_TOP_K):
        if lexicon is None:
            raise LexiconMissing("stub classifier needs a lexicon")
        self.lexicon = lexicon
        self.top_k = top_k

    @property
    def classifier_id(self) -> str:
        return f"stub:{self.lexicon.digest}"

    def scores(self, text: str, granularity: str = "subclass") -> dict[IpcCode, int]:
        terms = text_terms(text)
        hits: dict[IpcCode, set[str]] = {}
        for keyword, codes in self.lexicon.entries.items():
            if keyword not in terms:
                continue
            for code in codes:
                if granularity == "subclass":
                    code = code.at_subclass()
                hits.setdefault(code, set()).add(keyword)
        return {code: self.points_per_keyword * len(kws) for code, kws in hits.items()}

    def classify(self, text: str, text_ref: str, granularity: str = "subclass") -> Classification:
        scores = {c: s for c, s in self.scores(text, granularity).items() if s > 0}
        return Classification(text_ref, rank_predictions(scores, self.top_k), self.classifier_id)


class IpccatAdapter:
    """WIPO IPCCAT-style categoriser.

    Sends the text as the POST body; expects a JSON list of
    ``{"category": ..., "score": ...}`` objects (``symbol`` is accepted for
    ``category``).
    """

    levels = {"subclass": "SUBCLASS", "group": "MAINGROUP"}

    def __init__(self, url: str = "https://ipccat.wipo.int/EN/query", lang: str = "en"):
        self.url = url
        self.lang = lang

    def request(self, text: str, granularity: str, top_k: int):
        params = {
            "lang": self.lang,
            "hierarchiclevel": self.levels[granularity],
            "numberofpredictions": str(top_k),
        }
        return self.url, params, text.encode("utf-8")

    @staticmethod
    def parse(body: bytes) -> dict[IpcCode, int]:
        data = json.loads(body)
        if isinstance(data, dict):
            data = data.get("predictions") or data.get("results") or []
        scores: dict[IpcCode, int] = {}
        for item in data:
            code = parse_ipc(item.get("category") or item.get("symbol"))
            score = int(float(item.get("score", 0)))
            scores[code] = max(score, scores.get(code, 0))
        return scores


@dataclass
class RemoteClassifier:
    transport: HttpTransport
    adapter: IpccatAdapter = field(default_factory=IpccatAdapter)
    top_k: int = DEFAULT_TOP_K

    classifier_id = "ipccat"

    def classify(self, text: str, text_ref: str, granularity: str = "subclass") -> Classification:
        url, params, body = self.adapter.request(text, granularity, self.top_k)
        scores = self.adapter.parse(
            self.transport.post(url, params=params, data=body,
                                headers={"Content-Type": "text/plain; charset=utf-8"})
        )
        return Classification(text_ref, rank_predictions(scores, self.top_k), self.classifier_id)


def classify_text(
    text: str,
    backend: StubClassifier | RemoteClassifier,
    granularity: str = "subclass",
    text_ref: str = "",
    cap_bytes: int = DEFAULT_TEXT_CAP,
) -> Classification:
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    clean = normalize_text(text, cap_bytes)
    if not clean:
        raise EmptyText(f"nothing to classify for {text_ref or 'text'}")
    if not text_ref:
        text_ref = hashlib.sha256(clean.encode("utf-8")).hexdigest()[:16]
    return backend.classify(clean, text_ref, granularity)
