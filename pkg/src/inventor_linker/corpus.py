"""Corpus definitions, CQL query validation and patent record ingestion.

Fixture format (UTF-8, one JSON object per line)::

    {"publication_number": "FR3012345A1",
     "title": "...", "abstract": "...",
     "ipc_codes": ["A61K 31/00", "A61P35/00"],
     "inventors": ["REYMOND David", "..."],
     "applicants": ["UNIV TOULON"],
     "publication_date": "2015-04-24",
     "priority_country": "FR"}

``corpus_id`` may be present but is overwritten by the spec being fetched.
The ingest stage artifact is written in exactly this format, so it can be
fed back as a fixture.
"""

from __future__ import annotations

import configparser
import json
import logging
import re
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Protocol

from .errors import (
    FixtureNotFound,
    InvalidCorpusSpec,
    InvalidIpcSymbol,
    MalformedQuery,
    RecordParseError,
)
from .ipc import IpcCode, parse_ipc
from .transport import HttpTransport

log = logging.getLogger(__name__)

KNOWN_FIELDS = {"pa", "ic", "pd", "pr"}
BOOLEAN_OPS = {"and", "or", "not", "prox"}
RELATIONS = {"=", "within", "all", "any"}

_CORPUS_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class CorpusSpec:
    corpus_id: str
    query: str
    description: str = ""
    period: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.corpus_id or not _CORPUS_ID_RE.match(self.corpus_id):
            raise InvalidCorpusSpec(f"invalid corpus_id {self.corpus_id!r}")
        if not self.query or not self.query.strip():
            raise InvalidCorpusSpec(f"corpus {self.corpus_id}: empty query")
        if self.period is not None and self.period[0] > self.period[1]:
            raise InvalidCorpusSpec(f"corpus {self.corpus_id}: period {self.period} is reversed")


# The three Espacenet corpora (French priority filings).
UNIV = CorpusSpec(
    "Univ",
    '(pa=univ* or pa=institut or pa=laboratoire) AND (ic=A61) AND (pd within "2014, 2016") AND pr=FR',
    "Public research applicants, medical/veterinary/hygiene (A61), 2014-2016",
    (2014, 2016),
)
LARGE = CorpusSpec(
    "Large",
    '(ic=A63 OR IC=A62) AND (pd within "2014, 2016") AND pr=FR',
    "Any applicant, sports/games (A63) and life-saving/fire-fighting (A62), 2014-2016",
    (2014, 2016),
)
LARGE_BIS = CorpusSpec(
    "LargeBis",
    "ic=A61 AND pd=2013 AND pr=FR",
    "Any applicant, A61, 2013",
    (2013, 2013),
)
DEFAULT_CORPORA = (UNIV, LARGE, LARGE_BIS)


# --- query validation -------------------------------------------------------

_TOKEN_RE = re.compile(r'\s+|(?P<lp>\()|(?P<rp>\))|(?P<eq>=)|(?P<quote>")|(?P<word>[^\s()="]+)')


def _tokenize(query: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(query):
        if query[pos] == '"':
            end = query.find('"', pos + 1)
            if end < 0:
                raise MalformedQuery(pos, "unbalanced quote")
            tokens.append(("str", query[pos + 1:end], pos))
            pos = end + 1
            continue
        m = _TOKEN_RE.match(query, pos)
        kind = m.lastgroup
        if kind == "lp":
            tokens.append(("(", "(", pos))
        elif kind == "rp":
            tokens.append((")", ")", pos))
        elif kind == "eq":
            tokens.append(("rel", "=", pos))
        elif kind == "word":
            tokens.append(("word", m.group("word"), pos))
        pos = m.end()
    return tokens


def validate_query(query: str) -> None:
    """Check balanced parentheses/quotes and that every field prefix is one
    of ``pa``, ``ic``, ``pd``, ``pr`` (case-insensitive)."""
    if not query or not query.strip():
        raise MalformedQuery(0, "empty query")
    tokens = _tokenize(query)
    depth = 0
    expect_term = True  # a term (field clause or group) is expected next
    i = 0
    while i < len(tokens):
        kind, value, pos = tokens[i]
        if kind == "(":
            if not expect_term:
                raise MalformedQuery(pos, "missing boolean operator before '('")
            depth += 1
            i += 1
            continue
        if kind == ")":
            if expect_term:
                raise MalformedQuery(pos, "empty group or dangling operator before ')'")
            depth -= 1
            if depth < 0:
                raise MalformedQuery(pos, "unbalanced ')'")
            i += 1
            continue
        if kind == "word" and value.lower() in BOOLEAN_OPS:
            if expect_term:
                if value.lower() == "not":
                    i += 1
                    continue
                raise MalformedQuery(pos, f"unexpected operator {value!r}")
            expect_term = True
            i += 1
            continue
        if kind == "word" and expect_term:
            nxt = tokens[i + 1] if i + 1 < len(tokens) else None
            is_relation = nxt is not None and (
                nxt[0] == "rel" or (nxt[0] == "word" and nxt[1].lower() in RELATIONS)
            )
            if not is_relation:
                raise MalformedQuery(pos, f"expected field=value, got {value!r}")
            if value.lower() not in KNOWN_FIELDS:
                raise MalformedQuery(pos, f"unknown field prefix {value!r}")
            if i + 2 >= len(tokens) or tokens[i + 2][0] not in ("word", "str"):
                raise MalformedQuery(nxt[2], f"missing value after {value}{nxt[1]}")
            expect_term = False
            i += 3
            continue
        raise MalformedQuery(pos, f"unexpected token {value!r}")
    if depth != 0:
        raise MalformedQuery(len(query), "unbalanced '('")
    if expect_term:
        raise MalformedQuery(len(query), "query ends with an operator")


def build_query(spec: CorpusSpec) -> str:
    validate_query(spec.query)
    return spec.query


def load_corpus_specs(path: str | Path) -> list[CorpusSpec]:
    """Read ``[corpus:<id>]`` sections (keys: query, description, period)."""
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise FixtureNotFound(f"corpus spec file {path} not found")
    return corpus_specs_from_parser(parser)


def corpus_specs_from_parser(parser: configparser.ConfigParser) -> list[CorpusSpec]:
    specs = []
    for section in parser.sections():
        if not section.startswith("corpus:"):
            continue
        body = parser[section]
        period = None
        if body.get("period"):
            start, _, end = body["period"].partition("-")
            try:
                period = (int(start), int(end or start))
            except ValueError:
                raise InvalidCorpusSpec(f"{section}: bad period {body['period']!r}") from None
        spec = CorpusSpec(
            corpus_id=section.split(":", 1)[1].strip(),
            query=body.get("query", ""),
            description=body.get("description", ""),
            period=period,
        )
        validate_query(spec.query)
        specs.append(spec)
    ids = [s.corpus_id for s in specs]
    if len(ids) != len(set(ids)):
        raise InvalidCorpusSpec(f"duplicate corpus ids in {ids}")
    return specs


# --- records ----------------------------------------------------------------


@dataclass(frozen=True)
class PatentRecord:
    publication_number: str
    title: str
    abstract: str
    ipc_codes: tuple[IpcCode, ...]
    inventors_raw: tuple[str, ...]
    applicants_raw: tuple[str, ...] = ()
    publication_date: str = ""
    priority_country: str = ""
    corpus_id: str = ""

    @property
    def abstract_missing(self) -> bool:
        return not self.abstract.strip()

    @property
    def text(self) -> str:
        """Abstract, or the title when the record has no abstract."""
        return self.title if self.abstract_missing else self.abstract

    def to_json(self) -> dict:
        return {
            "publication_number": self.publication_number,
            "title": self.title,
            "abstract": self.abstract,
            "abstract_missing": self.abstract_missing,
            "ipc_codes": [c.symbol for c in self.ipc_codes],
            "inventors": list(self.inventors_raw),
            "applicants": list(self.applicants_raw),
            "publication_date": self.publication_date,
            "priority_country": self.priority_country,
            "corpus_id": self.corpus_id,
        }


def _dedup(items: Iterable) -> tuple:
    seen = {}
    for item in items:
        seen.setdefault(item, None)
    return tuple(seen)


def record_from_json(obj: dict, corpus_id: str = "", index: int = 0) -> PatentRecord:
    if not isinstance(obj, dict):
        raise RecordParseError(index, "record is not an object")
    number = str(obj.get("publication_number") or "").strip()
    if not number:
        raise RecordParseError(index, "missing publication_number")
    try:
        codes = _dedup(parse_ipc(c) for c in obj.get("ipc_codes") or [])
    except InvalidIpcSymbol as exc:
        raise RecordParseError(index, f"bad IPC code: {exc.reason}") from None
    pub_date = str(obj.get("publication_date") or "")
    if pub_date:
        try:
            date.fromisoformat(pub_date)
        except ValueError:
            raise RecordParseError(index, f"bad publication_date {pub_date!r}") from None
    country = str(obj.get("priority_country") or "").upper()
    if country and not re.fullmatch(r"[A-Z]{2}", country):
        raise RecordParseError(index, f"bad priority_country {country!r}")
    inventors = obj.get("inventors") or []
    if not isinstance(inventors, list) or not all(isinstance(n, str) for n in inventors):
        raise RecordParseError(index, "inventors must be a list of strings")
    return PatentRecord(
        publication_number=number,
        title=str(obj.get("title") or ""),
        abstract=str(obj.get("abstract") or ""),
        ipc_codes=codes,
        inventors_raw=tuple(inventors),
        applicants_raw=tuple(obj.get("applicants") or []),
        publication_date=pub_date,
        priority_country=country,
        corpus_id=corpus_id or str(obj.get("corpus_id") or ""),
    )


def canonicalize(records: Iterable[PatentRecord]) -> list[PatentRecord]:
    """Deduplicate by publication number and sort.

    When two records share a number the one with the smallest JSON
    serialisation wins, so the outcome does not depend on input order.
    """
    best: dict[str, tuple[str, PatentRecord]] = {}
    for rec in records:
        key = json.dumps(rec.to_json(), sort_keys=True, ensure_ascii=False)
        held = best.get(rec.publication_number)
        if held is None or key < held[0]:
            best[rec.publication_number] = (key, rec)
    return [best[k][1] for k in sorted(best)]


def _parse_all(raw_records, corpus_id: str, strict: bool) -> list[PatentRecord]:
    out = []
    skipped = 0
    for index, obj in enumerate(raw_records):
        try:
            if isinstance(obj, RecordParseError):
                raise obj
            out.append(record_from_json(obj, corpus_id, index))
        except RecordParseError as exc:
            if strict:
                raise
            skipped += 1
            log.warning("skipping %s", exc)
    if skipped:
        log.warning("corpus %s: skipped %d unparseable record(s)", corpus_id, skipped)
    return out


def read_fixture(path: str | Path) -> list:
    path = Path(path)
    if not path.is_file():
        raise FixtureNotFound(f"patent fixture {path} not found")
    items = []
    with path.open(encoding="utf-8") as fh:
        for index, line in enumerate(l for l in fh if l.strip()):
            try:
                items.append(json.loads(line))
            except json.JSONDecodeError as exc:
                items.append(RecordParseError(index, f"invalid JSON: {exc.msg}"))
    return items


def write_records(records: Iterable[PatentRecord]) -> bytes:
    lines = [json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) for r in records]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


# --- live source ------------------------------------------------------------


class PatentAdapter(Protocol):
    """Translates one upstream search API into fixture-shaped dicts."""

    page_size: int

    def page_request(self, query: str, start: int) -> tuple[str, dict, dict]:
        """Return ``(url, params, headers)`` for the page starting at ``start`` (1-based)."""

    def parse_page(self, body: bytes) -> tuple[int, list[dict]]:
        """Return ``(total_result_count, records)``."""


OPS_NS = {"ops": "http://ops.epo.org", "ex": "http://www.epo.org/exchange"}


class OpsAdapter:
    """EPO Open Patent Services ``published-data/search/biblio`` adapter."""

    page_size = 100
    max_results = 2000

    def __init__(self, base_url: str = "https://ops.epo.org/3.2/rest-services", token: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.token = token

    def page_request(self, query: str, start: int):
        end = start + self.page_size - 1
        headers = {"Accept": "application/xml"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return (
            f"{self.base_url}/published-data/search/biblio",
            {"q": query, "Range": f"{start}-{end}"},
            headers,
        )

    def parse_page(self, body: bytes):
        root = ET.fromstring(body)
        search = root.find(".//ops:biblio-search", OPS_NS)
        total = int(search.get("total-result-count", "0")) if search is not None else 0
        docs = root.findall(".//ex:exchange-document", OPS_NS)
        return total, [self._parse_document(d) for d in docs]

    @staticmethod
    def _text(el) -> str:
        return " ".join("".join(el.itertext()).split()) if el is not None else ""

    def _parse_document(self, doc) -> dict:
        bib = doc.find("ex:bibliographic-data", OPS_NS)
        number = f"{doc.get('country', '')}{doc.get('doc-number', '')}{doc.get('kind', '')}"
        pub_date = ""
        if bib is not None:
            for docid in bib.findall("ex:publication-reference/ex:document-id", OPS_NS):
                d = docid.findtext("ex:date", default="", namespaces=OPS_NS)
                if len(d) == 8:
                    pub_date = f"{d[:4]}-{d[4:6]}-{d[6:]}"
                    break
        titles = bib.findall("ex:invention-title", OPS_NS) if bib is not None else []
        title = next((self._text(t) for t in titles if t.get("lang") == "en"), None)
        if title is None:
            title = self._text(titles[0]) if titles else ""
        abstracts = doc.findall("ex:abstract", OPS_NS)
        abstract = next((self._text(a) for a in abstracts if a.get("lang") == "en"), None)
        if abstract is None:
            abstract = self._text(abstracts[0]) if abstracts else ""
        ipc = []
        for el in doc.findall(".//ex:classification-ipcr/ex:text", OPS_NS):
            parts = (el.text or "").split()
            if parts:
                ipc.append(" ".join(parts[:2]) if len(parts) > 1 and "/" in parts[1] else parts[0])
        country = ""
        claim = doc.find(".//ex:priority-claims/ex:priority-claim/ex:document-id", OPS_NS)
        if claim is not None:
            country = claim.findtext("ex:country", default="", namespaces=OPS_NS)
            if not country:
                country = claim.findtext("ex:doc-number", default="", namespaces=OPS_NS)[:2]
        return {
            "publication_number": number,
            "title": title,
            "abstract": abstract,
            "ipc_codes": ipc,
            "inventors": self._parties(doc, "inventor"),
            "applicants": self._parties(doc, "applicant"),
            "publication_date": pub_date,
            "priority_country": country,
        }

    @staticmethod
    def _parties(doc, kind: str) -> list[str]:
        names = {}
        for fmt in ("original", "epodoc"):
            for party in doc.findall(f".//ex:parties/ex:{kind}s/ex:{kind}", OPS_NS):
                if party.get("data-format") != fmt:
                    continue
                name = party.findtext(f"ex:{kind}-name/ex:name", default="", namespaces=OPS_NS)
                name = name.replace("\u2002", " ").strip().rstrip(",").strip()
                if name:
                    names.setdefault(name, None)
            if names:
                break
        return list(names)


@dataclass
class LiveSource:
    transport: HttpTransport
    adapter: PatentAdapter = field(default_factory=OpsAdapter)
    workers: int = 1


def _fetch_live(query: str, source: LiveSource) -> list[dict]:
    adapter = source.adapter

    def page(start: int):
        url, params, headers = adapter.page_request(query, start)
        return adapter.parse_page(source.transport.get(url, params=params, headers=headers))

    total, first = page(1)
    limit = min(total, getattr(adapter, "max_results", total))
    starts = list(range(1 + adapter.page_size, limit + 1, adapter.page_size))
    with ThreadPoolExecutor(max_workers=max(1, source.workers)) as pool:
        rest = list(pool.map(page, starts))
    records = list(first)
    for _, recs in rest:
        records.extend(recs)
    if total > limit:
        log.warning("query matched %d documents, only %d retrievable", total, limit)
    return records


def fetch_patents(
    spec: CorpusSpec,
    source: str | Path | LiveSource,
    strict: bool = False,
) -> list[PatentRecord]:
    """Fetch or replay a corpus; output is deduplicated and sorted by
    publication number."""
    query = build_query(spec)
    if isinstance(source, LiveSource):
        raw = _fetch_live(query, source)
    else:
        raw = read_fixture(source)
    return canonicalize(_parse_all(raw, spec.corpus_id, strict))
