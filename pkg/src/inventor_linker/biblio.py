"""Homonymous author retrieval and affiliation geocoding.

Publication fixture: a JSON object mapping the exact author query string to
a list of publications::

    {"Reymond David[Author]": [
        {"pub_id": "31234567", "title": "...", "abstract": "...",
         "affiliation": "Université de Toulon, France", "year": 2016}
    ]}

Geocoding fixture: a JSON object mapping an affiliation string to
``{"latitude", "longitude", "normalized_address", "confidence"}`` or
``null`` for "no result".
"""

from __future__ import annotations

import json
import logging
import re
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

from .errors import FixtureNotFound, TransportError
from .names import InventorCluster, fold_name
from .transport import HttpTransport

log = logging.getLogger(__name__)

DEFAULT_RESULT_CAP = 200


class UnsplittableName(UserWarning):
    """The canonical name has a single token; the bare token is queried."""


@dataclass(frozen=True)
class Publication:
    pub_id: str
    title: str
    abstract: str
    author_form_matched: str = ""
    affiliation: str | None = None
    year: int | None = None

    @property
    def has_abstract(self) -> bool:
        return bool(self.abstract.strip())

    def to_json(self) -> dict:
        return {
            "pub_id": self.pub_id,
            "title": self.title,
            "abstract": self.abstract,
            "author_form_matched": self.author_form_matched,
            "affiliation": self.affiliation,
            "year": self.year,
        }

    @classmethod
    def from_json(cls, obj: Mapping, default_form: str = "") -> Publication:
        pub_id = str(obj.get("pub_id") or "").strip()
        if not pub_id:
            raise ValueError(f"publication without pub_id: {obj!r}")
        year = obj.get("year")
        return cls(
            pub_id=pub_id,
            title=str(obj.get("title") or ""),
            abstract=str(obj.get("abstract") or ""),
            author_form_matched=str(obj.get("author_form_matched") or default_form),
            affiliation=obj.get("affiliation") or None,
            year=int(year) if year not in (None, "") else None,
        )


@dataclass(frozen=True)
class HomonymSet:
    cluster_id: str
    publications: tuple[Publication, ...]
    query_used: str
    truncated: bool = False

    @property
    def has_homonyms(self) -> bool:
        return bool(self.publications)

    def to_json(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "query_used": self.query_used,
            "truncated": self.truncated,
            "publications": [p.to_json() for p in self.publications],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> HomonymSet:
        return cls(
            cluster_id=obj["cluster_id"],
            publications=tuple(Publication.from_json(p) for p in obj["publications"]),
            query_used=obj["query_used"],
            truncated=bool(obj.get("truncated", False)),
        )


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    normalized_address: str = ""
    confidence: float = 1.0

    def __post_init__(self):
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180 <= self.longitude <= 180:
            raise ValueError(f"longitude {self.longitude} out of range")
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence {self.confidence} out of range")

    def to_json(self) -> dict:
        return {
            "latitude": self.latitude,
            "longitude": self.longitude,
            "normalized_address": self.normalized_address,
            "confidence": self.confidence,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> GeoPoint:
        return cls(
            latitude=float(obj["latitude"]),
            longitude=float(obj["longitude"]),
            normalized_address=str(obj.get("normalized_address") or ""),
            confidence=float(obj.get("confidence", 1.0)),
        )


# --- author query -------------------------------------------------------------


def _is_upper_token(token: str) -> bool:
    letters = [c for c in token if c.isalpha()]
    return bool(letters) and all(c.isupper() for c in letters)


def build_author_query(cluster: InventorCluster | str) -> str:
    """Render the canonical name as ``<surname> <given>[Author]``.

    ``SURNAME Given`` and ``Given SURNAME`` are recognised from casing and
    put surname first; ``Surname, Given`` from the comma.  Anything else is
    sent in its original token order.
    """
    canonical = cluster.canonical if isinstance(cluster, InventorCluster) else cluster
    if "," in canonical:
        surname, _, given = canonical.partition(",")
        tokens = surname.split() + given.replace(",", " ").split()
    else:
        tokens = canonical.split()
    if not tokens:
        raise ValueError("cannot build an author query from an empty name")
    if len(tokens) == 1:
        warnings.warn(f"single-token name {tokens[0]!r}", UnsplittableName, stacklevel=2)
        return f"{tokens[0]}[Author]"
    upper = [_is_upper_token(t) for t in tokens]
    n_upper = sum(upper)
    if 0 < n_upper < len(tokens) and "," not in canonical:
        if all(upper[n_upper:]) and not any(upper[:-n_upper]):
            # Given SURNAME -> SURNAME Given
            tokens = tokens[-n_upper:] + tokens[:-n_upper]
    return " ".join(tokens) + "[Author]"


# --- publications -------------------------------------------------------------


def load_publication_fixture(path: str | Path) -> dict[str, list[dict]]:
    path = Path(path)
    if not path.is_file():
        raise FixtureNotFound(f"publication fixture {path} not found")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: publication fixture must map query strings to lists")
    return data


class BiblioAdapter(Protocol):
    def search(self, transport: HttpTransport, query: str, cap: int) -> list[str]:
        """Return publication ids matching the author query."""

    def fetch(self, transport: HttpTransport, ids: list[str], query: str) -> list[Publication]:
        """Return metadata for ``ids``."""


class PubMedAdapter:
    """NCBI E-utilities: ``esearch`` for ids, then batched ``efetch``."""

    batch_size = 200

    def __init__(self, base_url: str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils",
                 api_key: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key

    def _params(self, **extra) -> dict:
        params = {"db": "pubmed", **extra}
        if self.api_key:
            params["api_key"] = self.api_key
        return params

    def search(self, transport, query, cap):
        body = transport.get(
            f"{self.base_url}/esearch.fcgi",
            params=self._params(term=query, retmax=str(cap), retmode="json"),
        )
        result = json.loads(body)["esearchresult"]
        return list(result.get("idlist", []))

    def fetch(self, transport, ids, query):
        pubs = []
        for start in range(0, len(ids), self.batch_size):
            chunk = ids[start:start + self.batch_size]
            body = transport.get(
                f"{self.base_url}/efetch.fcgi",
                params=self._params(id=",".join(chunk), retmode="xml"),
            )
            pubs.extend(self.parse_articles(body, query))
        return pubs

    @staticmethod
    def parse_articles(body: bytes, query: str) -> list[Publication]:
        root = ET.fromstring(body)
        name = re.sub(r"\[[^\]]*\]$", "", query).strip()
        surname_key = fold_name(name.split()[0]) if name else ""
        out = []
        for article in root.iter("PubmedArticle"):
            pmid = article.findtext(".//MedlineCitation/PMID", default="").strip()
            art = article.find(".//MedlineCitation/Article")
            if not pmid or art is None:
                continue
            title = " ".join("".join(art.find("ArticleTitle").itertext()).split()) \
                if art.find("ArticleTitle") is not None else ""
            abstract = " ".join(
                " ".join("".join(t.itertext()).split())
                for t in art.findall("Abstract/AbstractText")
            )
            year_text = art.findtext("Journal/JournalIssue/PubDate/Year") or \
                (art.findtext("Journal/JournalIssue/PubDate/MedlineDate") or "")[:4]
            form, affiliation = name, None
            authors = art.findall("AuthorList/Author")
            for author in authors:
                last = author.findtext("LastName", default="")
                if surname_key and fold_name(last) == surname_key:
                    form = f"{last} {author.findtext('Initials', default='')}".strip()
                    affiliation = author.findtext("AffiliationInfo/Affiliation")
                    break
            out.append(Publication(
                pub_id=pmid,
                title=title,
                abstract=abstract,
                author_form_matched=form,
                affiliation=affiliation,
                year=int(year_text) if year_text.isdigit() else None,
            ))
        return out


@dataclass
class LiveBiblioSource:
    transport: HttpTransport
    adapter: BiblioAdapter = field(default_factory=PubMedAdapter)


def _finalize(cluster_id: str, query: str, pubs, cap: int) -> HomonymSet:
    unique: dict[str, Publication] = {}
    for pub in pubs:
        unique.setdefault(pub.pub_id, pub)
    ordered = [unique[k] for k in sorted(unique)]
    truncated = len(ordered) > cap
    if truncated:
        log.info("query %s returned %d publications, capped at %d", query, len(ordered), cap)
        ordered = ordered[:cap]
    return HomonymSet(cluster_id, tuple(ordered), query, truncated)


def fetch_publications(
    cluster: InventorCluster,
    source: str | Path | Mapping[str, list] | LiveBiblioSource,
    cap: int = DEFAULT_RESULT_CAP,
) -> HomonymSet:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnsplittableName)
        query = build_author_query(cluster)
    if isinstance(source, LiveBiblioSource):
        ids = source.adapter.search(source.transport, query, cap + 1)
        pubs = source.adapter.fetch(source.transport, ids, query) if ids else []
        return _finalize(cluster.cluster_id, query, pubs, cap)
    mapping = source if isinstance(source, Mapping) else load_publication_fixture(source)
    form = query[: -len("[Author]")]
    pubs = [Publication.from_json(p, default_form=form) for p in mapping.get(query, [])]
    return _finalize(cluster.cluster_id, query, pubs, cap)


# --- geocoding ------------------------------------------------------------------


class GeocodeAdapter(Protocol):
    def lookup(self, transport: HttpTransport, address: str) -> GeoPoint | None: ...


class NominatimAdapter:
    def __init__(self, base_url: str = "https://nominatim.openstreetmap.org"):
        self.base_url = base_url.rstrip("/")

    def lookup(self, transport, address):
        body = transport.get(
            f"{self.base_url}/search",
            params={"q": address, "format": "jsonv2", "limit": "1"},
        )
        hits = json.loads(body)
        if not hits:
            return None
        hit = hits[0]
        return GeoPoint(
            latitude=float(hit["lat"]),
            longitude=float(hit["lon"]),
            normalized_address=hit.get("display_name", ""),
            confidence=min(1.0, max(0.0, float(hit.get("importance", 0.0)))),
        )


@dataclass
class LiveGeocoder:
    transport: HttpTransport
    adapter: GeocodeAdapter = field(default_factory=NominatimAdapter)


def load_geocode_fixture(path: str | Path) -> dict[str, dict | None]:
    path = Path(path)
    if not path.is_file():
        raise FixtureNotFound(f"geocoding fixture {path} not found")
    return json.loads(path.read_text(encoding="utf-8"))


def geocode_affiliation(
    affiliation: str | None,
    source: str | Path | Mapping | LiveGeocoder,
    min_confidence: float = 0.0,
) -> GeoPoint | None:
    """Best effort: any failure yields ``None``."""
    if not affiliation or not affiliation.strip():
        return None
    try:
        if isinstance(source, LiveGeocoder):
            point = source.adapter.lookup(source.transport, affiliation)
        else:
            mapping = source if isinstance(source, Mapping) else load_geocode_fixture(source)
            entry = mapping.get(affiliation)
            point = GeoPoint.from_json(entry) if entry else None
    except (TransportError, ValueError, KeyError) as exc:
        log.warning("geocoding %r failed: %s", affiliation, exc)
        return None
    if point is None or point.confidence < min_confidence:
        return None
    return point
