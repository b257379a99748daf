"""Resumable stage runner over on-disk artifacts.

Layout under ``workdir``::

    <corpus_id>/patents.jsonl          ingest
    <corpus_id>/clusters.jsonl         normalize
    <corpus_id>/homonyms.jsonl         homonyms
    <corpus_id>/classifications.jsonl  classify
    <corpus_id>/decisions.jsonl        match
    <corpus_id>/candidates.jsonl       match
    <corpus_id>/candidates.geo.jsonl   geocode
    <corpus_id>/sample.json            sample (mutated by ``verdict``)
    report.txt, report.json            report
    <stage>.meta.json                  one per stage, next to its outputs

A stage is skipped when its meta file matches the current content, the
current upstream hashes and the current stage parameters.
"""

from __future__ import annotations

import base64
import fcntl
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from . import __version__
from .biblio import (
    HomonymSet,
    LiveBiblioSource,
    LiveGeocoder,
    NominatimAdapter,
    PubMedAdapter,
    fetch_publications,
    geocode_affiliation,
    load_geocode_fixture,
    load_publication_fixture,
)
from .cache import ResponseCache, atomic_write_bytes
from .classify import (
    Classification,
    IpccatAdapter,
    RemoteClassifier,
    StubClassifier,
    classify_text,
    load_lexicon,
)
from .config import PipelineConfig
from .corpus import LiveSource, OpsAdapter, fetch_patents, record_from_json, write_records
from .errors import StaleUpstream, UpstreamMissing
from .match import (
    AuthorInventorCandidate,
    CorpusArtifacts,
    aggregate_candidates,
    compute_corpus_stats,
    match_corpus,
)
from .names import InventorCluster, cluster_inventors
from .qualify import QualificationSample, build_report, draw_sample, record_verdict
from .transport import HttpTransport, RateLimiter

log = logging.getLogger(__name__)

STAGES = ("ingest", "normalize", "homonyms", "classify", "match", "geocode", "sample", "report")

UPSTREAM: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "normalize": ("ingest",),
    "homonyms": ("normalize",),
    "classify": ("homonyms",),
    "match": ("ingest", "normalize", "homonyms", "classify"),
    "geocode": ("homonyms", "match"),
    "sample": ("geocode",),
    "report": ("ingest", "normalize", "homonyms", "geocode", "sample"),
}

OUTPUTS: dict[str, tuple[str, ...]] = {
    "ingest": ("patents.jsonl",),
    "normalize": ("clusters.jsonl",),
    "homonyms": ("homonyms.jsonl",),
    "classify": ("classifications.jsonl",),
    "match": ("decisions.jsonl", "candidates.jsonl"),
    "geocode": ("candidates.geo.jsonl",),
    "sample": ("sample.json",),
    "report": ("report.txt", "report.json"),
}

GLOBAL = "*"


def _jsonl(items: Iterable[dict]) -> bytes:
    lines = [json.dumps(i, sort_keys=True, ensure_ascii=False) for i in items]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def _file_digest(path: Path | None) -> str | None:
    if path is None or not path.is_file():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(frozen=True)
class StageArtifact:
    stage: str
    corpus_id: str
    content_hash: str
    produced_at: str
    tool_version: str
    upstream: dict
    params_hash: str


class ArtifactStore:
    def __init__(self, workdir: Path):
        self.workdir = Path(workdir)

    def directory(self, corpus_id: str) -> Path:
        return self.workdir if corpus_id == GLOBAL else self.workdir / corpus_id

    def path(self, stage: str, corpus_id: str, name: str) -> Path:
        return self.directory(corpus_id) / name

    def meta_path(self, stage: str, corpus_id: str) -> Path:
        return self.directory(corpus_id) / f"{stage}.meta.json"

    def content_hash(self, stage: str, corpus_id: str) -> str | None:
        h = hashlib.sha256()
        for name in OUTPUTS[stage]:
            path = self.path(stage, corpus_id, name)
            if not path.is_file():
                return None
            data = path.read_bytes()
            h.update(name.encode() + b"\0" + str(len(data)).encode() + b"\0" + data)
        return h.hexdigest()

    def read_meta(self, stage: str, corpus_id: str) -> StageArtifact | None:
        path = self.meta_path(stage, corpus_id)
        if not path.is_file():
            return None
        return StageArtifact(**json.loads(path.read_text(encoding="utf-8")))

    def verify(self, stage: str, corpus_id: str) -> StageArtifact:
        meta = self.read_meta(stage, corpus_id)
        actual = self.content_hash(stage, corpus_id)
        if meta is None or actual is None:
            raise UpstreamMissing(stage)
        if actual != meta.content_hash:
            raise StaleUpstream(stage)
        return meta

    def write(self, stage: str, corpus_id: str, files: dict[str, bytes],
              upstream: dict, params_hash: str) -> StageArtifact:
        for name in OUTPUTS[stage]:
            atomic_write_bytes(self.path(stage, corpus_id, name), files[name])
        return self._write_meta(stage, corpus_id, upstream, params_hash)

    def _write_meta(self, stage, corpus_id, upstream, params_hash) -> StageArtifact:
        meta = StageArtifact(
            stage=stage,
            corpus_id=corpus_id,
            content_hash=self.content_hash(stage, corpus_id),
            produced_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            tool_version=__version__,
            upstream=upstream,
            params_hash=params_hash,
        )
        blob = json.dumps(asdict(meta), indent=2, sort_keys=True).encode("utf-8")
        atomic_write_bytes(self.meta_path(stage, corpus_id), blob)
        return meta


class StageContext:
    """Read access restricted to the stage's declared upstream."""

    def __init__(self, store: ArtifactStore, stage: str, corpus_id: str):
        self.store = store
        self.stage = stage
        self.corpus_id = corpus_id

    def read_bytes(self, upstream: str, name: str, corpus_id: str | None = None) -> bytes:
        if upstream not in UPSTREAM[self.stage]:
            raise RuntimeError(f"stage {self.stage} may not read {upstream} artifacts")
        return self.store.path(upstream, corpus_id or self.corpus_id, name).read_bytes()

    def read_jsonl(self, upstream: str, name: str, corpus_id: str | None = None) -> list[dict]:
        text = self.read_bytes(upstream, name, corpus_id).decode("utf-8")
        return [json.loads(line) for line in text.splitlines() if line.strip()]

    # typed readers
    def patents(self, corpus_id=None):
        return [record_from_json(o) for o in self.read_jsonl("ingest", "patents.jsonl", corpus_id)]

    def clusters(self, corpus_id=None):
        return [InventorCluster.from_json(o) for o in self.read_jsonl("normalize", "clusters.jsonl", corpus_id)]

    def homonym_sets(self, corpus_id=None):
        return [HomonymSet.from_json(o) for o in self.read_jsonl("homonyms", "homonyms.jsonl", corpus_id)]

    def classifications(self, corpus_id=None):
        return [Classification.from_json(o) for o in self.read_jsonl("classify", "classifications.jsonl", corpus_id)]

    def candidates(self, corpus_id=None):
        return [AuthorInventorCandidate.from_json(o) for o in self.read_jsonl("match", "candidates.jsonl", corpus_id)]

    def geo_candidates(self, corpus_id=None):
        return [AuthorInventorCandidate.from_json(o)
                for o in self.read_jsonl("geocode", "candidates.geo.jsonl", corpus_id)]

    def sample(self, corpus_id=None) -> QualificationSample:
        return QualificationSample.from_json(json.loads(self.read_bytes("sample", "sample.json", corpus_id)))


class Pipeline:
    def __init__(self, config: PipelineConfig, echo: Callable[[str], None] = print):
        config.validate()
        self.config = config
        self.store = ArtifactStore(config.workdir)
        self.echo = echo
        self._cache = ResponseCache(config.cache_dir)
        self._transports: dict[str, HttpTransport] = {}
        self._memo: dict[str, object] = {}

    # --- backends -------------------------------------------------------------

    def transport(self, endpoint: str) -> HttpTransport:
        if endpoint not in self._transports:
            self._transports[endpoint] = HttpTransport(
                cache=self._cache,
                rate_limiter=RateLimiter(self.config.rate_limit(endpoint)),
                max_retries=self.config.max_retries,
                offline=self.config.offline,
                headers={"User-Agent": f"inventor-linker/{__version__}"},
            )
        return self._transports[endpoint]

    def _ops_token(self) -> str | None:
        key = self.config.credentials.get("ops_key")
        secret = self.config.credentials.get("ops_secret")
        if not (key and secret) or self.config.offline:
            return None
        basic = base64.b64encode(f"{key}:{secret}".encode()).decode()
        body = self.transport("ops").post(
            self.config.endpoints["ops_auth"],
            data="grant_type=client_credentials",
            headers={"Authorization": f"Basic {basic}",
                     "Content-Type": "application/x-www-form-urlencoded"},
            use_cache=False,
        )
        return json.loads(body)["access_token"]

    def _publication_source(self):
        if self.config.backends["publications"] == "live":
            adapter = PubMedAdapter(self.config.endpoints["pubmed"],
                                    self.config.credentials.get("pubmed_api_key"))
            return LiveBiblioSource(self.transport("pubmed"), adapter)
        if "publications" not in self._memo:
            self._memo["publications"] = load_publication_fixture(self.config.publications_fixture)
        return self._memo["publications"]

    def _classifier(self):
        if self.config.backends["classifier"] == "remote":
            return RemoteClassifier(self.transport("ipccat"),
                                    IpccatAdapter(self.config.endpoints["ipccat"]),
                                    top_k=self.config.top_k)
        if "lexicon" not in self._memo:
            self._memo["lexicon"] = load_lexicon(self.config.lexicon)
        return StubClassifier(self._memo["lexicon"], top_k=self.config.top_k)

    def _geocoder(self):
        mode = self.config.backends["geocoder"]
        if mode == "none":
            return None
        if mode == "live":
            return LiveGeocoder(self.transport("geocoder"), NominatimAdapter(self.config.endpoints["geocoder"]))
        return load_geocode_fixture(self.config.geocode_fixture)

    def _map(self, fn, items):
        items = list(items)
        if self.config.workers == 1 or len(items) < 2:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(fn, items))

    # --- parameters -----------------------------------------------------------

    def params_for(self, stage: str, corpus_id: str) -> dict:
        c = self.config
        b = c.backends
        if stage == "ingest":
            spec = c.corpus(corpus_id)
            src = ({"fixture": _file_digest(c.patent_fixtures.get(corpus_id))}
                   if b["patents"] == "fixture" else {"endpoint": c.endpoints["ops"]})
            return {"query": spec.query, "strict": c.strict, **src}
        if stage == "normalize":
            return {"name_threshold": c.name_threshold}
        if stage == "homonyms":
            src = ({"fixture": _file_digest(c.publications_fixture)}
                   if b["publications"] == "fixture" else {"endpoint": c.endpoints["pubmed"]})
            return {"result_cap": c.result_cap, **src}
        if stage == "classify":
            src = ({"lexicon": _file_digest(c.lexicon)}
                   if b["classifier"] == "stub" else {"endpoint": c.endpoints["ipccat"]})
            return {"granularity": c.granularity, "top_k": c.top_k,
                    "text_cap_bytes": c.text_cap_bytes, **src}
        if stage == "match":
            return {"score_threshold": c.score_threshold, "prefix_len": c.prefix_len}
        if stage == "geocode":
            mode = b["geocoder"]
            src = {"fixture": _file_digest(c.geocode_fixture)} if mode == "fixture" else {
                "endpoint": c.endpoints["geocoder"] if mode == "live" else None}
            return {"mode": mode, "min_confidence": c.geo_min_confidence, **src}
        if stage == "sample":
            return c.sampling.to_json()
        if stage == "report":
            return {"corpora": [s.corpus_id for s in c.corpora], "threshold": c.score_threshold,
                    "z": c.sampling.z, "p": c.sampling.p}
        raise ValueError(f"unknown stage {stage!r}")

    def params_hash(self, stage: str, corpus_id: str) -> str:
        blob = json.dumps(self.params_for(stage, corpus_id), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # --- running --------------------------------------------------------------

    def _corpora(self, corpus_id: str | None) -> list[str]:
        if corpus_id is None:
            return [s.corpus_id for s in self.config.corpora]
        return [self.config.corpus(corpus_id).corpus_id]

    def _upstream_hashes(self, stage: str, corpus_id: str) -> dict:
        corpora = self._corpora(None) if corpus_id == GLOBAL else [corpus_id]
        hashes = {}
        for up in reversed(UPSTREAM[stage]):
            for cid in corpora:
                hashes[f"{cid}/{up}"] = self.store.verify(up, cid).content_hash
        return dict(sorted(hashes.items()))

    def is_up_to_date(self, stage: str, corpus_id: str) -> bool:
        meta = self.store.read_meta(stage, corpus_id)
        if meta is None or self.store.content_hash(stage, corpus_id) != meta.content_hash:
            return False
        return (meta.upstream == self._upstream_hashes(stage, corpus_id)
                and meta.params_hash == self.params_hash(stage, corpus_id))

    def run_stage(self, stage: str, corpus_id: str | None = None, force: bool = False) -> list[StageArtifact]:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        targets = [GLOBAL] if stage == "report" else self._corpora(corpus_id)
        return [self._run_one(stage, cid, force) for cid in targets]

    def _run_one(self, stage: str, corpus_id: str, force: bool) -> StageArtifact:
        upstream = self._upstream_hashes(stage, corpus_id)
        params_hash = self.params_hash(stage, corpus_id)
        label = "all" if corpus_id == GLOBAL else corpus_id
        if not force and self.is_up_to_date(stage, corpus_id):
            self.echo(f"[{label}] {stage}: up to date")
            return self.store.read_meta(stage, corpus_id)
        ctx = StageContext(self.store, stage, corpus_id)
        files, summary = getattr(self, f"_stage_{stage}")(ctx)
        meta = self.store.write(stage, corpus_id, files, upstream, params_hash)
        self.echo(f"[{label}] {stage}: {summary}")
        return meta

    def run_all(self, corpus_id: str | None = None, force: bool = False) -> list[StageArtifact]:
        out = []
        for stage in STAGES:
            out.extend(self.run_stage(stage, None if stage == "report" else corpus_id, force))
        return out

    # --- stages ---------------------------------------------------------------

    def _stage_ingest(self, ctx: StageContext):
        spec = self.config.corpus(ctx.corpus_id)
        if self.config.backends["patents"] == "live":
            source = LiveSource(self.transport("ops"),
                                OpsAdapter(self.config.endpoints["ops"], self._ops_token()),
                                self.config.workers)
        else:
            source = self.config.patent_fixtures[ctx.corpus_id]
        records = fetch_patents(spec, source, strict=self.config.strict)
        missing = sum(r.abstract_missing for r in records)
        return ({"patents.jsonl": write_records(records)},
                f"{len(records)} patents out ({missing} without abstract)")

    def _stage_normalize(self, ctx: StageContext):
        names = [(raw, rec.publication_number) for rec in ctx.patents() for raw in rec.inventors_raw]
        clusters = cluster_inventors(names, self.config.name_threshold, workers=self.config.workers)
        return ({"clusters.jsonl": _jsonl(c.to_json() for c in clusters)},
                f"{len(names)} inventor names in -> {len(clusters)} inventors out")

    def _stage_homonyms(self, ctx: StageContext):
        clusters = ctx.clusters()
        source = self._publication_source()
        sets = self._map(lambda c: fetch_publications(c, source, self.config.result_cap), clusters)
        n = sum(s.has_homonyms for s in sets)
        return ({"homonyms.jsonl": _jsonl(s.to_json() for s in sets)},
                f"{len(clusters)} inventors in -> {n} with homonymous authors out")

    def _stage_classify(self, ctx: StageContext):
        pubs = {}
        for hset in ctx.homonym_sets():
            for pub in hset.publications:
                pubs.setdefault(pub.pub_id, pub)
        todo = [pubs[k] for k in sorted(pubs) if pubs[k].has_abstract]
        backend = self._classifier()
        results = self._map(
            lambda p: classify_text(p.abstract, backend, self.config.granularity,
                                    text_ref=p.pub_id, cap_bytes=self.config.text_cap_bytes),
            todo,
        )
        return ({"classifications.jsonl": _jsonl(c.to_json() for c in results)},
                f"{len(pubs)} publications in ({len(pubs) - len(todo)} without abstract) "
                f"-> {len(results)} classifications out")

    def _stage_match(self, ctx: StageContext):
        clusters = ctx.clusters()
        decisions = match_corpus(
            ctx.patents(), clusters, ctx.homonym_sets(),
            {c.text_ref: c for c in ctx.classifications()},
            self.config.score_threshold, self.config.prefix_len,
        )
        candidates = aggregate_candidates(decisions, {c.cluster_id: c.canonical for c in clusters})
        return ({"decisions.jsonl": _jsonl(d.to_json() for d in decisions),
                 "candidates.jsonl": _jsonl(c.to_json() for c in candidates)},
                f"{len(decisions)} decisions ({sum(d.matched for d in decisions)} matched) "
                f"-> {len(candidates)} candidates out")

    def _stage_geocode(self, ctx: StageContext):
        candidates = ctx.candidates()
        geocoder = self._geocoder()
        affiliations = {}
        for hset in ctx.homonym_sets():
            for pub in hset.publications:
                affiliations.setdefault(pub.pub_id, pub.affiliation)

        def locate(cand: AuthorInventorCandidate) -> AuthorInventorCandidate:
            if geocoder is None:
                return cand
            for pub_id in cand.matched_publications:
                point = geocode_affiliation(affiliations.get(pub_id), geocoder,
                                            self.config.geo_min_confidence)
                if point is not None:
                    return replace(cand, geo=point)
            return cand

        located = self._map(locate, candidates)
        n = sum(c.geo is not None for c in located)
        return ({"candidates.geo.jsonl": _jsonl(c.to_json() for c in located)},
                f"{len(candidates)} candidates in -> {n} geocoded")

    def _stage_sample(self, ctx: StageContext):
        candidates = ctx.geo_candidates()
        if candidates:
            sample = draw_sample(candidates, self.config.sampling, corpus_id=ctx.corpus_id)
        else:
            sample = QualificationSample(ctx.corpus_id, (), self.config.sampling, {}, 0)
        blob = json.dumps(sample.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        return ({"sample.json": blob.encode("utf-8")},
                f"{len(candidates)} candidates in -> {sample.size} sampled "
                f"(seed {sample.params.seed})")

    def _stage_report(self, ctx: StageContext):
        stats, samples = [], {}
        for spec in self.config.corpora:
            cid = spec.corpus_id
            stats.append(compute_corpus_stats(CorpusArtifacts(
                cid,
                patents=ctx.patents(cid),
                clusters=ctx.clusters(cid),
                homonym_sets=ctx.homonym_sets(cid),
                candidates=ctx.geo_candidates(cid),
            )))
            samples[cid] = ctx.sample(cid)
        report = build_report(stats, samples, self.config.score_threshold,
                              self.config.sampling.z, self.config.sampling.p)
        return ({"report.txt": report.to_text().encode("utf-8"),
                 "report.json": report.to_structured().encode("utf-8")},
                f"{len(stats)} corpora -> {report.totals.candidates} candidates, "
                f"{report.totals.sample_size} sampled")

    # --- verdicts -------------------------------------------------------------

    @contextmanager
    def _sample_lock(self, corpus_id: str):
        lock_path = self.store.directory(corpus_id) / ".sample.lock"
        lock_path.parent.mkdir(parents=True, exist_ok=True)
        with open(lock_path, "w") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def record_verdict(self, corpus_id: str, cluster_id: str, verdict: str) -> QualificationSample:
        corpus_id = self.config.corpus(corpus_id).corpus_id
        with self._sample_lock(corpus_id):
            meta = self.store.verify("sample", corpus_id)
            path = self.store.path("sample", corpus_id, "sample.json")
            sample = QualificationSample.from_json(json.loads(path.read_text(encoding="utf-8")))
            sample = record_verdict(sample, cluster_id, verdict)
            blob = json.dumps(sample.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
            atomic_write_bytes(path, blob.encode("utf-8"))
            self.store._write_meta("sample", corpus_id, meta.upstream, meta.params_hash)
        self.echo(f"[{corpus_id}] verdict: {cluster_id} -> {sample.verdicts[cluster_id].value}")
        return sample

