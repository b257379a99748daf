"""Pipeline configuration (INI file).

Example::

    [pipeline]
    workdir = out
    cache_dir = out/cache
    workers = 4
    offline = false
    strict = false
    max_retries = 3

    [thresholds]
    name_similarity = 90
    ipccat_score = 800
    ipc_prefix_len = 4

    [classifier]
    top_k = 5
    granularity = subclass
    text_cap_bytes = 8192

    [homonyms]
    result_cap = 200

    [geocode]
    min_confidence = 0.3

    [sampling]
    mode = fraction
    fraction = 0.10
    z = 1.96
    p = 0.5
    e_target = 0.05
    seed = 0

    [backends]
    patents = fixture          ; fixture | live
    publications = fixture     ; fixture | live
    classifier = stub          ; stub | remote
    geocoder = fixture         ; fixture | live | none

    [fixtures]
    publications = data/publications.json
    lexicon = data/lexicon.txt
    geocode = data/geocode.json

    [endpoints]
    ops = https://ops.epo.org/3.2/rest-services
    ops_auth = https://ops.epo.org/3.2/auth/accesstoken
    pubmed = https://eutils.ncbi.nlm.nih.gov/entrez/eutils
    ipccat = https://ipccat.wipo.int/EN/query
    geocoder = https://nominatim.openstreetmap.org

    [rate_limits]
    ops = 3
    pubmed = 3

    [corpus:Univ]
    query = (pa=univ* or pa=institut or pa=laboratoire) AND (ic=A61) AND (pd within "2014, 2016") AND pr=FR
    description = ...
    period = 2014-2016
    fixture = data/univ.jsonl

Relative paths resolve against the config file's directory.  Credentials
come only from the environment: ``LINKER_OPS_KEY``, ``LINKER_OPS_SECRET``,
``LINKER_PUBMED_API_KEY``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusSpec, corpus_specs_from_parser
from .errors import ConfigError, FixtureNotFound
from .qualify import SamplingParams

ENDPOINT_DEFAULTS = {
    "ops": "https://ops.epo.org/3.2/rest-services",
    "ops_auth": "https://ops.epo.org/3.2/auth/accesstoken",
    "pubmed": "https://eutils.ncbi.nlm.nih.gov/entrez/eutils",
    "ipccat": "https://ipccat.wipo.int/EN/query",
    "geocoder": "https://nominatim.openstreetmap.org",
}

BACKEND_CHOICES = {
    "patents": ("fixture", "live"),
    "publications": ("fixture", "live"),
    "classifier": ("stub", "remote"),
    "geocoder": ("fixture", "live", "none"),
}


@dataclass
class PipelineConfig:
    corpora: list[CorpusSpec]
    workdir: Path
    cache_dir: Path
    patent_fixtures: dict[str, Path] = field(default_factory=dict)
    publications_fixture: Path | None = None
    lexicon: Path | None = None
    geocode_fixture: Path | None = None
    backends: dict[str, str] = field(default_factory=lambda: {
        "patents": "fixture", "publications": "fixture",
        "classifier": "stub", "geocoder": "none",
    })
    endpoints: dict[str, str] = field(default_factory=lambda: dict(ENDPOINT_DEFAULTS))
    rate_limits: dict[str, float] = field(default_factory=dict)
    credentials: dict[str, str] = field(default_factory=dict)
    workers: int = 1
    offline: bool = False
    strict: bool = False
    max_retries: int = 3
    name_threshold: int = 90
    score_threshold: int = 800
    prefix_len: int = 4
    top_k: int = 5
    granularity: str = "subclass"
    text_cap_bytes: int = 8192
    result_cap: int = 200
    geo_min_confidence: float = 0.0
    sampling: SamplingParams = field(default_factory=SamplingParams)

    def corpus(self, corpus_id: str) -> CorpusSpec:
        for spec in self.corpora:
            if spec.corpus_id == corpus_id:
                return spec
        raise ConfigError(f"unknown corpus {corpus_id!r}")

    def rate_limit(self, endpoint: str) -> float:
        return self.rate_limits.get(endpoint, 3.0)

    def validate(self) -> None:
        for name, value in self.backends.items():
            if name not in BACKEND_CHOICES:
                raise ConfigError(f"unknown backend {name!r}")
            if value not in BACKEND_CHOICES[name]:
                raise ConfigError(f"backend {name} must be one of {BACKEND_CHOICES[name]}, got {value!r}")
        if not 0 <= self.name_threshold <= 100:
            raise ConfigError("name similarity threshold must lie in [0, 100]")
        if self.score_threshold < 0:
            raise ConfigError("classifier score threshold must be non-negative")
        if not 1 <= self.prefix_len <= 8:
            raise ConfigError("IPC prefix length must lie in [1, 8]")
        if self.granularity not in ("subclass", "group"):
            raise ConfigError("granularity must be subclass or group")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.corpora:
            raise ConfigError("no [corpus:<id>] section in config")
        if self.backends["patents"] == "fixture":
            for spec in self.corpora:
                path = self.patent_fixtures.get(spec.corpus_id)
                if path is None or not path.is_file():
                    raise FixtureNotFound(f"patent fixture for corpus {spec.corpus_id} missing: {path}")
        needed = [("publications", "fixture", self.publications_fixture),
                  ("classifier", "stub", self.lexicon),
                  ("geocoder", "fixture", self.geocode_fixture)]
        for backend, mode, path in needed:
            if self.backends[backend] == mode and (path is None or not path.is_file()):
                raise FixtureNotFound(f"{backend} backend is {mode} but file is missing: {path}")


def _bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def load_config(path: str | os.PathLike, env=None) -> PipelineConfig:
    env = os.environ if env is None else env
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"config file {path} not found")
    base = path.resolve().parent

    def p(value: str | None) -> Path | None:
        if not value:
            return None
        q = Path(value).expanduser()
        return q if q.is_absolute() else base / q

    try:
        pipe = parser["pipeline"] if parser.has_section("pipeline") else {}
        workdir = p(pipe.get("workdir", "linker-out"))
        cfg = PipelineConfig(
            corpora=corpus_specs_from_parser(parser),
            workdir=workdir,
            cache_dir=p(pipe.get("cache_dir")) or workdir / "cache",
            workers=int(pipe.get("workers", 1)),
            offline=_bool(pipe.get("offline", "false")),
            strict=_bool(pipe.get("strict", "false")),
            max_retries=int(pipe.get("max_retries", 3)),
        )
        for section in parser.sections():
            if section.startswith("corpus:") and parser[section].get("fixture"):
                cfg.patent_fixtures[section.split(":", 1)[1].strip()] = p(parser[section]["fixture"])
        if parser.has_section("thresholds"):
            t = parser["thresholds"]
            cfg.name_threshold = t.getint("name_similarity", cfg.name_threshold)
            cfg.score_threshold = t.getint("ipccat_score", cfg.score_threshold)
            cfg.prefix_len = t.getint("ipc_prefix_len", cfg.prefix_len)
        if parser.has_section("classifier"):
            c = parser["classifier"]
            cfg.top_k = c.getint("top_k", cfg.top_k)
            cfg.granularity = c.get("granularity", cfg.granularity)
            cfg.text_cap_bytes = c.getint("text_cap_bytes", cfg.text_cap_bytes)
        if parser.has_section("homonyms"):
            cfg.result_cap = parser["homonyms"].getint("result_cap", cfg.result_cap)
        if parser.has_section("geocode"):
            cfg.geo_min_confidence = parser["geocode"].getfloat("min_confidence", cfg.geo_min_confidence)
        if parser.has_section("sampling"):
            s = parser["sampling"]
            cfg.sampling = SamplingParams(
                mode=s.get("mode", "fraction"),
                fraction=s.getfloat("fraction", 0.10),
                z=s.getfloat("z", 1.96),
                p=s.getfloat("p", 0.5),
                e_target=s.getfloat("e_target", 0.05),
                seed=s.getint("seed", 0),
            )
        if parser.has_section("backends"):
            cfg.backends.update({k: v.strip().lower() for k, v in parser["backends"].items()})
        if parser.has_section("fixtures"):
            f = parser["fixtures"]
            cfg.publications_fixture = p(f.get("publications"))
            cfg.lexicon = p(f.get("lexicon"))
            cfg.geocode_fixture = p(f.get("geocode"))
        if parser.has_section("endpoints"):
            cfg.endpoints.update(parser["endpoints"])
        if parser.has_section("rate_limits"):
            cfg.rate_limits = {k: float(v) for k, v in parser["rate_limits"].items()}
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for key, var in (("ops_key", "LINKER_OPS_KEY"), ("ops_secret", "LINKER_OPS_SECRET"),
                     ("pubmed_api_key", "LINKER_PUBMED_API_KEY")):
        if env.get(var):
            cfg.credentials[key] = env[var]
    return cfg
