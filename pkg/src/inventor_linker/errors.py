"""Exception hierarchy shared by every pipeline stage.

Each exception carries the CLI exit code it maps to, so ``cli.main`` can
translate failures without a lookup table.
"""

from __future__ import annotations


class LinkerError(Exception):
    exit_code = 1


class ValidationError(LinkerError):
    exit_code = 2


class UpstreamError(LinkerError):
    exit_code = 3


class MissingArtifactError(LinkerError):
    exit_code = 4


# corpus-ingest


class MalformedQuery(ValidationError):
    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"malformed query at position {position}: {reason}")


class InvalidCorpusSpec(ValidationError):
    pass


class InvalidIpcSymbol(ValidationError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class FixtureNotFound(MissingArtifactError):
    pass


class RecordParseError(ValidationError):
    def __init__(self, record_index: int, reason: str):
        self.record_index = record_index
        self.reason = reason
        super().__init__(f"record {record_index}: {reason}")


class TransportError(UpstreamError):
    """Raised after the bounded retry budget is exhausted."""


class CacheCorrupt(UpstreamError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"cache entry {key} does not match its stored digest")


# ipc-classify


class EmptyText(ValidationError):
    pass


class LexiconMissing(ValidationError):
    pass


class LexiconParseError(ValidationError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"lexicon line {line}: {reason}")


# match-engine / pipeline


class MissingStageArtifact(MissingArtifactError):
    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"missing artifact for stage {stage!r}")


class UpstreamMissing(MissingArtifactError):
    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"upstream stage {stage!r} has not been run")


class StaleUpstream(UpstreamError):
    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"artifact of stage {stage!r} does not match its recorded hash")


class ConfigError(ValidationError):
    pass


# qualify-report


class InvalidParams(ValidationError):
    pass


class EmptyCandidates(ValidationError):
    pass


class UnknownClusterId(ValidationError):
    def __init__(self, cluster_id: str):
        self.cluster_id = cluster_id
        super().__init__(f"cluster {cluster_id!r} is not part of the sample")


class InvalidVerdict(ValidationError):
    pass
