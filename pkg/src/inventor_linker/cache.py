"""Content-addressed response cache with atomic writes."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

from .errors import CacheCorrupt

log = logging.getLogger(__name__)


def request_key(*parts) -> str:
    """Hash an arbitrary tuple of JSON-serialisable request parts."""
    blob = json.dumps(parts, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


class ResponseCache:
    """Stores response bodies under a request hash.

    Each entry is ``<sha256 of body>\\n<body>``; a digest mismatch on read
    evicts the entry.
    """

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / key

    def get(self, key: str, strict: bool = False) -> bytes | None:
        path = self._path(key)
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        digest, sep, body = raw.partition(b"\n")
        if not sep or hashlib.sha256(body).hexdigest().encode() != digest:
            log.warning("evicting corrupt cache entry %s", key)
            try:
                path.unlink()
            except FileNotFoundError:
                pass
            if strict:
                raise CacheCorrupt(key)
            return None
        return body

    def put(self, key: str, body: bytes) -> None:
        digest = hashlib.sha256(body).hexdigest().encode()
        atomic_write_bytes(self._path(key), digest + b"\n" + body)

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None


def cache_get(cache: ResponseCache, key: str) -> bytes | None:
    return cache.get(key)


def cache_put(cache: ResponseCache, key: str, body: bytes) -> None:
    cache.put(key, body)
