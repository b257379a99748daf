"""HTTP access shared by the live adapters: rate limiting, retries, caching."""

from __future__ import annotations

import logging
import random
import threading
import time
from typing import Any, Mapping

import requests

from .cache import ResponseCache, request_key
from .errors import TransportError

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class RateLimiter:
    """Spaces calls at least ``1/rate`` seconds apart across threads."""

    def __init__(self, rate: float = 3.0, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate and rate > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            slot = max(now, self._next)
            self._next = slot + self.interval
        delay = slot - now
        if delay > 0:
            self._sleep(delay)


class HttpTransport:
    """GET/POST with bounded retries, exponential jittered backoff and a
    response cache keyed by ``(method, url, params, body)``.

    With ``offline=True`` only the cache is consulted and a miss raises
    :class:`TransportError`, which is how warm-cache replays run.
    """

    def __init__(
        self,
        cache: ResponseCache | None = None,
        rate_limiter: RateLimiter | None = None,
        max_retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 30.0,
        offline: bool = False,
        session: Any = None,
        headers: Mapping[str, str] | None = None,
        sleep=time.sleep,
    ):
        self.cache = cache
        self.rate_limiter = rate_limiter or RateLimiter(0)
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.offline = offline
        self.session = session if session is not None else requests.Session()
        self.headers = dict(headers or {})
        self._sleep = sleep
        self.calls = 0

    def request(
        self,
        method: str,
        url: str,
        params: Mapping[str, Any] | None = None,
        data: bytes | str | None = None,
        headers: Mapping[str, str] | None = None,
        use_cache: bool = True,
    ) -> bytes:
        if isinstance(data, str):
            data = data.encode("utf-8")
        key = request_key(
            method.upper(),
            url,
            sorted((params or {}).items()),
            data.decode("utf-8", "replace") if data else None,
        )
        if use_cache and self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        if self.offline:
            raise TransportError(f"offline mode and no cached response for {method} {url}")

        merged = {**self.headers, **(headers or {})}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                self._sleep(delay + random.uniform(0, delay / 2))
            self.rate_limiter.acquire()
            self.calls += 1
            try:
                resp = self.session.request(
                    method.upper(), url, params=params, data=data,
                    headers=merged, timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                log.warning("%s %s failed (attempt %d): %s", method, url, attempt + 1, exc)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {resp.status_code}")
                log.warning("%s %s returned %d (attempt %d)", method, url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"{method} {url} returned HTTP {resp.status_code}")
            body = resp.content
            if use_cache and self.cache is not None:
                self.cache.put(key, body)
            return body
        raise TransportError(
            f"{method} {url} failed after {self.max_retries + 1} attempts: {last_error}"
        )

    def get(self, url: str, params=None, **kw) -> bytes:
        return self.request("GET", url, params=params, **kw)

    def post(self, url: str, params=None, data=None, **kw) -> bytes:
        return self.request("POST", url, params=params, data=data, **kw)
