"""Completion backends behind one small interface.

Three implementations: a live HTTP backend speaking a chat/completions-style
JSON API, a deterministic scripted mock for offline runs, and a
content-addressed record/replay cache that wraps either.  Cache keys are the
SHA-256 of the backend id plus the canonicalized request, so any change to
prompt or sampling parameters is a distinct entry.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

__all__ = [
    "CompletionRequest",
    "CompletionResponse",
    "CacheKey",
    "CompletionBackend",
    "BackendError",
    "BackendUnavailable",
    "RateLimited",
    "ProviderError",
    "NoRuleMatched",
    "ReplayMiss",
    "CacheCorrupt",
    "complete",
    "cached_complete",
    "canonical_request",
    "cache_key",
    "MockRule",
    "MockBackend",
    "HttpBackend",
    "NullBackend",
    "CachedBackend",
    "TokenBucket",
    "DEFAULT_TEMPERATURE",
    "FINAL_SAMPLE_COUNT",
]

DEFAULT_TEMPERATURE = 0.01
FINAL_SAMPLE_COUNT = 8
DEFAULT_MAX_TOKENS = 1024

BASE_URL_ENV = "FORESIGHT_LLM_BASE_URL"
API_KEY_ENV = "FORESIGHT_LLM_API_KEY"


class BackendError(RuntimeError):
    """Base class for completion-backend failures."""


class BackendUnavailable(BackendError):
    """The provider endpoint could not be reached."""


class RateLimited(BackendError):
    def __init__(self, retry_after: float):
        super().__init__(f"rate limited; retry after {retry_after}s")
        self.retry_after = retry_after


class ProviderError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned status {status}: {body[:200]}")
        self.status = status
        self.body = body


class NoRuleMatched(BackendError):
    """The scripted mock has no rule covering a prompt."""

    def __init__(self, prompt: str):
        super().__init__(f"no mock rule matches prompt starting {prompt[:80]!r}")
        self.prompt = prompt


class ReplayMiss(BackendError):
    """Replay-only cache lookup found no recorded response."""

    def __init__(self, digest: str):
        super().__init__(f"no cached response for digest {digest}")
        self.digest = digest


class CacheCorrupt(BackendError):
    def __init__(self, path: str | Path):
        super().__init__(f"cache file unreadable: {path}")
        self.path = str(path)


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    n_samples: int = 1
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionResponse:
    texts: tuple[str, ...]
    backend_id: str
    cached: bool = False


@dataclass(frozen=True)
class CacheKey:
    digest: str

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[0-9a-f]{64}", self.digest):
            raise ValueError("digest must be 64 lowercase hex characters")


class CompletionBackend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def canonical_request(backend_id: str, request: CompletionRequest) -> str:
    """Stable JSON form hashed into the cache key.  Key order is fixed by
    sorting, so logically equal requests canonicalize identically."""
    payload = {
        "backend_id": backend_id,
        "max_tokens": request.max_tokens,
        "n_samples": request.n_samples,
        "prompt": request.prompt,
        "stop": None if request.stop is None else list(request.stop),
        "temperature": request.temperature,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def cache_key(backend_id: str, request: CompletionRequest) -> CacheKey:
    digest = hashlib.sha256(canonical_request(backend_id, request).encode("utf-8")).hexdigest()
    return CacheKey(digest)


def complete(backend: CompletionBackend, request: CompletionRequest) -> CompletionResponse:
    """Run a request against a backend, checking the sample-count contract."""
    response = backend.complete(request)
    if len(response.texts) != request.n_samples:
        raise BackendError(
            f"backend {response.backend_id!r} returned {len(response.texts)} texts "
            f"for n_samples={request.n_samples}"
        )
    return response


@dataclass(frozen=True)
class MockRule:
    """One scripted response.  ``match`` is "substring", "regex", or "any".

    ``response`` may be a sequence of texts; sample i receives entry
    ``i % len(response)``, which is how a single request can yield a spread of
    different sample texts.
    """

    match: str
    pattern: str | None
    response: str | tuple[str, ...]

    def __post_init__(self) -> None:
        if self.match not in ("substring", "regex", "any"):
            raise ValueError(f"unknown match kind {self.match!r}")
        if self.match == "any":
            if self.pattern is not None:
                raise ValueError("catch-all rules take no pattern")
        elif not self.pattern:
            raise ValueError(f"{self.match} rules need a pattern")
        if not isinstance(self.response, str) and len(self.response) == 0:
            raise ValueError("response list must be nonempty")

    def matches(self, prompt: str) -> bool:
        if self.match == "any":
            return True
        if self.match == "substring":
            return self.pattern in prompt  # type: ignore[operator]
        return re.search(self.pattern, prompt) is not None  # type: ignore[arg-type]

    def sample_texts(self, n: int) -> tuple[str, ...]:
        if isinstance(self.response, str):
            return (self.response,) * n
        return tuple(self.response[i % len(self.response)] for i in range(n))


class MockBackend:
    """Deterministic scripted backend: ordered rules, first match wins."""

    def __init__(self, rules: Sequence[MockRule], *, backend_id: str = "mock"):
        self.rules = tuple(rules)
        self.backend_id = backend_id
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, *, backend_id: str = "mock") -> "MockBackend":
        """Load rules from a JSON-lines script.

        Each line is ``{"match": ..., "pattern": ..., "response": ...}``;
        ``match`` defaults to "substring" when a pattern is given, else "any".
        """
        rules = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from None
            pattern = obj.get("pattern")
            match = obj.get("match", "substring" if pattern is not None else "any")
            response = obj["response"]
            if isinstance(response, list):
                response = tuple(response)
            try:
                rules.append(MockRule(match=match, pattern=pattern, response=response))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
        return cls(rules, backend_id=backend_id)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
        for rule in self.rules:
            if rule.matches(request.prompt):
                return CompletionResponse(
                    texts=rule.sample_texts(request.n_samples),
                    backend_id=self.backend_id,
                )
        raise NoRuleMatched(request.prompt)


class TokenBucket:
    """Blocking token bucket.  ``rate`` is tokens added per second."""

    def __init__(
        self,
        rate: float,
        burst: float = 1.0,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.burst = burst
        self._clock = clock
        self._sleep = sleep
        self._tokens = burst
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class NullBackend:
    """Backend that must never be called; pairs with a replay-only cache."""

    def __init__(self, backend_id: str):
        self.backend_id = backend_id
        self.calls = 0

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self.calls += 1
        raise BackendUnavailable("replay backend cannot issue live calls")


class HttpBackend:
    """Live backend over a chat/completions-style HTTP JSON endpoint.

    The provider is assumed to lack native multi-sample support, so an
    ``n_samples > 1`` request issues one HTTP call per sample (set
    ``supports_multi_sample=True`` to send a single call with ``n``).
    A token bucket paces calls; HTTP 429 honors Retry-After for up to
    ``max_retries`` attempts before surfacing ``RateLimited``.
    """

    def __init__(
        self,
        model: str,
        *,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 30.0,
        requests_per_second: float = 1.0,
        max_retries: int = 3,
        supports_multi_sample: bool = False,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise ValueError(f"no base URL: pass base_url or set {BASE_URL_ENV}")
        self.model = model
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_retries = max_retries
        self.supports_multi_sample = supports_multi_sample
        self.backend_id = f"http:{model}"
        self.calls = 0
        self._session = session or requests.Session()
        self._sleep = sleep
        self._bucket = TokenBucket(requests_per_second)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if self.supports_multi_sample:
            texts = self._call(request, request.n_samples)
        else:
            texts = []
            for _ in range(request.n_samples):
                texts.extend(self._call(request, 1))
        return CompletionResponse(texts=tuple(texts), backend_id=self.backend_id)

    def _call(self, request: CompletionRequest, n: int) -> list[str]:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "n": n,
        }
        if request.stop is not None:
            payload["stop"] = list(request.stop)
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        retry_after = 1.0
        for attempt in range(self.max_retries + 1):
            self._bucket.acquire()
            self.calls += 1
            try:
                resp = self._session.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise BackendUnavailable(str(exc)) from exc
            if resp.status_code == 429:
                retry_after = _retry_after_seconds(resp)
                if attempt < self.max_retries:
                    self._sleep(retry_after)
                    continue
                raise RateLimited(retry_after)
            if resp.status_code >= 400:
                raise ProviderError(resp.status_code, resp.text)
            try:
                choices = resp.json()["choices"]
                texts = [c["message"]["content"] for c in choices]
            except (ValueError, KeyError, TypeError):
                raise ProviderError(resp.status_code, f"unexpected response shape: {resp.text[:200]}")
            if len(texts) != n:
                raise ProviderError(resp.status_code, f"expected {n} choices, got {len(texts)}")
            return texts
        raise RateLimited(retry_after)


def _retry_after_seconds(resp: requests.Response) -> float:
    header = resp.headers.get("Retry-After")
    if header is not None:
        try:
            return max(0.0, float(header))
        except ValueError:
            pass
    return 1.0


class CachedBackend:
    """Content-addressed record/replay wrapper around another backend.

    Layout: ``<cache_dir>/<first 2 hex>/<digest>.json``, one file per key,
    written atomically (temp file + rename).  In replay-only mode a miss is an
    error and the inner backend is never called.
    """

    def __init__(self, cache_dir: str | Path, backend: CompletionBackend, *, replay_only: bool = False):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.backend = backend
        self.backend_id = backend.backend_id
        self.replay_only = replay_only
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        key = cache_key(self.backend.backend_id, request)
        path = self._path(key.digest)
        if path.exists():
            try:
                stored = json.loads(path.read_text(encoding="utf-8"))
                texts = tuple(stored["response"]["texts"])
                backend_id = stored["response"]["backend_id"]
            except (ValueError, KeyError, TypeError):
                raise CacheCorrupt(path) from None
            with self._lock:
                self.hits += 1
            return CompletionResponse(texts=texts, backend_id=backend_id, cached=True)

        if self.replay_only:
            raise ReplayMiss(key.digest)
        with self._lock:
            self.misses += 1
        response = complete(self.backend, request)
        self._store(path, key.digest, request, response)
        return response

    def _store(
        self, path: Path, digest: str, request: CompletionRequest, response: CompletionResponse
    ) -> None:
        record = {
            "digest": digest,
            "request": {
                "prompt": request.prompt,
                "temperature": request.temperature,
                "n_samples": request.n_samples,
                "max_tokens": request.max_tokens,
                "stop": None if request.stop is None else list(request.stop),
            },
            "response": {
                "texts": list(response.texts),
                "backend_id": response.backend_id,
            },
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, ensure_ascii=False)
        except BaseException:
            os.unlink(tmp)
            raise
        os.replace(tmp, path)


def cached_complete(
    cache_dir: str | Path,
    backend: CompletionBackend,
    request: CompletionRequest,
    *,
    replay_only: bool = False,
) -> CompletionResponse:
    """One-shot convenience over :class:`CachedBackend`."""
    return CachedBackend(cache_dir, backend, replay_only=replay_only).complete(request)
