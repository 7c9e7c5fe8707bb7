"""Headline retrieval with a snapshot-date cutoff for news-aware forecasts."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import time
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

__all__ = [
    "DEFAULT_HN_ENDPOINT",
    "DEFAULT_MAX_RESULTS",
    "DEFAULT_NYT_ENDPOINT",
    "CachedNewsClient",
    "HackerNewsClient",
    "Headline",
    "MissingApiKey",
    "NYTClient",
    "NYT_API_KEY_ENV",
    "NetworkError",
    "NewsClient",
    "NewsError",
    "QueryWindow",
    "ReplayMiss",
    "Source",
    "UpstreamError",
    "format_headlines",
    "parse_headlines",
    "query_hackernews",
    "query_nyt",
]

DEFAULT_HN_ENDPOINT = "https://hn.algolia.com/api/v1/search_by_date"
DEFAULT_NYT_ENDPOINT = "https://api.nytimes.com/svc/search/v2/articlesearch.json"
NYT_API_KEY_ENV = "FORESIGHT_NYT_API_KEY"
DEFAULT_MAX_RESULTS = 25
DEFAULT_TIMEOUT = 10.0

# NYT article search returns at most this many documents per page.
_NYT_PAGE_SIZE = 10
_NYT_MAX_PAGES = 100


class NewsError(RuntimeError):
    """Base class for headline retrieval failures."""


class NetworkError(NewsError):
    """Raised when a headline service cannot be reached."""


class UpstreamError(NewsError):
    """Raised when a headline service answers with an error."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"news service returned {status}: {body}")


class MissingApiKey(NewsError):
    """Raised when a client requiring an API key is built without one."""


class ReplayMiss(NewsError):
    """Raised when a replay-only news cache has no entry for a query."""

    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no cached headlines for query {digest}")


class Source(Enum):
    HACKERNEWS = "hackernews"
    NYT = "nyt"


@dataclass(frozen=True)
class Headline:
    """One dated headline from a single source."""

    title: str
    date: date
    source: Source

    def __post_init__(self):
        if not self.title:
            raise ValueError("headline title must be non-empty")


@dataclass(frozen=True)
class QueryWindow:
    """Search terms plus the latest publication date allowed in results."""

    terms: tuple[str, ...]
    until: date
    max_results: int = DEFAULT_MAX_RESULTS

    def __post_init__(self):
        if not self.terms or any(not term.strip() for term in self.terms):
            raise ValueError("query terms must be non-empty")
        if self.max_results <= 0:
            raise ValueError("max_results must be positive")

    @property
    def query(self) -> str:
        return " ".join(self.terms)


class NewsClient(Protocol):
    source: Source

    def search(self, window: QueryWindow) -> tuple[Headline, ...]: ...


def _parse_date(value: str) -> date:
    # Timestamps vary by service; only the calendar date matters here.
    return date.fromisoformat(value[:10])


def _get_json(
    session: requests.Session,
    url: str,
    params: dict,
    *,
    timeout: float,
    max_retries: int,
    sleep: Callable[[float], None],
):
    last: NewsError | None = None
    for attempt in range(max_retries + 1):
        try:
            response = session.get(url, params=params, timeout=timeout)
        except requests.RequestException as exc:
            last = NetworkError(f"request to {url} failed: {exc}")
        else:
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    raise UpstreamError(response.status_code, f"invalid json: {exc}") from None
            body = response.text[:200]
            if response.status_code == 429 or response.status_code >= 500:
                last = UpstreamError(response.status_code, body)
            else:
                raise UpstreamError(response.status_code, body)
        if attempt < max_retries:
            sleep(0.5 * (2**attempt))
    assert last is not None
    raise last


class HackerNewsClient:
    """Story search against the Hacker News Algolia API."""

    source = Source.HACKERNEWS

    def __init__(
        self,
        endpoint: str = DEFAULT_HN_ENDPOINT,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        max_retries: int = 2,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_retries = max_retries
        self.session = session or requests.Session()
        self._sleep = sleep

    def search(self, window: QueryWindow) -> tuple[Headline, ...]:
        cutoff = int(
            datetime(
                window.until.year,
                window.until.month,
                window.until.day,
                23,
                59,
                59,
                tzinfo=timezone.utc,
            ).timestamp()
        )
        params = {
            "query": window.query,
            "tags": "story",
            "hitsPerPage": str(window.max_results),
            "numericFilters": f"created_at_i<={cutoff}",
        }
        payload = _get_json(
            self.session,
            self.endpoint,
            params,
            timeout=self.timeout,
            max_retries=self.max_retries,
            sleep=self._sleep,
        )
        headlines = []
        for hit in payload.get("hits", []):
            title = hit.get("title") or hit.get("story_title")
            created = hit.get("created_at")
            if not title or not created:
                continue
            try:
                when = _parse_date(created)
            except ValueError:
                continue
            headlines.append(Headline(title=title, date=when, source=Source.HACKERNEWS))
        return tuple(headlines)


class NYTClient:
    """Article search against the New York Times archive."""

    source = Source.NYT

    def __init__(
        self,
        api_key: str,
        endpoint: str = DEFAULT_NYT_ENDPOINT,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        max_retries: int = 2,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise MissingApiKey(f"an API key is required; set {NYT_API_KEY_ENV}")
        self.api_key = api_key
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_retries = max_retries
        self.session = session or requests.Session()
        self._sleep = sleep

    def search(self, window: QueryWindow) -> tuple[Headline, ...]:
        headlines: list[Headline] = []
        page = 0
        while len(headlines) < window.max_results and page < _NYT_MAX_PAGES:
            params = {
                "q": window.query,
                "end_date": window.until.strftime("%Y%m%d"),
                "api-key": self.api_key,
                "page": str(page),
            }
            payload = _get_json(
                self.session,
                self.endpoint,
                params,
                timeout=self.timeout,
                max_retries=self.max_retries,
                sleep=self._sleep,
            )
            docs = payload.get("response", {}).get("docs", [])
            if not docs:
                break
            for doc in docs:
                title = doc.get("headline", {}).get("main")
                published = doc.get("pub_date")
                if not title or not published:
                    continue
                try:
                    when = _parse_date(published)
                except ValueError:
                    continue
                headlines.append(Headline(title=title, date=when, source=Source.NYT))
            if len(docs) < _NYT_PAGE_SIZE:
                break
            page += 1
        return tuple(headlines)


def _normalize(headlines: Sequence[Headline], window: QueryWindow) -> tuple[Headline, ...]:
    # Sole cutoff guard: nothing published after the window may survive,
    # whatever the service returned.
    kept = [headline for headline in headlines if headline.date <= window.until]
    kept.sort(key=lambda headline: headline.date, reverse=True)
    seen = set()
    unique = []
    for headline in kept:
        key = (headline.title, headline.date)
        if key in seen:
            continue
        seen.add(key)
        unique.append(headline)
    return tuple(unique[: window.max_results])


def query_hackernews(client: NewsClient, window: QueryWindow) -> tuple[Headline, ...]:
    """Search plus cutoff filtering, deduplication, and newest-first ordering."""
    return _normalize(client.search(window), window)


def query_nyt(client: NewsClient, window: QueryWindow) -> tuple[Headline, ...]:
    """Search plus cutoff filtering, deduplication, and newest-first ordering."""
    return _normalize(client.search(window), window)


class CachedNewsClient:
    """Content-addressed cache over another news client."""

    def __init__(self, cache_dir: str | Path, client: NewsClient, *, replay_only: bool = False):
        self.cache_dir = Path(cache_dir)
        self.client = client
        self.replay_only = replay_only
        self.hits = 0
        self.misses = 0

    @property
    def source(self) -> Source:
        return self.client.source

    def _digest(self, window: QueryWindow) -> str:
        canonical = json.dumps(
            {
                "max_results": window.max_results,
                "source": self.client.source.value,
                "terms": list(window.terms),
                "until": window.until.isoformat(),
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def _path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / f"{digest}.json"

    def search(self, window: QueryWindow) -> tuple[Headline, ...]:
        digest = self._digest(window)
        path = self._path(digest)
        if path.exists():
            payload = json.loads(path.read_text(encoding="utf-8"))
            self.hits += 1
            return tuple(
                Headline(
                    title=item["title"],
                    date=date.fromisoformat(item["date"]),
                    source=Source(item["source"]),
                )
                for item in payload["headlines"]
            )
        if self.replay_only:
            raise ReplayMiss(digest)
        self.misses += 1
        headlines = self.client.search(window)
        self._store(path, digest, window, headlines)
        return headlines

    def _store(
        self,
        path: Path,
        digest: str,
        window: QueryWindow,
        headlines: tuple[Headline, ...],
    ) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "digest": digest,
            "query": {
                "source": self.client.source.value,
                "terms": list(window.terms),
                "until": window.until.isoformat(),
                "max_results": window.max_results,
            },
            "headlines": [
                {
                    "title": headline.title,
                    "date": headline.date.isoformat(),
                    "source": headline.source.value,
                }
                for headline in headlines
            ],
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(payload, handle, indent=2, sort_keys=True)
                handle.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


_HEADLINE_LINE = re.compile(r"^Headline\s+\d+\s+--\s+(\d{4}-\d{2}-\d{2}):\s*(.+)$")


def format_headlines(headlines: Sequence[Headline]) -> str:
    """Render headlines one per line as 'Headline N -- date: title'."""
    return "\n".join(
        f"Headline {index} -- {headline.date.isoformat()}: {headline.title}"
        for index, headline in enumerate(headlines, start=1)
    )


def parse_headlines(text: str, source: Source) -> tuple[Headline, ...]:
    """Parse lines produced by format_headlines; other lines are skipped."""
    headlines = []
    for line in text.splitlines():
        match = _HEADLINE_LINE.match(line.strip())
        if match is None:
            continue
        try:
            when = date.fromisoformat(match.group(1))
        except ValueError:
            continue
        headlines.append(Headline(title=match.group(2), date=when, source=source))
    return tuple(headlines)
