"""Tests for headline retrieval, the date-cutoff guard, and the news cache."""

import random
from datetime import date, timedelta
from pathlib import Path

import pytest

from foresight.news import (
    CachedNewsClient,
    HackerNewsClient,
    Headline,
    MissingApiKey,
    NYTClient,
    NetworkError,
    NewsError,
    QueryWindow,
    ReplayMiss,
    Source,
    UpstreamError,
    format_headlines,
    parse_headlines,
    query_hackernews,
    query_nyt,
)
from stubserver import StubNewsServer, hn_hit, nyt_doc

UNTIL = date(2022, 8, 1)


def window(*terms, until=UNTIL, max_results=25):
    return QueryWindow(terms=terms or ("tesla",), until=until, max_results=max_results)


def test_query_window_joins_terms():
    assert window("tesla", "fsd").query == "tesla fsd"


def test_headline_guard_filters_sorts_dedups_truncates():
    client_output = [
        Headline("old", date(2022, 7, 1), Source.HACKERNEWS),
        Headline("dup", date(2022, 7, 10), Source.HACKERNEWS),
        Headline("dup", date(2022, 7, 10), Source.HACKERNEWS),
        Headline("future", date(2022, 8, 2), Source.HACKERNEWS),
        Headline("cutoff day", date(2022, 8, 1), Source.HACKERNEWS),
    ]

    class Scripted:
        source = Source.HACKERNEWS

        def search(self, w):
            return tuple(client_output)

    got = query_hackernews(Scripted(), window())
    assert [h.title for h in got] == ["cutoff day", "dup", "old"]
    assert all(h.date <= UNTIL for h in got)


def test_headline_guard_randomized_leak_check():
    rng = random.Random(1999)
    for _ in range(100):
        headlines = []
        for i in range(rng.randrange(0, 30)):
            day = UNTIL + timedelta(days=rng.randrange(-40, 40))
            headlines.append(Headline(f"story {i}", day, Source.NYT))
        rng.shuffle(headlines)
        limit = rng.randrange(1, 10)

        class Scripted:
            source = Source.NYT

            def search(self, w):
                return tuple(headlines)

        got = query_nyt(Scripted(), window(max_results=limit))
        assert len(got) <= limit
        assert all(h.date <= UNTIL for h in got)
        assert [h.date for h in got] == sorted((h.date for h in got), reverse=True)
        assert len({(h.title, h.date) for h in got}) == len(got)


def test_hackernews_client_query_shape():
    hits = [
        hn_hit("A regular story", "2022-07-20T10:00:00Z"),
        hn_hit(None, "2022-07-19T10:00:00Z"),  # comment-style hit, title elsewhere
    ]
    hits[1]["story_title"] = "A story title fallback"
    with StubNewsServer(hn_hits=hits) as server:
        client = HackerNewsClient(server.hn_endpoint)
        got = client.search(window("tesla", "fsd"))
        assert [h.title for h in got] == ["A regular story", "A story title fallback"]
        assert got[0].date == date(2022, 7, 20)
        assert all(h.source is Source.HACKERNEWS for h in got)
        params = server.params_for("/hn")[0]
        assert params["query"] == "tesla fsd"
        assert params["tags"] == "story"
        # numeric filter pins results at or before the end of the cutoff day
        assert params["numericFilters"] == "created_at_i<=1659398399"


def test_hackernews_client_retries_server_errors():
    with StubNewsServer(hn_hits=[hn_hit("t", "2022-07-01T00:00:00Z")]) as server:
        server.hn_fail_times = 2
        client = HackerNewsClient(server.hn_endpoint, sleep=lambda s: None)
        got = client.search(window())
        assert len(got) == 1
        assert server.count("/hn") == 3


def test_hackernews_client_gives_up_after_retries():
    with StubNewsServer() as server:
        server.hn_fail_times = 5
        client = HackerNewsClient(server.hn_endpoint, max_retries=1, sleep=lambda s: None)
        with pytest.raises(UpstreamError) as info:
            client.search(window())
        assert info.value.status == 500
        assert server.count("/hn") == 2


def test_hackernews_client_client_errors_not_retried():
    with StubNewsServer() as server:
        server.hn_fail_times = 1
        server.fail_status = 403
        client = HackerNewsClient(server.hn_endpoint, sleep=lambda s: None)
        with pytest.raises(UpstreamError):
            client.search(window())
        assert server.count("/hn") == 1


def test_hackernews_client_network_error():
    client = HackerNewsClient("http://127.0.0.1:9/hn", timeout=0.2, max_retries=0)
    with pytest.raises(NetworkError):
        client.search(window())


def test_nyt_client_requires_key():
    with pytest.raises(MissingApiKey):
        NYTClient("")


def test_nyt_client_query_shape_and_pagination():
    docs = [nyt_doc(f"Article {i:02d}", f"2022-07-{(i % 28) + 1:02d}T00:00:00+0000") for i in range(23)]
    with StubNewsServer(nyt_docs=docs) as server:
        client = NYTClient("test-key", server.nyt_endpoint)
        got = client.search(window("inflation", max_results=23))
        assert len(got) == 23
        assert got[0].source is Source.NYT
        pages = [int(p["page"]) for p in server.params_for("/nyt")]
        assert pages == [0, 1, 2]
        first = server.params_for("/nyt")[0]
        assert first["q"] == "inflation"
        assert first["end_date"] == "20220801"
        assert first["api-key"] == "test-key"


def test_nyt_client_stops_at_max_results():
    docs = [nyt_doc(f"Article {i}", "2022-07-01T00:00:00+0000") for i in range(30)]
    with StubNewsServer(nyt_docs=docs) as server:
        client = NYTClient("test-key", server.nyt_endpoint)
        got = client.search(window(max_results=10))
        assert len(got) == 10
        assert server.count("/nyt") == 1


def test_nyt_client_stops_on_short_page():
    docs = [nyt_doc(f"Article {i}", "2022-07-01T00:00:00+0000") for i in range(4)]
    with StubNewsServer(nyt_docs=docs) as server:
        client = NYTClient("test-key", server.nyt_endpoint)
        got = client.search(window(max_results=25))
        assert len(got) == 4
        assert server.count("/nyt") == 1


def test_cached_news_client_records_then_replays(tmp_path):
    with StubNewsServer(hn_hits=[hn_hit("cached story", "2022-07-01T00:00:00Z")]) as server:
        live = CachedNewsClient(tmp_path, HackerNewsClient(server.hn_endpoint))
        first = live.search(window())
        second = live.search(window())
        assert first == second
        assert server.count("/hn") == 1
        assert (live.hits, live.misses) == (1, 1)

    # replay needs no server at all
    class Exploding:
        source = Source.HACKERNEWS

        def search(self, w):
            raise AssertionError("replay must not call through")

    replay = CachedNewsClient(tmp_path, Exploding(), replay_only=True)
    assert [h.title for h in replay.search(window())] == ["cached story"]
    with pytest.raises(ReplayMiss):
        replay.search(window("different", "terms"))


def test_cached_news_client_distinguishes_windows(tmp_path):
    with StubNewsServer(hn_hits=[hn_hit("story", "2022-07-01T00:00:00Z")]) as server:
        cached = CachedNewsClient(tmp_path, HackerNewsClient(server.hn_endpoint))
        cached.search(window("a"))
        cached.search(window("a", until=date(2022, 8, 2)))
        cached.search(window("a", max_results=5))
        assert server.count("/hn") == 3
        assert cached.misses == 3


def test_format_and_parse_headlines_round_trip():
    headlines = (
        Headline("Tesla expands FSD beta", date(2022, 7, 20), Source.HACKERNEWS),
        Headline("Progress, but: no approval -- yet", date(2022, 7, 18), Source.HACKERNEWS),
    )
    text = format_headlines(headlines)
    assert text == (
        "Headline 1 -- 2022-07-20: Tesla expands FSD beta\n"
        "Headline 2 -- 2022-07-18: Progress, but: no approval -- yet"
    )
    assert parse_headlines(text, Source.HACKERNEWS) == headlines


def test_parse_headlines_ignores_noise_lines():
    text = "Preamble chatter.\nHeadline 1 -- 2022-07-20: Real story\nTrailing note."
    got = parse_headlines(text, Source.NYT)
    assert [h.title for h in got] == ["Real story"]


def test_format_headlines_empty():
    assert format_headlines(()) == ""
    assert parse_headlines("", Source.NYT) == ()
