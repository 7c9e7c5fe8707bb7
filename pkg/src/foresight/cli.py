"""Command line interface for running, scoring, and analyzing forecasts."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from pathlib import Path

from .events import DatasetError, UnresolvedEvent, active_events, load_dataset
from .llm import (
    API_KEY_ENV,
    BASE_URL_ENV,
    CachedBackend,
    CompletionBackend,
    HttpBackend,
    MockBackend,
    NullBackend,
)
from .metrics import (
    EmptyClass,
    EmptyInput,
    MismatchedEventSets,
    MissingSnapshot,
    UnknownEvent,
    coherence_sum,
    load_forecasts,
    market_forecast_records,
    prediction_shift,
    render_report,
    report_to_dict,
    round4,
    save_forecasts,
    score,
)
from .news import (
    DEFAULT_HN_ENDPOINT,
    DEFAULT_NYT_ENDPOINT,
    CachedNewsClient,
    HackerNewsClient,
    MissingApiKey,
    NYTClient,
    NYT_API_KEY_ENV,
    NewsError,
    Source,
)
from .strategies import (
    STRATEGY_IDS,
    ChainError,
    InvalidParam,
    PredictionWindowError,
    UnknownStrategy,
    run_strategy,
    save_partial_trace,
    save_trace,
    trace_to_forecast,
)

__all__ = ["ConfigError", "EXIT_CONFIG", "EXIT_OK", "EXIT_RUN_FAILURES", "build_parser", "main"]

EXIT_OK = 0
EXIT_RUN_FAILURES = 1
EXIT_CONFIG = 2

_KNOWN_CONFIG = frozenset(
    {
        "model",
        "replay_backend_id",
        "requests_per_second",
        "supports_multi_sample",
        "timeout",
        "max_retries",
    }
)

# Errors that mean the invocation or its inputs are wrong, not the run.
_INPUT_ERRORS = (
    DatasetError,
    UnresolvedEvent,
    EmptyClass,
    EmptyInput,
    MismatchedEventSets,
    MissingSnapshot,
    UnknownEvent,
    MissingApiKey,
    UnknownStrategy,
    InvalidParam,
)


class ConfigError(ValueError):
    """Raised for a bad flag, backend spec, or configuration value."""


class _UnconfiguredNewsClient:
    """Stands in for a live client that cannot be built; search always fails."""

    def __init__(self, source: Source, reason: str):
        self.source = source
        self.reason = reason

    def search(self, window):
        raise NewsError(self.reason)


def _parse_date(value: str, flag: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise ConfigError(f"{flag} expects YYYY-MM-DD, got {value!r}") from None


def _parse_config(items) -> dict[str, str]:
    config: dict[str, str] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"--config expects KEY=VALUE, got {item!r}")
        config[key] = value.strip()
    unknown = set(config) - _KNOWN_CONFIG
    if unknown:
        names = ", ".join(sorted(unknown))
        raise ConfigError(f"unknown --config keys: {names}")
    return config


def _config_float(config: dict[str, str], key: str, default: float) -> float:
    if key not in config:
        return default
    try:
        return float(config[key])
    except ValueError:
        raise ConfigError(f"--config {key} must be a number, got {config[key]!r}") from None


def _config_int(config: dict[str, str], key: str, default: int) -> int:
    if key not in config:
        return default
    try:
        return int(config[key])
    except ValueError:
        raise ConfigError(f"--config {key} must be an integer, got {config[key]!r}") from None


def build_backend(spec: str, config: dict[str, str]) -> CompletionBackend:
    """Turn a --backend spec (live, mock:PATH, replay:DIR) into a backend."""
    if spec == "live":
        model = config.get("model")
        if not model:
            raise ConfigError("the live backend needs --config model=NAME")
        if not os.environ.get(BASE_URL_ENV):
            raise ConfigError(f"the live backend needs {BASE_URL_ENV} set")
        return HttpBackend(
            model,
            api_key=os.environ.get(API_KEY_ENV),
            timeout=_config_float(config, "timeout", 30.0),
            requests_per_second=_config_float(config, "requests_per_second", 1.0),
            max_retries=_config_int(config, "max_retries", 3),
            supports_multi_sample=config.get("supports_multi_sample", "") == "1",
        )
    if spec.startswith("mock:"):
        path = spec[len("mock:"):]
        if not path:
            raise ConfigError("the mock backend needs a rules file: mock:PATH")
        try:
            return MockBackend.from_file(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load mock rules from {path}: {exc}") from None
    if spec.startswith("replay:"):
        directory = spec[len("replay:"):]
        if not directory:
            raise ConfigError("the replay backend needs a cache directory: replay:DIR")
        inner = NullBackend(config.get("replay_backend_id", "mock"))
        # replay:DIR mirrors --cache DIR, whose completions live under DIR/llm
        return CachedBackend(Path(directory) / "llm", inner, replay_only=True)
    raise ConfigError(f"unknown backend spec {spec!r}; use live, mock:PATH, or replay:DIR")


def _build_news_clients(args, cache_dir: Path | None, replay_only: bool):
    hn = HackerNewsClient(args.hn_endpoint or DEFAULT_HN_ENDPOINT)
    api_key = os.environ.get(NYT_API_KEY_ENV)
    if api_key:
        nyt = NYTClient(api_key, args.nyt_endpoint or DEFAULT_NYT_ENDPOINT)
    else:
        nyt = _UnconfiguredNewsClient(
            Source.NYT, f"set {NYT_API_KEY_ENV} to query the New York Times"
        )
    if cache_dir is not None:
        news_dir = cache_dir / "news"
        hn = CachedNewsClient(news_dir, hn, replay_only=replay_only)
        nyt = CachedNewsClient(news_dir, nyt, replay_only=replay_only)
    return hn, nyt


_UNSAFE_ID = re.compile(r"[^A-Za-z0-9._-]")


def _safe_filename(event_id: str, taken: dict[str, str]) -> str:
    base = _UNSAFE_ID.sub("_", event_id) or "event"
    name = base
    counter = 2
    while name in taken and taken[name] != event_id:
        name = f"{base}_{counter}"
        counter += 1
    taken[name] = event_id
    return name


def cmd_run(args) -> int:
    config = _parse_config(args.config)
    today = _parse_date(args.date, "--date")
    if args.workers < 1:
        raise ConfigError(f"--workers must be positive, got {args.workers}")
    if args.backend.startswith("replay:") and args.cache:
        raise ConfigError("replay:DIR already reads a cache; do not combine it with --cache")
    if args.replay_only and not (args.cache or args.backend.startswith("replay:")):
        raise ConfigError("--replay-only needs --cache DIR or a replay:DIR backend")

    split = load_dataset(args.events)
    backend = build_backend(args.backend, config)
    cache_dir = Path(args.cache) if args.cache else None
    if cache_dir is not None:
        backend = CachedBackend(cache_dir / "llm", backend, replay_only=args.replay_only)
    extractor = backend

    params: dict[str, int] = {}
    if args.persona_count is not None:
        params["persona_count"] = args.persona_count
    if args.keyword_count is not None:
        params["keyword_count"] = args.keyword_count

    hn_client = nyt_client = None
    if args.strategy == "news":
        news_cache = cache_dir
        news_replay = args.replay_only
        if args.backend.startswith("replay:"):
            news_cache = Path(args.backend[len("replay:"):])
            news_replay = True
        hn_client, nyt_client = _build_news_clients(args, news_cache, news_replay)

    active = active_events(split, today)
    skipped = len(split.events) - len(active)
    out = Path(args.out)
    trace_dir = out / "traces" / args.strategy
    taken: dict[str, str] = {}

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        futures = [
            pool.submit(
                run_strategy,
                args.strategy,
                event,
                today,
                backend,
                extractor=extractor,
                hn_client=hn_client,
                nyt_client=nyt_client,
                params=params,
            )
            for event in active
        ]

    records = []
    failures = []
    for event, future in zip(active, futures):
        name = _safe_filename(event.id, taken)
        try:
            trace = future.result()
        except ChainError as exc:
            save_partial_trace(exc, args.strategy, today, trace_dir / f"{name}.failed.json")
            failures.append((event.id, str(exc)))
        except PredictionWindowError as exc:
            failures.append((event.id, str(exc)))
        else:
            ref = f"traces/{args.strategy}/{name}.json"
            save_trace(trace, out / ref)
            records.append(trace_to_forecast(trace, trace_ref=ref))

    out.mkdir(parents=True, exist_ok=True)
    forecasts_path = out / f"{args.strategy}.jsonl"
    save_forecasts(records, forecasts_path)

    print(
        f"ran {args.strategy} on {len(active)} events: "
        f"{len(records)} ok, {len(failures)} failed, {skipped} inactive skipped"
    )
    print(f"forecasts: {forecasts_path}")
    for event_id, message in failures:
        print(f"FAILED {event_id}: {message}", file=sys.stderr)
    return EXIT_RUN_FAILURES if failures else EXIT_OK


def cmd_score(args) -> int:
    split = load_dataset(args.events)
    if args.from_market:
        if not args.date:
            raise ConfigError("--from-market needs --date")
        on = _parse_date(args.date, "--date")
        candidates = [event for event in active_events(split, on) if event.resolved]
        records = market_forecast_records(split, on, events=candidates)
    else:
        records = load_forecasts(args.forecasts)
    report = score(records, split)
    label = ", ".join(sorted({record.strategy for record in records}))
    print(render_report(report, title=f"Scores for {label}"))
    if args.out:
        payload = json.dumps(report_to_dict(report), indent=2, sort_keys=True)
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
        print(f"report: {args.out}")
    return EXIT_OK


def _probability_map(records, side: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for record in records:
        if record.event_id in out:
            raise ConfigError(f"{side} file lists event {record.event_id!r} more than once")
        out[record.event_id] = record.probability
    return out


def cmd_bias(args) -> int:
    forward = _probability_map(load_forecasts(args.forward), "forward")
    flipped = _probability_map(load_forecasts(args.reversed_file), "reversed")
    if set(forward) != set(flipped):
        raise MismatchedEventSets(set(forward) ^ set(flipped))
    if not forward:
        raise EmptyInput("no forecasts to compare")
    mean_forward = math.fsum(forward.values()) / len(forward)
    mean_flipped = math.fsum(flipped.values()) / len(flipped)
    # Reversed runs already report 1 - P(opposite), so undo that complement
    # to recover the probability put on the opposite event.
    mean_opposite = 1.0 - mean_flipped
    total = coherence_sum(mean_forward, mean_opposite)
    print(f"n = {len(forward)}")
    print(f"mean forward probability      {round4(mean_forward):.4f}")
    print(f"mean reversed probability     {round4(mean_flipped):.4f}")
    print(f"implied opposite probability  {round4(mean_opposite):.4f}")
    print(f"coherence sum (ideal 1.0)     {round4(total):.4f}")
    if args.out:
        payload = {
            "n": len(forward),
            "mean_forward": mean_forward,
            "mean_reversed": mean_flipped,
            "implied_opposite": mean_opposite,
            "coherence_sum": total,
        }
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"report: {args.out}")
    return EXIT_OK


def cmd_rationale(args) -> int:
    just = load_forecasts(args.just)
    rationale = load_forecasts(args.rationale)
    rows = prediction_shift(
        [(record.event_id, record.probability) for record in just],
        [(record.event_id, record.probability) for record in rationale],
    )
    print("event_id\tp_just\tp_rationale\tdelta")
    for event_id, p_just, p_rationale, delta in rows:
        print(
            f"{event_id}\t{round4(p_just):.4f}\t{round4(p_rationale):.4f}\t{round4(delta):+.4f}"
        )
    mean_delta = math.fsum(row[3] for row in rows) / len(rows)
    print(f"mean shift: {round4(mean_delta):+.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["event_id", "p_just", "p_rationale", "delta"])
            for event_id, p_just, p_rationale, delta in rows:
                writer.writerow([event_id, repr(p_just), repr(p_rationale), repr(delta)])
        print(f"table: {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foresight",
        description="Run forecasting strategies over event datasets and score the results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one strategy over the active events of a dataset")
    run_p.add_argument("--events", required=True, help="event dataset (JSON lines)")
    run_p.add_argument("--strategy", required=True, choices=list(STRATEGY_IDS))
    run_p.add_argument("--date", required=True, help="prediction date (YYYY-MM-DD)")
    run_p.add_argument("--backend", required=True, help="live, mock:PATH, or replay:DIR")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--config", action="append", metavar="KEY=VALUE")
    run_p.add_argument("--cache", help="cache directory (completions under llm/, headlines under news/)")
    run_p.add_argument("--replay-only", action="store_true", help="error on any cache miss")
    run_p.add_argument("--workers", type=int, default=4)
    run_p.add_argument("--persona-count", type=int, help="crowd strategy: number of experts")
    run_p.add_argument("--keyword-count", type=int, help="news strategy: number of search terms")
    run_p.add_argument("--hn-endpoint", help="override the Hacker News search endpoint")
    run_p.add_argument("--nyt-endpoint", help="override the New York Times search endpoint")
    run_p.set_defaults(func=cmd_run)

    score_p = sub.add_parser("score", help="score forecasts against resolved outcomes")
    score_p.add_argument("--events", required=True)
    source = score_p.add_mutually_exclusive_group(required=True)
    source.add_argument("--forecasts", help="forecast file (JSON lines)")
    source.add_argument(
        "--from-market", action="store_true", help="score market midpoints instead of a file"
    )
    score_p.add_argument("--date", help="snapshot date for --from-market")
    score_p.add_argument("--out", help="also write the report as JSON")
    score_p.set_defaults(func=cmd_score)

    bias_p = sub.add_parser("bias", help="coherence of forward versus reversed forecasts")
    bias_p.add_argument("--forward", required=True, help="forward forecast file")
    bias_p.add_argument(
        "--reversed", required=True, dest="reversed_file", help="reversed forecast file"
    )
    bias_p.add_argument("--out", help="also write the summary as JSON")
    bias_p.set_defaults(func=cmd_bias)

    rationale_p = sub.add_parser(
        "rationale", help="per-event shift between direct and rationale-first forecasts"
    )
    rationale_p.add_argument("--just", required=True, help="direct-answer forecast file")
    rationale_p.add_argument("--rationale", required=True, help="rationale-first forecast file")
    rationale_p.add_argument("--out", help="also write the table as CSV")
    rationale_p.set_defaults(func=cmd_rationale)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
