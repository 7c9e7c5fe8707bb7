"""Forecasting strategies executed as recorded multi-step prompt chains."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .events import Event
from .llm import (
    BackendError,
    CompletionBackend,
    CompletionRequest,
    DEFAULT_TEMPERATURE,
    FINAL_SAMPLE_COUNT,
    complete,
)
from .metrics import ForecastRecord
from .news import NewsClient, NewsError, QueryWindow, format_headlines, query_hackernews, query_nyt
from .prompts import (
    ExtractionFailed,
    aggregate_probabilities,
    extract_probability,
    get_template,
    render,
    RenderContext,
)

__all__ = [
    "DEFAULT_KEYWORD_COUNT",
    "DEFAULT_PERSONA_COUNT",
    "NO_HEADLINES_TEXT",
    "STRATEGY_IDS",
    "ChainError",
    "ChainTrace",
    "InvalidParam",
    "PredictionWindowError",
    "SampleExtraction",
    "StepRecord",
    "StrategySpec",
    "UnknownStrategy",
    "load_trace",
    "run_basic",
    "run_basic_with_rationale",
    "run_base_rate",
    "run_both_sides",
    "run_crowd",
    "run_forecaster",
    "run_news",
    "run_reversed",
    "run_sequences",
    "run_strategy",
    "save_partial_trace",
    "save_trace",
    "trace_from_dict",
    "trace_to_dict",
    "trace_to_forecast",
]

DEFAULT_PERSONA_COUNT = 8
DEFAULT_KEYWORD_COUNT = 3
NO_HEADLINES_TEXT = "No relevant headlines were found."

MEAN_TOLERANCE = 1e-9


class UnknownStrategy(ValueError):
    """Raised when a strategy id is not registered."""

    def __init__(self, strategy_id: str):
        self.strategy_id = strategy_id
        super().__init__(f"unknown strategy: {strategy_id!r}")


class InvalidParam(ValueError):
    """Raised when a strategy is given a parameter it does not accept."""


class PredictionWindowError(ValueError):
    """Raised when the prediction date is not before the event expiry."""

    def __init__(self, event_id: str, today: date, expires: date):
        self.event_id = event_id
        self.today = today
        self.expires = expires
        super().__init__(
            f"event {event_id!r} expires {expires.isoformat()}, "
            f"cannot predict on {today.isoformat()}"
        )


class ChainError(RuntimeError):
    """Raised when a chain step fails; carries the steps completed so far."""

    def __init__(self, event_id: str, step_id: str, message: str, partial_steps: Sequence["StepRecord"] = ()):
        self.event_id = event_id
        self.step_id = step_id
        self.partial_steps = tuple(partial_steps)
        super().__init__(f"event {event_id!r} failed at step {step_id!r}: {message}")


@dataclass(frozen=True)
class SampleExtraction:
    """How one sampled reply was turned into a probability."""

    sample_index: int
    prompt: str | None
    response: str | None
    probability: float
    fallback_used: bool
    error: str | None = None


@dataclass(frozen=True)
class StepRecord:
    """One chain step: the exact prompt sent and everything that came back."""

    step_id: str
    prompt: str | None
    responses: tuple[str, ...]
    parsed: object = None
    extractions: tuple[SampleExtraction, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.step_id:
            raise ValueError("step_id must be non-empty")
        # prompt None marks a step that made no model call
        if self.prompt is not None and not self.responses:
            raise ValueError(f"step {self.step_id!r} has a prompt but no responses")
        if self.prompt is None and self.responses:
            raise ValueError(f"step {self.step_id!r} has responses but no prompt")


@dataclass(frozen=True)
class ChainTrace:
    """Complete audit record of one strategy run on one event."""

    event_id: str
    strategy: str
    prediction_date: date
    steps: tuple[StepRecord, ...]
    final_samples: tuple[float, ...]
    final_probability: float

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a trace must contain at least one step")
        if not self.final_samples:
            raise ValueError("a trace must carry the sampled probabilities")
        if not 0.0 <= self.final_probability <= 1.0:
            raise ValueError(f"final probability out of range: {self.final_probability!r}")
        mean = math.fsum(self.final_samples) / len(self.final_samples)
        if abs(mean - self.final_probability) > MEAN_TOLERANCE:
            raise ValueError(
                f"final probability {self.final_probability!r} does not match "
                f"sample mean {mean!r}"
            )


@dataclass(frozen=True)
class StrategySpec:
    """Registry entry binding a strategy id to its runner."""

    strategy_id: str
    runner: Callable[..., ChainTrace]
    allowed_params: frozenset[str] = frozenset()
    needs_news: bool = False


class _ChainBuilder:
    """Accumulates step records while a chain runs."""

    def __init__(
        self,
        strategy_id: str,
        event: Event,
        today: date,
        backend: CompletionBackend,
        extractor: CompletionBackend | None,
    ):
        if today >= event.expires:
            raise PredictionWindowError(event.id, today, event.expires)
        self.strategy_id = strategy_id
        self.event = event
        self.today = today
        self.backend = backend
        self.extractor = extractor
        self.bindings = RenderContext(event, today).bindings()
        self.steps: list[StepRecord] = []

    def fail(self, step_id: str, message: str) -> ChainError:
        return ChainError(self.event.id, step_id, message, self.steps)

    def _complete(self, step_id: str, prompt: str, n_samples: int) -> tuple[str, ...]:
        request = CompletionRequest(
            prompt=prompt, temperature=DEFAULT_TEMPERATURE, n_samples=n_samples
        )
        try:
            return complete(self.backend, request).texts
        except BackendError as exc:
            raise self.fail(step_id, str(exc)) from exc

    def _render(self, template_id: str, extra: Mapping[str, str] | None):
        template = get_template(template_id)
        bindings = self.bindings if not extra else {**self.bindings, **extra}
        return template, render(template, bindings)

    def intermediate(
        self,
        step_id: str,
        template_id: str,
        extra: Mapping[str, str] | None = None,
        parse: Callable[[str], tuple[object, tuple[str, ...]]] | None = None,
    ):
        """One single-sample step; returns the reply, or its parsed form."""
        _, prompt = self._render(template_id, extra)
        reply = self._complete(step_id, prompt, 1)[0]
        parsed: object = reply
        warnings: tuple[str, ...] = ()
        if parse is not None:
            parsed, warnings = parse(reply)
        self.steps.append(
            StepRecord(step_id, prompt, (reply,), parsed=parsed, warnings=warnings)
        )
        return parsed

    def sampled(
        self,
        step_id: str,
        template_id: str,
        n_samples: int,
        extra: Mapping[str, str] | None = None,
        parse: Callable[[str], str] | None = None,
    ) -> tuple[str, ...]:
        """One multi-sample step; returns each reply, optionally cleaned."""
        _, prompt = self._render(template_id, extra)
        replies = self._complete(step_id, prompt, n_samples)
        parsed = tuple(parse(reply) if parse else reply for reply in replies)
        self.steps.append(StepRecord(step_id, prompt, replies, parsed=parsed))
        return parsed

    def non_llm(self, step_id: str, parsed: object, warnings: Sequence[str] = ()) -> None:
        self.steps.append(
            StepRecord(step_id, None, (), parsed=parsed, warnings=tuple(warnings))
        )

    def final(
        self,
        step_id: str,
        template_id: str,
        extra: Mapping[str, str] | None = None,
    ) -> tuple[float, tuple[float, ...]]:
        """The prediction step: sample, extract each reply, aggregate."""
        template, prompt = self._render(template_id, extra)
        replies = self._complete(step_id, prompt, FINAL_SAMPLE_COUNT)
        samples: list[float] = []
        extractions: list[SampleExtraction] = []
        warnings: list[str] = []
        for index, raw in enumerate(replies):
            try:
                value, detail = extract_probability(
                    raw, scale=template.scale, extractor=self.extractor
                )
            except ExtractionFailed as exc:
                partial = StepRecord(
                    step_id,
                    prompt,
                    replies,
                    parsed=None,
                    extractions=tuple(extractions),
                    warnings=tuple(warnings) + (f"sample {index}: {exc}",),
                )
                raise ChainError(
                    self.event.id, step_id, str(exc), self.steps + [partial]
                ) from exc
            samples.append(value)
            extractions.append(
                SampleExtraction(
                    index, detail.prompt, detail.response, value,
                    detail.fallback_used, detail.error,
                )
            )
            if detail.error:
                warnings.append(f"sample {index}: {detail.error}")
        mean = aggregate_probabilities(samples)
        self.steps.append(
            StepRecord(
                step_id,
                prompt,
                replies,
                parsed=mean,
                extractions=tuple(extractions),
                warnings=tuple(warnings),
            )
        )
        return mean, tuple(samples)

    def single_probability(
        self,
        step_id: str,
        template_id: str,
        extra: Mapping[str, str] | None = None,
    ) -> float | None:
        """One single-sample prediction; None when extraction fails."""
        template, prompt = self._render(template_id, extra)
        raw = self._complete(step_id, prompt, 1)[0]
        try:
            value, detail = extract_probability(
                raw, scale=template.scale, extractor=self.extractor
            )
        except ExtractionFailed as exc:
            self.steps.append(
                StepRecord(step_id, prompt, (raw,), parsed=None, warnings=(f"dropped: {exc}",))
            )
            return None
        extraction = SampleExtraction(
            0, detail.prompt, detail.response, value, detail.fallback_used, detail.error
        )
        warnings = (f"sample 0: {detail.error}",) if detail.error else ()
        self.steps.append(
            StepRecord(
                step_id, prompt, (raw,), parsed=value,
                extractions=(extraction,), warnings=warnings,
            )
        )
        return value

    def trace(self, samples: tuple[float, ...], final: float) -> ChainTrace:
        return ChainTrace(
            event_id=self.event.id,
            strategy=self.strategy_id,
            prediction_date=self.today,
            steps=tuple(self.steps),
            final_samples=samples,
            final_probability=final,
        )


def run_basic(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """Single prediction prompt with no persona or context building."""
    builder = _ChainBuilder("basic", event, today, backend, extractor)
    mean, samples = builder.final("predict", "basic/predict")
    return builder.trace(samples, mean)


def run_forecaster(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """The basic prompt preceded by the forecaster persona text."""
    builder = _ChainBuilder("forecaster", event, today, backend, extractor)
    mean, samples = builder.final("predict", "forecaster/predict")
    return builder.trace(samples, mean)


def run_basic_with_rationale(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """The basic prompt, but asking for reasoning before the number."""
    builder = _ChainBuilder("basic_with_rationale", event, today, backend, extractor)
    mean, samples = builder.final("predict", "basic_with_rationale/predict")
    return builder.trace(samples, mean)


def run_base_rate(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """Pose a base-rate question, answer it, then predict with the answer."""
    builder = _ChainBuilder("base_rate", event, today, backend, extractor)
    question = builder.intermediate("question", "base_rate/question")
    answer = builder.intermediate("answer", "base_rate/answer", {"base rate question": question})
    mean, samples = builder.final("predict", "base_rate/predict", {"base rate": answer})
    return builder.trace(samples, mean)


def run_both_sides(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """Collect supporting and opposing evidence, then predict with both."""
    builder = _ChainBuilder("both_sides", event, today, backend, extractor)
    pros = builder.intermediate("pros", "both_sides/pros")
    cons = builder.intermediate("cons", "both_sides/cons")
    mean, samples = builder.final("predict", "both_sides/predict", {"pros": pros, "cons": cons})
    return builder.trace(samples, mean)


_SEQUENCE_MARKER = re.compile(r"^\[PATH TO (?:POSITIVE|NEGATIVE) OUTCOME\]\s*$")
_TAG_LINE = re.compile(r"^\[[A-Z][A-Z ]*\]")


def _parse_sequence_blocks(reply: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split a reply into outcome paths, reading no further than END."""
    kept: list[str] = []
    for line in reply.splitlines():
        if line.strip() == "END":
            break
        kept.append(line)
    blocks: list[str] = []
    current: list[str] | None = None
    for line in kept:
        if _SEQUENCE_MARKER.match(line.strip()):
            if current:
                blocks.append("\n".join(current).strip())
            current = []
        elif current is not None:
            current.append(line)
    if current:
        blocks.append("\n".join(current).strip())
    blocks = [block for block in blocks if block]
    if not blocks:
        body = "\n".join(kept).strip()
        if body:
            blocks = [body]
    warnings = () if blocks else ("no sequences parsed from the reply",)
    return tuple(blocks), warnings


def _parse_opposite_reply(reply: str) -> tuple[str, tuple[str, ...]]:
    """Pull the reworded event out of a rewording reply."""
    text = ""
    for line in reply.splitlines():
        line = line.strip()
        if not line:
            continue
        if line == "[END]":
            break
        if line.startswith("[OPPOSITE]"):
            text = line[len("[OPPOSITE]"):].strip()
            break
        if _TAG_LINE.match(line):
            continue
        text = line
        break
    warnings = () if text else ("could not parse a reworded event from the reply",)
    return text, warnings


def _compose_sequences(blocks: Sequence[str], *, positive: bool) -> str:
    if not blocks:
        return "None"
    label = "Potential Sequence {i} :" if positive else "Potential Sequence {i}:"
    return "\n".join(
        label.format(i=index) + "\n" + block for index, block in enumerate(blocks, start=1)
    )


def run_sequences(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """Generate paths toward and away from the event, then weigh them."""
    builder = _ChainBuilder("sequences", event, today, backend, extractor)
    positive_blocks = builder.intermediate(
        "positive", "sequences/positive", parse=_parse_sequence_blocks
    )
    opposite = builder.intermediate("opposite", "sequences/opposite", parse=_parse_opposite_reply)
    if not opposite:
        raise builder.fail("opposite", "reworded event text was empty")
    negative_blocks = builder.intermediate(
        "negative", "sequences/negative", {"Opposite Event": opposite},
        parse=_parse_sequence_blocks,
    )
    mean, samples = builder.final(
        "predict",
        "sequences/predict",
        {
            "positive sequences": _compose_sequences(positive_blocks, positive=True),
            "negative sequences": _compose_sequences(negative_blocks, positive=False),
        },
    )
    return builder.trace(samples, mean)


def _clean_job(reply: str) -> str:
    lines = [line.strip() for line in reply.splitlines() if line.strip()]
    job = lines[0] if lines else ""
    job = job.strip("\"'").strip()
    if job.lower().startswith("i choose to talk to"):
        job = job[len("i choose to talk to"):].strip()
    return job.rstrip(".").strip()


def run_crowd(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
    persona_count: int = DEFAULT_PERSONA_COUNT,
) -> ChainTrace:
    """Pick experts, ask each for a windowed probability, average them."""
    if persona_count < 1:
        raise InvalidParam(f"persona_count must be positive, got {persona_count}")
    builder = _ChainBuilder("crowd", event, today, backend, extractor)
    jobs = builder.sampled("expert", "crowd/expert", persona_count, parse=_clean_job)
    values: list[float] = []
    for index, job in enumerate(jobs):
        if not job:
            builder.non_llm(
                f"persona_{index}", None, warnings=("dropped: empty expert description",)
            )
            continue
        value = builder.single_probability(f"persona_{index}", "crowd/predict", {"job": job})
        if value is not None:
            values.append(value)
    if not values:
        raise builder.fail("predict", "every persona prediction failed")
    final = aggregate_probabilities(values)
    return builder.trace(tuple(values), final)


def _parse_keywords(reply: str, limit: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    terms: list[str] = []
    for line in reply.splitlines():
        line = line.strip()
        if line.startswith("*") or line.startswith("-"):
            line = line[1:].strip()
        if not line or line.endswith(":"):
            continue
        terms.append(line)
        if len(terms) == limit:
            break
    warnings = () if terms else ("no search terms parsed from the reply",)
    return tuple(terms), warnings


def _fetch_headlines(query, client, window):
    # Degrade to an empty result; the chain still runs without headlines.
    if client is None:
        return (), ("no headline client configured",)
    try:
        return query(client, window), ()
    except NewsError as exc:
        return (), (f"headline fetch failed: {exc}",)


def _is_none_reply(reply: str) -> bool:
    return not reply.strip() or reply.strip().upper() == "NONE"


def run_news(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
    hn_client: NewsClient | None = None,
    nyt_client: NewsClient | None = None,
    keyword_count: int = DEFAULT_KEYWORD_COUNT,
) -> ChainTrace:
    """Search the news up to the prediction date, then predict from it."""
    if keyword_count < 1:
        raise InvalidParam(f"keyword_count must be positive, got {keyword_count}")
    builder = _ChainBuilder("news", event, today, backend, extractor)
    terms = builder.intermediate(
        "keywords",
        "news/keywords",
        {"number of terms": str(keyword_count)},
        parse=lambda reply: _parse_keywords(reply, keyword_count),
    )
    if not terms:
        raise builder.fail("keywords", "no search terms parsed from the reply")
    window = QueryWindow(terms=tuple(terms), until=today)

    hn_headlines, hn_warnings = _fetch_headlines(query_hackernews, hn_client, window)
    hn_text = format_headlines(hn_headlines)
    builder.non_llm("hn_fetch", hn_text or NO_HEADLINES_TEXT, warnings=hn_warnings)
    if hn_headlines:
        reply = builder.intermediate("hn_filter", "news/hn_filter", {"Hackernews headlines": hn_text})
        filtered_hn = NO_HEADLINES_TEXT if _is_none_reply(reply) else reply
    else:
        filtered_hn = NO_HEADLINES_TEXT

    nyt_headlines, nyt_warnings = _fetch_headlines(query_nyt, nyt_client, window)
    nyt_text = format_headlines(nyt_headlines)
    builder.non_llm("nyt_fetch", nyt_text or NO_HEADLINES_TEXT, warnings=nyt_warnings)
    if nyt_headlines:
        extracted = builder.intermediate("nyt_extract", "news/nyt_extract", {"NYT headlines": nyt_text})
        if _is_none_reply(extracted):
            summarized = NO_HEADLINES_TEXT
        else:
            reply = builder.intermediate(
                "nyt_paraphrase", "news/nyt_paraphrase", {"filtered NYT headlines": extracted}
            )
            summarized = NO_HEADLINES_TEXT if _is_none_reply(reply) else reply
    else:
        summarized = NO_HEADLINES_TEXT

    mean, samples = builder.final(
        "predict",
        "news/predict",
        {
            "filtered Hackernews headlines": filtered_hn,
            "summarized NYT headlines": summarized,
        },
    )
    return builder.trace(samples, mean)


def run_reversed(
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
) -> ChainTrace:
    """Reword the event as its opposite, predict that, and complement."""
    builder = _ChainBuilder("reversed", event, today, backend, extractor)
    opposite = builder.intermediate("opposite", "sequences/opposite", parse=_parse_opposite_reply)
    if not opposite:
        raise builder.fail("opposite", "reworded event text was empty")
    # the prediction step's parsed value keeps the raw, unflipped mean
    _, raw_samples = builder.final("predict", "basic/predict", {"condition": opposite})
    samples = tuple(1.0 - value for value in raw_samples)
    final = aggregate_probabilities(samples)
    return builder.trace(samples, final)


STRATEGIES: dict[str, StrategySpec] = {
    spec.strategy_id: spec
    for spec in (
        StrategySpec("basic", run_basic),
        StrategySpec("forecaster", run_forecaster),
        StrategySpec("base_rate", run_base_rate),
        StrategySpec("both_sides", run_both_sides),
        StrategySpec("sequences", run_sequences),
        StrategySpec("crowd", run_crowd, allowed_params=frozenset({"persona_count"})),
        StrategySpec(
            "news",
            run_news,
            allowed_params=frozenset({"keyword_count"}),
            needs_news=True,
        ),
        StrategySpec("reversed", run_reversed),
        StrategySpec("basic_with_rationale", run_basic_with_rationale),
    )
}

STRATEGY_IDS = tuple(STRATEGIES)


def run_strategy(
    strategy_id: str,
    event: Event,
    today: date,
    backend: CompletionBackend,
    *,
    extractor: CompletionBackend | None = None,
    hn_client: NewsClient | None = None,
    nyt_client: NewsClient | None = None,
    params: Mapping[str, int] | None = None,
) -> ChainTrace:
    """Dispatch to a registered strategy, validating its parameters."""
    spec = STRATEGIES.get(strategy_id)
    if spec is None:
        raise UnknownStrategy(strategy_id)
    params = dict(params or {})
    unknown = set(params) - spec.allowed_params
    if unknown:
        names = ", ".join(sorted(unknown))
        raise InvalidParam(f"strategy {strategy_id!r} does not accept: {names}")
    for name, value in params.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise InvalidParam(f"{name} must be a positive integer, got {value!r}")
    kwargs: dict = {"extractor": extractor}
    kwargs.update(params)
    if spec.needs_news:
        kwargs["hn_client"] = hn_client
        kwargs["nyt_client"] = nyt_client
    return spec.runner(event, today, backend, **kwargs)


def trace_to_forecast(trace: ChainTrace, *, trace_ref: str | None = None) -> ForecastRecord:
    """The trace's bottom line as a scoreable forecast record."""
    return ForecastRecord(
        event_id=trace.event_id,
        strategy=trace.strategy,
        prediction_date=trace.prediction_date,
        probability=trace.final_probability,
        samples=trace.final_samples,
        trace_ref=trace_ref,
    )


def _extraction_to_dict(extraction: SampleExtraction) -> dict:
    return {
        "sample_index": extraction.sample_index,
        "prompt": extraction.prompt,
        "response": extraction.response,
        "probability": extraction.probability,
        "fallback_used": extraction.fallback_used,
        "error": extraction.error,
    }


def _step_to_dict(step: StepRecord) -> dict:
    parsed = step.parsed
    if isinstance(parsed, tuple):
        parsed = list(parsed)
    return {
        "step_id": step.step_id,
        "prompt": step.prompt,
        "responses": list(step.responses),
        "parsed": parsed,
        "extractions": [_extraction_to_dict(e) for e in step.extractions],
        "warnings": list(step.warnings),
    }


def _step_from_dict(payload: dict) -> StepRecord:
    parsed = payload.get("parsed")
    if isinstance(parsed, list):
        parsed = tuple(parsed)
    return StepRecord(
        step_id=payload["step_id"],
        prompt=payload.get("prompt"),
        responses=tuple(payload.get("responses", ())),
        parsed=parsed,
        extractions=tuple(
            SampleExtraction(
                sample_index=item["sample_index"],
                prompt=item.get("prompt"),
                response=item.get("response"),
                probability=item["probability"],
                fallback_used=item["fallback_used"],
                error=item.get("error"),
            )
            for item in payload.get("extractions", ())
        ),
        warnings=tuple(payload.get("warnings", ())),
    )


def trace_to_dict(trace: ChainTrace) -> dict:
    return {
        "event_id": trace.event_id,
        "strategy": trace.strategy,
        "prediction_date": trace.prediction_date.isoformat(),
        "final_probability": trace.final_probability,
        "final_samples": list(trace.final_samples),
        "steps": [_step_to_dict(step) for step in trace.steps],
    }


def trace_from_dict(payload: dict) -> ChainTrace:
    return ChainTrace(
        event_id=payload["event_id"],
        strategy=payload["strategy"],
        prediction_date=date.fromisoformat(payload["prediction_date"]),
        steps=tuple(_step_from_dict(item) for item in payload["steps"]),
        final_samples=tuple(payload["final_samples"]),
        final_probability=payload["final_probability"],
    )


def save_trace(trace: ChainTrace, path: str | Path) -> None:
    """Write a trace as stable, diffable JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(trace_to_dict(trace), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def load_trace(path: str | Path) -> ChainTrace:
    return trace_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_partial_trace(
    error: ChainError,
    strategy: str,
    prediction_date: date,
    path: str | Path,
) -> None:
    """Record the completed steps of a failed chain for later inspection."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "event_id": error.event_id,
        "strategy": strategy,
        "prediction_date": prediction_date.isoformat(),
        "failed_step": error.step_id,
        "error": str(error),
        "steps": [_step_to_dict(step) for step in error.partial_steps],
    }
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
