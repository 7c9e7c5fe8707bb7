"""Forecast scoring and bias-analysis arithmetic.

Brier score is the mean squared error between probabilities and 0/1 outcomes;
the weighted variant averages the per-class (resolved-yes, resolved-no) Brier
scores so the rarer class counts equally.  Values are stored at full float
precision; rendering rounds half-even to 4 decimals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import (
    Category,
    DatasetSplit,
    Event,
    MalformedRecord,
    UnresolvedEvent,
    market_point_prediction,
    outcome_indicator,
)

__all__ = [
    "ForecastRecord",
    "ScoreReport",
    "EmptyInput",
    "EmptyClass",
    "UnknownEvent",
    "MismatchedEventSets",
    "MissingSnapshot",
    "brier",
    "weighted_brier",
    "score",
    "coherence_sum",
    "prediction_shift",
    "market_forecast_records",
    "parse_forecasts",
    "load_forecasts",
    "serialize_forecasts",
    "save_forecasts",
    "render_report",
    "report_to_dict",
    "round4",
]

MEAN_TOLERANCE = 1e-9


class EmptyInput(ValueError):
    """A scoring operation received no data points."""


class EmptyClass(ValueError):
    """One side of a class-weighted score has no members."""

    def __init__(self, which: str):
        super().__init__(f"no forecasts for events resolving {which}")
        self.which = which


class UnknownEvent(ValueError):
    def __init__(self, event_id: str):
        super().__init__(f"forecast references unknown event {event_id!r}")
        self.event_id = event_id


class MismatchedEventSets(ValueError):
    """Two forecast sets that must cover identical events do not."""

    def __init__(self, missing_ids: Iterable[str]):
        self.missing_ids = frozenset(missing_ids)
        listed = ", ".join(sorted(self.missing_ids))
        super().__init__(f"event sets differ; ids present on one side only: {listed}")


class MissingSnapshot(ValueError):
    def __init__(self, event_id: str, on: date):
        super().__init__(f"event {event_id!r} has no market snapshot dated {on}")
        self.event_id = event_id
        self.date = on


@dataclass(frozen=True)
class ForecastRecord:
    """One strategy's probability for one event on one prediction date.

    When per-sample values are kept, the stored probability must be their mean
    (within ``MEAN_TOLERANCE``).
    """

    event_id: str
    strategy: str
    prediction_date: date
    probability: float
    samples: tuple[float, ...] = ()
    trace_ref: str | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        for s in self.samples:
            if not (0.0 <= s <= 1.0):
                raise ValueError(f"sample {s} outside [0, 1]")
        if self.samples:
            mean = math.fsum(self.samples) / len(self.samples)
            if abs(self.probability - mean) > MEAN_TOLERANCE:
                raise ValueError(
                    f"probability {self.probability} is not the mean of samples ({mean})"
                )


@dataclass(frozen=True)
class ScoreReport:
    """Scores for one batch of forecasts against resolved outcomes."""

    n_total: int
    n_yes: int
    n_no: int
    brier: float
    brier_yes: float | None
    brier_no: float | None
    weighted_brier: float | None
    mean_prediction: float
    per_category: Mapping[Category, tuple[int, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_total != self.n_yes + self.n_no:
            raise ValueError("n_total must equal n_yes + n_no")
        if (self.brier_yes is None) != (self.n_yes == 0):
            raise ValueError("brier_yes must be present exactly when n_yes > 0")
        if (self.brier_no is None) != (self.n_no == 0):
            raise ValueError("brier_no must be present exactly when n_no > 0")
        if (self.weighted_brier is None) != (self.brier_yes is None or self.brier_no is None):
            raise ValueError("weighted_brier must be present exactly when both classes are")


def brier(pairs: Sequence[tuple[float, int]]) -> float:
    """Mean squared error of (probability, outcome) pairs.  Outcomes are 0/1."""
    if len(pairs) == 0:
        raise EmptyInput("brier needs at least one (probability, outcome) pair")
    arr = np.asarray(pairs, dtype=float)
    probs = arr[:, 0]
    outcomes = arr[:, 1]
    if np.any((probs < 0.0) | (probs > 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.all((outcomes == 0.0) | (outcomes == 1.0)):
        raise ValueError("outcomes must be 0 or 1")
    return float(np.mean((probs - outcomes) ** 2))


def weighted_brier(
    yes_pairs: Sequence[tuple[float, int]], no_pairs: Sequence[tuple[float, int]]
) -> float:
    """Average of the per-class Brier scores.  Both classes must be nonempty."""
    if len(yes_pairs) == 0:
        raise EmptyClass("yes")
    if len(no_pairs) == 0:
        raise EmptyClass("no")
    return (brier(yes_pairs) + brier(no_pairs)) / 2.0


def score(forecasts: Sequence[ForecastRecord], split: DatasetSplit) -> ScoreReport:
    """Score forecasts against the split's resolved outcomes.

    Every forecast must reference a known, resolved event; violations raise
    rather than silently dropping rows.
    """
    if len(forecasts) == 0:
        raise EmptyInput("no forecasts to score")
    pairs: list[tuple[float, int]] = []
    yes_pairs: list[tuple[float, int]] = []
    no_pairs: list[tuple[float, int]] = []
    by_category: dict[Category, list[tuple[float, int]]] = {}
    for f in forecasts:
        event = split.event_by_id(f.event_id)
        if event is None:
            raise UnknownEvent(f.event_id)
        outcome = outcome_indicator(event)
        pair = (f.probability, outcome)
        pairs.append(pair)
        (yes_pairs if outcome == 1 else no_pairs).append(pair)
        by_category.setdefault(event.category, []).append(pair)

    brier_yes = brier(yes_pairs) if yes_pairs else None
    brier_no = brier(no_pairs) if no_pairs else None
    weighted = (
        weighted_brier(yes_pairs, no_pairs) if yes_pairs and no_pairs else None
    )
    per_category = {
        cat: (len(cat_pairs), brier(cat_pairs)) for cat, cat_pairs in by_category.items()
    }
    return ScoreReport(
        n_total=len(pairs),
        n_yes=len(yes_pairs),
        n_no=len(no_pairs),
        brier=brier(pairs),
        brier_yes=brier_yes,
        brier_no=brier_no,
        weighted_brier=weighted,
        mean_prediction=math.fsum(f.probability for f in forecasts) / len(forecasts),
        per_category=per_category,
    )


def coherence_sum(mean_forward: float, mean_reversed: float) -> float:
    """Sum of mean forward and mean reversed-event probabilities.

    For a coherent forecaster the two means add to 1.0: an event and its
    negation must split the probability mass.
    """
    for value in (mean_forward, mean_reversed):
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"mean probability {value} outside [0, 1]")
    return mean_forward + mean_reversed


def prediction_shift(
    just_answer: Iterable[tuple[str, float]],
    with_rationale: Iterable[tuple[str, float]],
) -> list[tuple[str, float, float, float]]:
    """Join two forecast sets on event id and report the per-event shift.

    Returns rows ``(event_id, p_just, p_rationale, delta)`` sorted by event id,
    where ``delta = p_rationale - p_just``.  The two sets must cover exactly
    the same events.
    """
    ja = _as_unique_map(just_answer, "just_answer")
    wr = _as_unique_map(with_rationale, "with_rationale")
    if set(ja) != set(wr):
        raise MismatchedEventSets(set(ja) ^ set(wr))
    return [
        (event_id, ja[event_id], wr[event_id], wr[event_id] - ja[event_id])
        for event_id in sorted(ja)
    ]


def _as_unique_map(pairs: Iterable[tuple[str, float]], side: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for event_id, p in pairs:
        if event_id in out:
            raise ValueError(f"{side} lists event {event_id!r} more than once")
        out[event_id] = p
    return out


def market_forecast_records(
    split: DatasetSplit,
    on: date,
    *,
    events: Sequence[Event] | None = None,
    strategy: str = "market",
) -> list[ForecastRecord]:
    """Build forecasts from market spread midpoints on a single date.

    An event without a snapshot dated ``on`` is an error, not a skip.
    """
    records = []
    for event in split.events if events is None else events:
        snapshot = split.snapshot_on(event.id, on)
        if snapshot is None:
            raise MissingSnapshot(event.id, on)
        records.append(
            ForecastRecord(
                event_id=event.id,
                strategy=strategy,
                prediction_date=on,
                probability=market_point_prediction(snapshot),
            )
        )
    return records


_FORECAST_KEYS = ("event_id", "strategy", "prediction_date", "probability")


def parse_forecasts(text: str) -> list[ForecastRecord]:
    """Parse a JSON-lines forecast file."""
    records: list[ForecastRecord] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise MalformedRecord(lineno, "record is not a JSON object")
        missing = [k for k in _FORECAST_KEYS if k not in obj]
        if missing:
            raise MalformedRecord(lineno, f"missing field {missing[0]!r}")
        extra = [k for k in obj if k not in _FORECAST_KEYS and k not in ("samples", "trace_ref")]
        if extra:
            raise MalformedRecord(lineno, f"unexpected field {extra[0]!r}")
        try:
            records.append(
                ForecastRecord(
                    event_id=obj["event_id"],
                    strategy=obj["strategy"],
                    prediction_date=date.fromisoformat(obj["prediction_date"]),
                    probability=float(obj["probability"]),
                    samples=tuple(float(s) for s in obj.get("samples", ())),
                    trace_ref=obj.get("trace_ref"),
                )
            )
        except (TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, str(exc)) from None
    return records


def load_forecasts(path: str | Path) -> list[ForecastRecord]:
    return parse_forecasts(Path(path).read_text(encoding="utf-8"))


def serialize_forecasts(records: Sequence[ForecastRecord]) -> str:
    lines = []
    for r in records:
        obj: dict = {
            "event_id": r.event_id,
            "strategy": r.strategy,
            "prediction_date": r.prediction_date.isoformat(),
            "probability": r.probability,
        }
        if r.samples:
            obj["samples"] = list(r.samples)
        if r.trace_ref is not None:
            obj["trace_ref"] = r.trace_ref
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def save_forecasts(records: Sequence[ForecastRecord], path: str | Path) -> None:
    Path(path).write_text(serialize_forecasts(records), encoding="utf-8")


def round4(value: float) -> float:
    """Round half-even to 4 decimal places (display convention)."""
    return float(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def _fmt(value: float | None) -> str:
    return "   n/a" if value is None else f"{round4(value):.4f}"


def render_report(report: ScoreReport, *, title: str | None = None) -> str:
    """Plain-text score table.  Lower is better for every Brier row."""
    lines = []
    if title:
        lines.append(title)
    lines.append(f"n = {report.n_total} (resolve yes {report.n_yes}, resolve no {report.n_no})")
    lines.append(f"Brier Score           {_fmt(report.brier)}")
    lines.append(f"Brier (resolve yes)   {_fmt(report.brier_yes)}")
    lines.append(f"Brier (resolve no)    {_fmt(report.brier_no)}")
    lines.append(f"Weighted Brier Score  {_fmt(report.weighted_brier)}")
    lines.append(f"Mean prediction       {_fmt(report.mean_prediction)}")
    if report.per_category:
        lines.append("Per category:")
        for cat in Category:
            if cat in report.per_category:
                count, value = report.per_category[cat]
                lines.append(f"  {cat.value:<10} n={count:<4} brier {_fmt(value)}")
    lines.append("Lower is better.")
    return "\n".join(lines) + "\n"


def report_to_dict(report: ScoreReport) -> dict:
    """Full-precision structured dump of a report."""
    return {
        "n_total": report.n_total,
        "n_yes": report.n_yes,
        "n_no": report.n_no,
        "brier": report.brier,
        "brier_yes": report.brier_yes,
        "brier_no": report.brier_no,
        "weighted_brier": report.weighted_brier,
        "mean_prediction": report.mean_prediction,
        "per_category": {
            cat.value: {"count": count, "brier": value}
            for cat, (count, value) in sorted(
                report.per_category.items(), key=lambda kv: kv[0].value
            )
        },
    }
