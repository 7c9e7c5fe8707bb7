"""Tests for the event data model and dataset ingestion."""

import json
import random
from datetime import date, timedelta
from pathlib import Path

import pytest

from foresight.events import (
    Category,
    DatasetSplit,
    DuplicateId,
    Event,
    MalformedRecord,
    MarketSnapshot,
    Resolution,
    UnresolvedEvent,
    active_events,
    load_dataset,
    market_point_prediction,
    outcome_indicator,
    parse_dataset,
    serialize_dataset,
)

FIXTURES = Path(__file__).parent / "fixtures"


def make_event(**overrides):
    base = dict(
        id="e1",
        name="Example",
        condition="Example happens",
        description="An example event.",
        category=Category.MISC,
        created=date(2022, 6, 1),
        expires=date(2022, 12, 31),
    )
    base.update(overrides)
    return Event(**base)


def test_load_small_fixture():
    split = load_dataset(FIXTURES / "events_small.jsonl")
    assert split.label == "events_small"
    assert [e.id for e in split.events] == ["e1", "e2", "e3"]
    e1 = split.event_by_id("e1")
    assert e1.category is Category.COVID19
    assert e1.resolution is Resolution.YES
    assert e1.resolved_at == date(2022, 11, 15)
    assert split.event_by_id("e3").resolution is Resolution.UNRESOLVED
    assert len(split.snapshots_for("e1")) == 2
    assert split.snapshots_for("e3") == ()


def test_event_validation_rejects_bad_lifecycles():
    with pytest.raises(ValueError):
        make_event(created=date(2023, 1, 1))  # created after expires
    with pytest.raises(ValueError):
        make_event(resolution=Resolution.YES)  # resolution without a date
    with pytest.raises(ValueError):
        make_event(resolved_at=date(2022, 7, 1))  # date without a resolution
    with pytest.raises(ValueError):
        make_event(resolved_at=date(2023, 2, 1), resolution=Resolution.NO)  # after expires
    with pytest.raises(ValueError):
        make_event(id="")


def test_snapshot_bounds_checked():
    MarketSnapshot("e1", date(2022, 7, 1), 0.0, 1.0)
    with pytest.raises(ValueError):
        MarketSnapshot("e1", date(2022, 7, 1), 0.6, 0.4)
    with pytest.raises(ValueError):
        MarketSnapshot("e1", date(2022, 7, 1), -0.1, 0.5)
    with pytest.raises(ValueError):
        MarketSnapshot("e1", date(2022, 7, 1), 0.5, 1.2)


def test_split_rejects_orphan_and_out_of_window_snapshots():
    event = make_event()
    with pytest.raises(ValueError):
        DatasetSplit("t", (event,), (MarketSnapshot("ghost", date(2022, 7, 1), 0.1, 0.2),))
    with pytest.raises(ValueError):
        DatasetSplit("t", (event,), (MarketSnapshot("e1", date(2022, 5, 1), 0.1, 0.2),))
    resolved = make_event(resolved_at=date(2022, 9, 1), resolution=Resolution.NO)
    # window closes at resolution, not expiry
    with pytest.raises(ValueError):
        DatasetSplit("t", (resolved,), (MarketSnapshot("e1", date(2022, 10, 1), 0.1, 0.2),))


def test_split_rejects_duplicate_ids():
    with pytest.raises(DuplicateId):
        DatasetSplit("t", (make_event(), make_event()))


def test_parse_rejects_malformed_lines_with_line_numbers():
    good = serialize_dataset(DatasetSplit("t", (make_event(),))).strip()
    cases = [
        "not json",
        "[1, 2]",
        json.dumps({"id": "x"}),
        good.replace('"misc"', '"politics"'),
        good.replace('"resolution": null', '"resolution": "maybe"'),
        good.replace('"2022-06-01"', '"June first"'),
    ]
    for bad in cases:
        with pytest.raises(MalformedRecord) as info:
            parse_dataset(good + "\n" + bad + "\n")
        assert info.value.line == 2

    with pytest.raises(DuplicateId):
        parse_dataset(good + "\n" + good + "\n")


def test_parse_rejects_unknown_fields():
    record = json.loads(serialize_dataset(DatasetSplit("t", (make_event(),))))
    record["surprise"] = 1
    with pytest.raises(MalformedRecord):
        parse_dataset(json.dumps(record))


def test_blank_lines_are_skipped():
    text = serialize_dataset(DatasetSplit("t", (make_event(),)))
    split = parse_dataset("\n" + text + "\n\n")
    assert len(split.events) == 1


def test_serialize_round_trip_is_stable():
    split = load_dataset(FIXTURES / "events_small.jsonl")
    text = serialize_dataset(split)
    again = parse_dataset(text, label=split.label)
    assert again == split
    assert serialize_dataset(again) == text


def test_round_trip_random_datasets():
    rng = random.Random(407)
    for _ in range(25):
        events = []
        snapshots = []
        for i in range(rng.randrange(1, 8)):
            created = date(2022, 1, 1) + timedelta(days=rng.randrange(0, 90))
            expires = created + timedelta(days=rng.randrange(30, 400))
            resolved_at = None
            resolution = Resolution.UNRESOLVED
            if rng.random() < 0.5:
                span = (expires - created).days
                resolved_at = created + timedelta(days=rng.randrange(0, span + 1))
                resolution = rng.choice([Resolution.YES, Resolution.NO])
            event = Event(
                id=f"ev-{i}",
                name=f"Event {i}",
                condition=f"Condition {i} holds",
                description="Synthetic event for round-trip checks.",
                category=rng.choice(list(Category)),
                created=created,
                expires=expires,
                resolved_at=resolved_at,
                resolution=resolution,
            )
            events.append(event)
            last = resolved_at if resolved_at is not None else expires
            for _ in range(rng.randrange(0, 3)):
                day = created + timedelta(days=rng.randrange(0, (last - created).days + 1))
                lo = round(rng.random() * 0.5, 3)
                hi = round(lo + rng.random() * (1 - lo), 3)
                snapshots.append(MarketSnapshot(event.id, day, lo, hi))
        split = DatasetSplit("rand", tuple(events), tuple(snapshots))
        text = serialize_dataset(split)
        again = parse_dataset(text, label="rand")
        assert again.events == split.events
        assert sorted(again.snapshots, key=lambda s: (s.event_id, s.date)) == sorted(
            split.snapshots, key=lambda s: (s.event_id, s.date)
        )
        assert serialize_dataset(again) == text


def test_active_window_boundaries():
    split = load_dataset(FIXTURES / "events_small.jsonl")
    # e1: created 2022-06-01, resolved 2022-11-15, expires 2022-12-31
    assert "e1" in {e.id for e in active_events(split, date(2022, 6, 1))}
    assert "e1" not in {e.id for e in active_events(split, date(2022, 5, 31))}
    assert "e1" in {e.id for e in active_events(split, date(2022, 11, 14))}
    # resolving on the query date closes the event
    assert "e1" not in {e.id for e in active_events(split, date(2022, 11, 15))}
    # e3 expires 2024-01-01 and never resolves
    assert "e3" in {e.id for e in active_events(split, date(2023, 12, 31))}
    assert "e3" not in {e.id for e in active_events(split, date(2024, 1, 1))}


def test_active_events_preserve_split_order():
    split = load_dataset(FIXTURES / "events_val.jsonl")
    ids = [e.id for e in active_events(split, date(2022, 8, 1))]
    assert ids == [f"evt-{i:02d}" for i in range(1, 11)]


def test_active_random_agrees_with_direct_predicate():
    rng = random.Random(11)
    split = load_dataset(FIXTURES / "events_small.jsonl")
    start = date(2022, 1, 1)
    for _ in range(200):
        on = start + timedelta(days=rng.randrange(0, 700))
        expected = {
            e.id
            for e in split.events
            if e.created <= on
            and (e.resolved_at is None or e.resolved_at > on)
            and e.expires > on
        }
        assert {e.id for e in active_events(split, on)} == expected


def test_market_point_prediction_is_midpoint():
    snap = MarketSnapshot("e1", date(2022, 8, 1), 0.55, 0.65)
    assert market_point_prediction(snap) == pytest.approx(0.6)
    rng = random.Random(2)
    for _ in range(100):
        lo = rng.random()
        hi = lo + rng.random() * (1 - lo)
        got = market_point_prediction(MarketSnapshot("x", date(2022, 1, 1), lo, hi))
        assert got == (lo + hi) / 2.0


def test_outcome_indicator():
    yes = make_event(resolved_at=date(2022, 9, 1), resolution=Resolution.YES)
    no = make_event(resolved_at=date(2022, 9, 1), resolution=Resolution.NO)
    assert outcome_indicator(yes) == 1
    assert outcome_indicator(no) == 0
    with pytest.raises(UnresolvedEvent):
        outcome_indicator(make_event())


def test_snapshot_lookup_helpers():
    split = load_dataset(FIXTURES / "events_small.jsonl")
    snap = split.snapshot_on("e1", date(2022, 8, 1))
    assert snap is not None and (snap.lower, snap.upper) == (0.55, 0.65)
    assert split.snapshot_on("e1", date(2022, 8, 2)) is None
    assert split.snapshot_on("nope", date(2022, 8, 1)) is None
