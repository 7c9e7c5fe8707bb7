"""Prompt template registry, placeholder rendering, and probability extraction."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from datetime import date
from enum import Enum
from functools import lru_cache
from importlib import resources
from types import MappingProxyType
from typing import Mapping, Sequence

from .events import Event
from .llm import BackendError, CompletionBackend, CompletionRequest, complete
from .metrics import EmptyInput

__all__ = [
    "EXTRACTION_TEMPLATE_ID",
    "FORECASTER_SLOT",
    "ExtractionDetail",
    "ExtractionFailed",
    "NegativeWindow",
    "NoProbabilityFound",
    "PromptTemplate",
    "RenderContext",
    "Scale",
    "TemplateError",
    "UnboundPlaceholder",
    "aggregate_probabilities",
    "days_remaining",
    "extract_probability",
    "forecaster_preamble",
    "get_template",
    "load_templates",
    "parse_probability",
    "render",
    "substitute",
]

# Slot inlined at load time so rendered prompts never carry it.
FORECASTER_SLOT = "[Forecaster Text]"

EXTRACTION_TEMPLATE_ID = "extract/probability"

_PREAMBLE_FILE = "forecaster_preamble.txt"
_META_KEYS = frozenset({"placeholders", "scale"})


class TemplateError(ValueError):
    """Raised when the template registry is malformed or an id is unknown."""


class UnboundPlaceholder(ValueError):
    """Raised when a template is rendered without all declared placeholders."""

    def __init__(self, template_id: str, missing: Sequence[str]):
        self.template_id = template_id
        self.missing = tuple(missing)
        names = ", ".join(self.missing)
        super().__init__(f"template {template_id!r} missing bindings: {names}")


class NoProbabilityFound(ValueError):
    """Raised when free text contains no usable probability."""

    def __init__(self, text: str):
        self.text = text
        super().__init__(f"no probability found in {_preview(text)!r}")


class ExtractionFailed(RuntimeError):
    """Raised when both the extraction prompt and the fallback parser fail."""

    def __init__(self, raw: str, reason: str):
        self.raw = raw
        self.reason = reason
        super().__init__(f"could not extract probability from {_preview(raw)!r}: {reason}")


class NegativeWindow(ValueError):
    """Raised when the prediction date does not precede the expiry date."""

    def __init__(self, today: date, expiry: date):
        self.today = today
        self.expiry = expiry
        super().__init__(f"no days remain before expiry: {today.isoformat()} >= {expiry.isoformat()}")


def _preview(text: str, limit: int = 80) -> str:
    return text if len(text) <= limit else text[: limit - 3] + "..."


class Scale(Enum):
    """Scale a prediction template asks its answer on."""

    PERCENT = "percent"
    UNIT = "unit"


@dataclass(frozen=True)
class PromptTemplate:
    """A single prompt body with its declared placeholders."""

    template_id: str
    body: str
    placeholders: tuple[str, ...]
    scale: Scale = Scale.PERCENT

    def __post_init__(self):
        if not self.body:
            raise TemplateError(f"template {self.template_id!r} has an empty body")
        if len(set(self.placeholders)) != len(self.placeholders):
            raise TemplateError(f"template {self.template_id!r} declares duplicate placeholders")
        for name in self.placeholders:
            if f"[{name}]" not in self.body:
                raise TemplateError(
                    f"template {self.template_id!r} declares placeholder {name!r} absent from its body"
                )


def _strip_one_newline(text: str) -> str:
    # Files end with a single newline that is not part of the prompt.
    return text[:-1] if text.endswith("\n") else text


def _template_root():
    return resources.files(__package__) / "templates"


@lru_cache(maxsize=1)
def _load_preamble() -> str:
    return _strip_one_newline((_template_root() / _PREAMBLE_FILE).read_text(encoding="utf-8"))


def forecaster_preamble() -> str:
    """The persona text inlined wherever a template carries the forecaster slot."""
    return _load_preamble()


@lru_cache(maxsize=1)
def load_templates() -> Mapping[str, PromptTemplate]:
    """Load every packaged template, keyed by '<group>/<step>'."""
    preamble = _load_preamble()
    registry: dict[str, PromptTemplate] = {}
    for entry in sorted(_template_root().iterdir(), key=lambda item: item.name):
        if not entry.is_dir():
            continue
        for item in sorted(entry.iterdir(), key=lambda child: child.name):
            if not item.name.endswith(".txt"):
                continue
            stem = item.name[: -len(".txt")]
            template_id = f"{entry.name}/{stem}"
            try:
                meta = json.loads((entry / f"{stem}.json").read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise TemplateError(f"template {template_id!r} has no metadata file") from None
            except json.JSONDecodeError as exc:
                raise TemplateError(f"template {template_id!r} has invalid metadata: {exc}") from None
            if not isinstance(meta, dict) or not _META_KEYS.issuperset(meta):
                raise TemplateError(f"template {template_id!r} has unexpected metadata keys")
            try:
                scale = Scale(meta.get("scale", Scale.PERCENT.value))
            except ValueError:
                raise TemplateError(
                    f"template {template_id!r} has unknown scale {meta.get('scale')!r}"
                ) from None
            body = _strip_one_newline(item.read_text(encoding="utf-8"))
            body = body.replace(FORECASTER_SLOT, preamble)
            registry[template_id] = PromptTemplate(
                template_id=template_id,
                body=body,
                placeholders=tuple(meta.get("placeholders", ())),
                scale=scale,
            )
    if not registry:
        raise TemplateError("no templates found in package data")
    return MappingProxyType(registry)


def get_template(template_id: str) -> PromptTemplate:
    try:
        return load_templates()[template_id]
    except KeyError:
        raise TemplateError(f"unknown template id: {template_id!r}") from None


def days_remaining(today: date, expiry: date) -> int:
    """Whole days from the prediction date to expiry; must be positive."""
    days = (expiry - today).days
    if days <= 0:
        raise NegativeWindow(today, expiry)
    return days


@dataclass(frozen=True)
class RenderContext:
    """An event paired with the date the prediction is made on."""

    event: Event
    today: date

    def bindings(self) -> dict[str, str]:
        """Standard placeholder bindings shared by every chain step."""
        event = self.event
        return {
            "name": event.name,
            "condition": event.condition,
            "description": event.description,
            "expiry": event.expires.isoformat(),
            "today": self.today.isoformat(),
            "number of days": str(days_remaining(self.today, event.expires)),
        }


def substitute(body: str, bindings: Mapping[str, str]) -> str:
    """Replace every [key] token in a single pass.

    Substituted values are never rescanned, so bracketed text inside event
    descriptions or model replies stays literal.
    """
    if not bindings:
        return body
    keys = sorted(bindings, key=len, reverse=True)
    pattern = re.compile("|".join(re.escape(f"[{key}]") for key in keys))
    return pattern.sub(lambda m: bindings[m.group(0)[1:-1]], body)


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Render a template, requiring every declared placeholder to be bound."""
    missing = [name for name in template.placeholders if name not in bindings]
    if missing:
        raise UnboundPlaceholder(template.template_id, missing)
    return substitute(template.body, bindings)


# A number with optional percent sign, not embedded in a word, identifier,
# date, version string, or signed value. A trailing sentence period is fine.
_NUMBER = re.compile(r"(?<![\w.\-])(\d+(?:\.\d+)?|\.\d+)(%?)(?![\w%\-])(?!\.\d)")
_THOUSANDS_COMMA = re.compile(r"(?<=\d),(?=\d)")


def parse_probability(text: str, *, scale: Scale = Scale.PERCENT) -> float:
    """Pull the last usable probability out of free text.

    Numbers with a percent sign are divided by 100. Bare numbers above 1 are
    treated as percentages only when the template asked for a percentage.
    """
    cleaned = _THOUSANDS_COMMA.sub("", text)
    found = None
    for match in _NUMBER.finditer(cleaned):
        value = float(match.group(1))
        if match.group(2):
            value /= 100.0
        elif value > 1.0:
            if scale is Scale.PERCENT and value <= 100.0:
                value /= 100.0
            else:
                continue
        if 0.0 <= value <= 1.0:
            found = value
    if found is None:
        raise NoProbabilityFound(text)
    return found


@dataclass(frozen=True)
class ExtractionDetail:
    """How one sample's probability was obtained."""

    prompt: str | None
    response: str | None
    fallback_used: bool
    error: str | None = None


def extract_probability(
    raw: str,
    *,
    scale: Scale,
    extractor: CompletionBackend | None = None,
) -> tuple[float, ExtractionDetail]:
    """Turn one raw model reply into a probability.

    When an extractor backend is given, an extraction prompt is tried first
    and its reply parsed on the unit scale. Any failure on that route falls
    back to parsing the raw reply directly.
    """
    prompt = None
    response = None
    error = None
    if extractor is not None:
        template = get_template(EXTRACTION_TEMPLATE_ID)
        prompt = render(template, {"response": raw})
        request = CompletionRequest(prompt=prompt, n_samples=1)
        try:
            result = complete(extractor, request)
        except BackendError as exc:
            error = f"extractor backend failed: {exc}"
        else:
            response = result.texts[0]
            try:
                value = parse_probability(response, scale=template.scale)
            except NoProbabilityFound:
                error = f"extractor reply had no probability: {_preview(response)!r}"
            else:
                return value, ExtractionDetail(prompt, response, fallback_used=False)
    try:
        value = parse_probability(raw, scale=scale)
    except NoProbabilityFound as exc:
        reason = str(exc) if error is None else f"{error}; {exc}"
        raise ExtractionFailed(raw, reason) from None
    return value, ExtractionDetail(prompt, response, fallback_used=True, error=error)


def aggregate_probabilities(values: Sequence[float]) -> float:
    """Mean of sampled probabilities, accumulated exactly before dividing."""
    samples = tuple(float(value) for value in values)
    if not samples:
        raise EmptyInput("no probabilities to aggregate")
    for value in samples:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probability out of range: {value!r}")
    return math.fsum(samples) / len(samples)
