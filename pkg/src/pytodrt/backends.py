"""Completion backends behind one ``complete(LmRequest) -> str`` contract.

``OracleBackend`` answers from a fingerprinted answer book, ``ScriptedGoldBackend``
answers from gold annotations and ``HttpBackend`` talks to a completion server.
"""

from __future__ import annotations

import enum
import hashlib
import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

from .errors import BackendError, MissingAnswer, ScenarioExhausted
from .supervisors import TemplateId


class Purpose(str, enum.Enum):
    ACTION_PARSE = "ActionParse"
    SCHEMA_SUPERVISION = "SchemaSupervision"
    PARSER_SUPERVISION = "ParserSupervision"


@dataclass(frozen=True)
class LmRequest:
    prompt: str
    purpose: Purpose
    max_answer_tokens: int = 64
    # Structured hints for deterministic test backends; real models ignore it.
    context: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.purpose == Purpose.SCHEMA_SUPERVISION and self.max_answer_tokens != 1:
            raise ValueError("schema supervision decodes a single token")


def fingerprint(purpose: Purpose | str, prompt: str) -> str:
    purpose = Purpose(purpose)
    return hashlib.sha256(f"{purpose.value}\n{prompt}".encode("utf-8")).hexdigest()


class Backend(Protocol):
    name: str

    def complete(self, request: LmRequest) -> str: ...


class OracleBackend:
    name = "oracle"

    def __init__(self, answer_book: Mapping[str, str]):
        self.answer_book = dict(answer_book)

    def complete(self, request: LmRequest) -> str:
        key = fingerprint(request.purpose, request.prompt)
        try:
            return self.answer_book[key]
        except KeyError:
            raise MissingAnswer(f"no answer for {request.purpose.value} prompt {key[:12]}") from None

    @classmethod
    def load(cls, path) -> "OracleBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def oracle_backend(answer_book: Mapping[str, str]) -> OracleBackend:
    return OracleBackend(answer_book)


@dataclass
class GoldTurn:
    statements: list[str]
    slot_values: dict[str, list[str]] = field(default_factory=dict)


@dataclass
class GoldScenario:
    turns: list[GoldTurn] = field(default_factory=list)

    def to_json(self) -> list[dict]:
        return [{"statements": t.statements, "slot_values": t.slot_values} for t in self.turns]

    @classmethod
    def from_json(cls, rows) -> "GoldScenario":
        return cls([GoldTurn(list(r["statements"]), dict(r.get("slot_values", {}))) for r in rows])


class ScriptedGoldBackend:
    """Answers every purpose from the gold annotations of the requesting turn.

    Requests must carry ``context["turn_index"]``; the backend keeps no cursor so
    it is safe to share.
    """

    name = "scripted-gold"

    def __init__(self, scenario: GoldScenario):
        self.scenario = scenario

    def _turn(self, request: LmRequest) -> GoldTurn:
        index = request.context.get("turn_index")
        if index is None or not 0 <= index < len(self.scenario.turns):
            raise ScenarioExhausted(f"no gold annotations for user turn {index}")
        return self.scenario.turns[index]

    def complete(self, request: LmRequest) -> str:
        turn = self._turn(request)
        if request.purpose == Purpose.ACTION_PARSE:
            return "\n".join(turn.statements)
        if request.purpose == Purpose.SCHEMA_SUPERVISION:
            return self._choose(turn, request.context)
        answers = []
        for slot in request.context.get("slots", ()):
            values = turn.slot_values.get(slot)
            answers.append(values[0] if values else "none")
        return "\n".join(answers)

    @staticmethod
    def _choose(turn: GoldTurn, ctx: Mapping[str, Any]) -> str:
        labels: Sequence[str] = ctx["labels"]
        targets: Sequence[str | None] = ctx["targets"]
        if ctx["template_id"] == TemplateId.CATEGORICAL_VALUE_ONLY.value:
            wanted = set(turn.slot_values.get(ctx["predicted_slot"], ()))
            hits = [label for label, t in zip(labels, targets) if t in wanted]
        else:
            value = str(ctx["value"])
            hits = [label for label, t in zip(labels, targets) if t is not None and value in turn.slot_values.get(t, ())]
        if hits:
            return hits[0]
        none = [label for label, t in zip(labels, targets) if t is None]
        return none[0] if none else labels[0]


def scripted_gold_backend(scenario: GoldScenario) -> ScriptedGoldBackend:
    return ScriptedGoldBackend(scenario)


class HttpBackend:
    """POST ``{"prompt", "max_tokens"}`` to ``url`` and read ``{"text"}`` back."""

    name = "http"

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def complete(self, request: LmRequest) -> str:
        body = json.dumps({"prompt": request.prompt, "max_tokens": request.max_answer_tokens}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise BackendError(f"completion request to {self.url} failed: {exc}") from exc
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise BackendError(f"malformed completion response from {self.url}")
        return payload["text"]
