"""Action-parser prompt: header, session transcript, context-dependent instructions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import dsl, templates
from .errors import PreconditionError

ROLES = ("user", "agent", "developer")
COMMUNICATIVE_CALLS = ("Hint", "Notification")


class InstructionKind(str, enum.Enum):
    ENTITY_PROPERTIES = "EntityProperties"
    POLICY_NOTE = "PolicyNote"


@dataclass(frozen=True)
class ContextInstruction:
    kind: InstructionKind
    body: str
    anchor: int  # index of the statement (within its turn) the instruction follows


@dataclass
class TurnRecord:
    speaker: str
    utterance: str = ""
    statements: list = field(default_factory=list)
    task_index: int = 0
    instructions: list[ContextInstruction] = field(default_factory=list)

    def __post_init__(self):
        if self.speaker not in ROLES:
            raise ValueError(f"unknown speaker {self.speaker!r}")


@dataclass
class SessionTranscript:
    turns: list[TurnRecord] = field(default_factory=list)
    consumed: set[str] = field(default_factory=set)
    _rendered: str | None = field(default=None, repr=False, compare=False)

    def append(self, turn: TurnRecord) -> None:
        self.turns.append(turn)
        self._rendered = None

    def invalidate(self) -> None:
        self._rendered = None

    def render(self) -> str:
        if self._rendered is None:
            self._rendered = render_transcript(self)
        return self._rendered


def _suppressed(stmt, consumed: set[str]) -> bool:
    if isinstance(stmt, dsl.BareCall) and stmt.call.name == "say":
        return True
    return (
        isinstance(stmt, dsl.Assign)
        and stmt.target.attribute is None
        and stmt.target.variable in consumed
        and isinstance(stmt.value, dsl.CallExpr)
        and stmt.value.name in COMMUNICATIVE_CALLS
    )


def _render_instruction(instruction: ContextInstruction) -> list[str]:
    first, *rest = instruction.body.rstrip("\n").split("\n")
    return [f"developer: {first}", *rest]


def render_transcript(transcript: SessionTranscript) -> str:
    """Render turns with their statements; consumed recommendations and say calls are hidden."""
    lines: list[str] = []
    for turn in transcript.turns:
        if turn.speaker != "agent" and turn.utterance:
            lines.append(f"{turn.speaker}: {turn.utterance}")
        anchored = {}
        for instruction in turn.instructions:
            anchored.setdefault(instruction.anchor, []).append(instruction)
        for i, stmt in enumerate(turn.statements):
            if not _suppressed(stmt, transcript.consumed):
                lines.append(dsl.render_statement(stmt))
            for instruction in anchored.get(i, ()):
                lines.extend(_render_instruction(instruction))
        if turn.speaker == "agent" and turn.utterance:
            lines.append(f"agent: {turn.utterance}")
    return "\n".join(lines) + "\n" if lines else ""


def render_entity_instruction(
    entity_type: str,
    properties: Sequence[tuple[str, str]],
    variable: str = "the entity",
    anchor: int = 0,
) -> ContextInstruction:
    if not properties:
        raise PreconditionError("an entity instruction needs at least one property")
    bullets = "\n".join(f"  - {name}: {description}" for name, description in properties)
    body = templates.render("entity_properties", entity_type=entity_type, variable=variable, properties=bullets)
    return ContextInstruction(InstructionKind.ENTITY_PROPERTIES, body, anchor)


def render_policy_note(intent: str, variable: str, anchor: int = 0) -> ContextInstruction:
    body = templates.render("policy_note", intent=intent, variable=variable)
    return ContextInstruction(InstructionKind.POLICY_NOTE, body, anchor)


def assemble_ap_prompt(header: str, transcript: SessionTranscript) -> str:
    rendered = transcript.render()
    if not rendered:
        return header
    return f"{header}\n{rendered}"


def statement_lines(rendered: str) -> Iterable[str]:
    """Lines of a rendered transcript that carry program statements."""
    for line in rendered.splitlines():
        if line.startswith(tuple(f"{r}:" for r in ROLES)) or line.startswith("  ") or not line.strip():
            continue
        yield line
