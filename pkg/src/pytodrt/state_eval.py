"""Dialogue-state extraction and joint goal accuracy.

``jga`` counts user turns whose predicted state matches gold. ``c_jga`` only
credits a turn when every earlier turn of the same task was also correct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .engine import ExecutionContext
from .environment import ApiInstance
from .errors import FormatError, LengthMismatch, MissingPredictions, OrderError
from .normalization import NormalizationTable
from .schema import SchemaCatalog, ServiceSchema

NO_INTENT = "NONE"


@dataclass(frozen=True)
class DialogueState:
    active_intent: str | None = None
    slot_values: Mapping[str, frozenset[str]] = field(default_factory=dict)
    requested_slots: frozenset[str] = frozenset()

    def __post_init__(self):
        for slot, values in self.slot_values.items():
            if not values:
                raise ValueError(f"empty value set for slot {slot!r}")

    def to_json(self) -> dict:
        return {
            "active_intent": self.active_intent,
            "slot_values": {k: sorted(v) for k, v in sorted(self.slot_values.items())},
            "requested_slots": sorted(self.requested_slots),
        }

    @classmethod
    def from_json(cls, raw: Mapping) -> "DialogueState":
        return cls(
            raw.get("active_intent"),
            {k: frozenset(v) for k, v in raw.get("slot_values", {}).items()},
            frozenset(raw.get("requested_slots", ())),
        )


def _extend(slot: str, values: Iterable[str], table: NormalizationTable | None) -> frozenset[str]:
    out = {v.strip() for v in values}
    if table is not None:
        out |= {table.canonical(slot, v) for v in out}
    return frozenset(out)


def extract_state(
    ctx: ExecutionContext,
    schema: ServiceSchema | None = None,
    table: NormalizationTable | None = None,
    requested: Iterable[str] = (),
) -> DialogueState:
    """State of the most recent API (of ``schema``'s service when given)."""
    api = None
    for name in reversed(ctx.api_order):
        candidate = ctx.bindings[name]
        if schema is None or candidate.service.service_name == schema.service_name:
            api = candidate
            break
    if not isinstance(api, ApiInstance):
        return DialogueState()
    values = {slot: _extend(slot, [value], table) for slot, value in api.slot_values.items()}
    return DialogueState(api.name, values, frozenset(requested))


def gold_state_from_frame(frame: Mapping, table: NormalizationTable | None = None) -> DialogueState:
    try:
        state = frame["state"]
        intent = state["active_intent"]
        slot_values = state.get("slot_values", {})
    except (KeyError, TypeError) as exc:
        raise FormatError(f"frame for {frame.get('service', '?')} lacks a state") from exc
    values = {slot: _extend(slot, vals, table) for slot, vals in slot_values.items() if vals}
    return DialogueState(
        None if intent == NO_INTENT else intent,
        values,
        frozenset(state.get("requested_slots", ())),
    )


# -- correctness ----------------------------------------------------------


def turn_correct(pred: DialogueState, gold: DialogueState) -> bool:
    if pred.active_intent != gold.active_intent:
        return False
    if set(pred.slot_values) != set(gold.slot_values):
        return False
    # Both sides carry surface and canonical alternatives; one shared form is a match.
    return all(pred.slot_values[slot] & gold.slot_values[slot] for slot in pred.slot_values)


def jga(pred: Sequence[DialogueState], gold: Sequence[DialogueState]) -> Fraction:
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predicted states for {len(gold)} gold states")
    if not gold:
        return Fraction(1)
    return Fraction(sum(turn_correct(p, g) for p, g in zip(pred, gold)), len(gold))


@dataclass(frozen=True)
class TurnEval:
    turn_index: int
    task_index: int
    correct: bool
    service: str = ""
    seen: bool = False
    dialogue_id: str = ""


def cjga_contributions(turns: Sequence[TurnEval]) -> list[bool]:
    contributions = []
    broken: set[int] = set()
    last_task = None
    for turn in turns:
        if last_task is not None and turn.task_index < last_task:
            raise OrderError(f"task_index decreases from {last_task} to {turn.task_index}")
        last_task = turn.task_index
        if not turn.correct:
            broken.add(turn.task_index)
        contributions.append(turn.correct and turn.task_index not in broken)
    return contributions


def c_jga(turns: Sequence[TurnEval]) -> Fraction:
    contributions = cjga_contributions(turns)
    if not contributions:
        return Fraction(1)
    return Fraction(sum(contributions), len(contributions))


def _jga_of(turns: Sequence[TurnEval]) -> Fraction:
    return Fraction(sum(t.correct for t in turns), len(turns)) if turns else Fraction(1)


# -- reporting ------------------------------------------------------------


@dataclass
class MetricsReport:
    jga_overall: Fraction | None
    jga_seen: Fraction | None
    jga_unseen: Fraction | None
    cjga_overall: Fraction | None
    cjga_seen: Fraction | None
    cjga_unseen: Fraction | None
    turn_count: dict[str, int]
    per_service: dict[str, dict] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        def fmt(value):
            return None if value is None else {"value": float(value), "exact": f"{value.numerator}/{value.denominator}"}

        return {
            "jga_overall": fmt(self.jga_overall),
            "jga_seen": fmt(self.jga_seen),
            "jga_unseen": fmt(self.jga_unseen),
            "cjga_overall": fmt(self.cjga_overall),
            "cjga_seen": fmt(self.cjga_seen),
            "cjga_unseen": fmt(self.cjga_unseen),
            "turn_count": dict(self.turn_count),
            "per_service": {
                name: {
                    "seen": row["seen"],
                    "turns": row["turns"],
                    "jga": fmt(row["jga"]),
                    "cjga": fmt(row["cjga"]),
                }
                for name, row in sorted(self.per_service.items())
            },
            "notes": list(self.notes),
        }


def _bucket(turns: Sequence[TurnEval], contributions: Sequence[bool]):
    if not turns:
        return None, None
    return _jga_of(turns), Fraction(sum(contributions), len(contributions))


def report_from_turns(turns: Sequence[TurnEval]) -> MetricsReport:
    contributions = cjga_contributions(turns)
    pairs = list(zip(turns, contributions))

    def select(pred):
        chosen = [(t, c) for t, c in pairs if pred(t)]
        return [t for t, _ in chosen], [c for _, c in chosen]

    overall = _bucket(*select(lambda t: True))
    seen = _bucket(*select(lambda t: t.seen))
    unseen = _bucket(*select(lambda t: not t.seen))
    per_service = {}
    for name in sorted({t.service for t in turns}):
        bucket_turns, bucket_contrib = select(lambda t, name=name: t.service == name)
        j, c = _bucket(bucket_turns, bucket_contrib)
        per_service[name] = {"seen": bucket_turns[0].seen, "turns": len(bucket_turns), "jga": j, "cjga": c}
    return MetricsReport(
        overall[0],
        seen[0],
        unseen[0],
        overall[1],
        seen[1],
        unseen[1],
        {
            "overall": len(turns),
            "seen": sum(t.seen for t in turns),
            "unseen": sum(not t.seen for t in turns),
        },
        per_service,
        ["requested_slots are extracted but excluded from correctness"],
    )


# -- SGD dialogues --------------------------------------------------------


def user_frames(dialogue: Mapping) -> list[tuple[int, Mapping]]:
    """(turn position, evaluated frame) for every user turn of an SGD dialogue.

    A turn with several frames is scored on the frame whose state changed,
    falling back to the first one."""
    out = []
    previous: dict[str, dict] = {}
    dialogue_id = dialogue.get("dialogue_id", "?")
    for position, turn in enumerate(dialogue.get("turns", ())):
        if turn.get("speaker") != "USER":
            continue
        frames = turn.get("frames")
        if not isinstance(frames, list) or not frames:
            raise FormatError(f"dialogue {dialogue_id}: user turn {position} has no frames")
        chosen = frames[0]
        for frame in frames:
            if "service" not in frame or "state" not in frame:
                raise FormatError(f"dialogue {dialogue_id}: malformed frame in turn {position}")
            if frame["state"] != previous.get(frame["service"]):
                chosen = frame
                break
        for frame in frames:
            previous[frame["service"]] = frame["state"]
        out.append((position, chosen))
    return out


def build_normalization_table(dialogues: Iterable[Mapping]) -> NormalizationTable:
    """Pair surface slot values with the canonical values of the co-turn service call.

    A user frame without its own ``service_call`` is paired with the call
    made for the same service at the following system turn."""
    table = NormalizationTable()
    for dialogue in dialogues:
        dialogue_id = dialogue.get("dialogue_id", "?")
        turns = dialogue.get("turns")
        if not isinstance(turns, list):
            raise FormatError(f"dialogue {dialogue_id}: turns missing")
        for position, turn in enumerate(turns):
            for frame in turn.get("frames", ()):
                if not isinstance(frame, Mapping) or "service" not in frame:
                    raise FormatError(f"dialogue {dialogue_id}: malformed frame in turn {position}")
                state = frame.get("state")
                if state is None:
                    continue
                call = frame.get("service_call")
                if call is None and position + 1 < len(turns):
                    for nxt in turns[position + 1].get("frames", ()):
                        if nxt.get("service") == frame["service"] and nxt.get("service_call"):
                            call = nxt["service_call"]
                            break
                if not call:
                    continue
                params = call.get("parameters", {})
                for slot, surfaces in state.get("slot_values", {}).items():
                    if slot not in params:
                        continue
                    for surface in surfaces:
                        if surface != params[slot]:
                            table.add(slot, surface, params[slot])
    return table


def task_indices(intents: Sequence[str | None], start: int = 0) -> list[int]:
    """A new task starts whenever the gold active intent changes."""
    out = []
    index = start - 1
    previous = object()
    for intent in intents:
        if intent != previous:
            index += 1
            previous = intent
        out.append(index)
    return out


def gold_turns(dialogue: Mapping, table: NormalizationTable | None = None) -> list[tuple[str, DialogueState]]:
    return [(frame["service"], gold_state_from_frame(frame, table)) for _, frame in user_frames(dialogue)]


def evaluate(
    dialogues: Sequence[Mapping],
    predictions: Mapping[str, Sequence],
    catalog: SchemaCatalog,
    table: NormalizationTable | None = None,
) -> MetricsReport:
    """Score predictions (dialogue id -> per-user-turn states) against gold dialogues."""
    turns: list[TurnEval] = []
    next_task = 0
    for dialogue in sorted(dialogues, key=lambda d: d["dialogue_id"]):
        dialogue_id = dialogue["dialogue_id"]
        if dialogue_id not in predictions:
            raise MissingPredictions(f"no predictions for dialogue {dialogue_id}")
        gold = gold_turns(dialogue, table)
        pred = [p if isinstance(p, DialogueState) else DialogueState.from_json(p) for p in predictions[dialogue_id]]
        if len(pred) != len(gold):
            raise LengthMismatch(f"dialogue {dialogue_id}: {len(pred)} predictions for {len(gold)} user turns")
        tasks = task_indices([g.active_intent for _, g in gold], next_task)
        if tasks:
            next_task = tasks[-1] + 1
        for i, ((service, g), p, task) in enumerate(zip(gold, pred, tasks)):
            turns.append(TurnEval(i, task, turn_correct(p, g), service, catalog.is_seen(service), dialogue_id))
    return report_from_turns(turns)
