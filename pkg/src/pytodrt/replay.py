"""Replay SGD dialogues through the dialogue manager.

Pass one derives a gold program for every user turn by executing candidate
statements directly and patching until the API state equals the annotated
state. Pass two feeds a fresh session through the DM with the configured
backend (for scripted-gold, the pass-one programs are the parser output).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import dsl
from .backends import GoldScenario, GoldTurn, ScriptedGoldBackend
from .dialogue_manager import Backends, CorrectionEvent, DialogueManager, PromptLogEntry
from .engine import ExecutionContext, execute
from .environment import TERMINAL, ApiInstance, Database, OfferIntent, Phase, confirmation_values
from .errors import BackendError, PytodError
from .normalization import NormalizationTable
from .schema import BOOLEAN, INTEGER, SchemaCatalog, ServiceSchema
from .session import DialogueSession
from .state_eval import DialogueState, _extend, extract_state, gold_state_from_frame, user_frames


class ReplayError(PytodError):
    """Gold annotations could not be expressed as a valid program."""


@dataclass
class DialogueRun:
    dialogue_id: str
    predictions: list[DialogueState] = field(default_factory=list)
    transcript: str = ""
    prompt_log: list[PromptLogEntry] = field(default_factory=list)
    corrections: list[tuple[int, CorrectionEvent]] = field(default_factory=list)
    gold_programs: list[list[str]] = field(default_factory=list)
    aborted: str | None = None
    backend_failure: bool = False


def _acts(turn: Mapping) -> list[Mapping]:
    return [act for frame in turn.get("frames", ()) for act in frame.get("actions", ())]


def _act_names(turn: Mapping) -> set[str]:
    return {act.get("act") for act in _acts(turn)}


def _typed_literal(schema: ServiceSchema, slot: str, text: str) -> dsl.Literal:
    spec = schema.slot(slot) if schema.has_slot(slot) else None
    if spec is not None and spec.data_type == INTEGER:
        try:
            return dsl.Literal(int(text))
        except ValueError:
            pass
    if spec is not None and spec.data_type == BOOLEAN and text in ("True", "False"):
        return dsl.Literal(text == "True")
    return dsl.Literal(text)


def _latest_api(ctx: ExecutionContext, service: str) -> tuple[str | None, ApiInstance | None]:
    for name in reversed(ctx.api_order):
        api = ctx.bindings[name]
        if api.service.service_name == service:
            return name, api
    return None, None


class _Walker:
    """Iterates a dialogue, calling back for user turns and running agent turns."""

    def __init__(self, dialogue: Mapping, session: DialogueSession, table: NormalizationTable | None):
        self.dialogue = dialogue
        self.session = session
        self.table = table
        self.frames = dict(user_frames(dialogue))
        self.predictions: list[DialogueState] = []

    def run(self, user_step: Callable[[int, Mapping, Mapping], None]) -> list[DialogueState]:
        turns = self.dialogue["turns"]
        predictions = self.predictions
        index = 0
        for position, turn in enumerate(turns):
            if turn.get("speaker") == "USER":
                frame = self.frames[position]
                offered = [
                    act["values"][0]
                    for act in (_acts(turns[position + 1]) if position + 1 < len(turns) else ())
                    if act.get("act") == "OFFER_INTENT" and act.get("values")
                ]
                self.session.ctx.pending_extras = [OfferIntent(intent=offered[0])] if offered else []
                user_step(index, turn, frame)
                self.session.ctx.pending_extras = []
                schema = self.session.catalog.services[frame["service"]]
                predictions.append(extract_state(self.session.ctx, schema, self.table))
                index += 1
            else:
                frames = turn.get("frames") or [{}]
                service = frames[0].get("service")
                if service in self.session.catalog.services:
                    self.session.agent_turn(service, turn.get("utterance", ""), offer="OFFER" in _act_names(turn))
        return predictions


def derive_turn_program(
    session: DialogueSession,
    frame: Mapping,
    user_acts: set[str],
    table: NormalizationTable | None = None,
) -> list[dsl.Statement]:
    """Statements that take the session's API state to the annotated state of ``frame``."""
    gold = gold_state_from_frame(frame, table)
    if gold.active_intent is None:
        return []
    schema = session.catalog.services[frame["service"]]
    if not schema.has_intent(gold.active_intent):
        raise ReplayError(f"{gold.active_intent} is not an intent of {schema.service_name}")
    intent = schema.intent(gold.active_intent)
    first = {slot: values[0] for slot, values in frame["state"].get("slot_values", {}).items() if values}
    ctx = session.ctx.snapshot()
    env = session.env_for(schema.service_name)
    program: list[dsl.Statement] = []

    def run(stmt):
        outcome = execute(stmt, ctx, env)
        if not outcome.ok:
            raise ReplayError(f"gold statement {dsl.render_statement(stmt)} failed: {outcome.errors[0]}")
        program.append(stmt)

    def matches(slot, value):
        return slot in gold.slot_values and bool(_extend(slot, [value], table) & gold.slot_values[slot])

    api_var, api = _latest_api(ctx, schema.service_name)
    entity_var = None
    if "SELECT" in user_acts:
        entity_var = session.last_entity(schema.service_name)
    fresh = (
        api is None
        or api.name != intent.name
        or (api.phase in TERMINAL and any(not matches(s, v) for s, v in api.slot_values.items()))
        or (api.phase in TERMINAL and set(api.slot_values) != set(gold.slot_values))
    )
    if fresh:
        props = ctx.bindings[entity_var].properties if entity_var else {}
        kwargs = tuple(
            (slot, _typed_literal(schema, slot, value))
            for slot, value in first.items()
            if not (slot in intent.parameters and slot in props and matches(slot, props[slot]))
        )
        api_var = ctx.peek_variable()
        run(dsl.Assign(dsl.Target(api_var), dsl.CallExpr(intent.name, (), kwargs)))
    if entity_var is not None:
        run(dsl.Assign(dsl.Target(ctx.peek_variable()), dsl.call("select", dsl.VarRef(entity_var))))
    api = ctx.bindings[api_var]
    will_confirm = "AFFIRM" in user_acts and intent.is_transactional
    merged = dict(api.slot_values)
    if will_confirm:
        for slot, value in confirmation_values(api).items():
            merged.setdefault(slot, value)
    for slot, value in first.items():
        if slot not in merged or not matches(slot, merged[slot]):
            run(dsl.Assign(dsl.Target(api_var, slot), _typed_literal(schema, slot, value)))
    for slot in list(api.slot_values):
        if slot not in gold.slot_values:
            run(dsl.Assign(dsl.Target(api_var, slot), dsl.Literal("")))
    if will_confirm and api.phase == Phase.AWAITING_CONFIRMATION and not api.confirmed:
        run(dsl.Assign(dsl.Target(ctx.peek_variable()), dsl.call("confirm", dsl.VarRef(api_var))))
    return program


def derive_gold_programs(
    dialogue: Mapping,
    catalog: SchemaCatalog,
    databases: Mapping[str, Database],
    table: NormalizationTable | None = None,
) -> tuple[GoldScenario, list[DialogueState]]:
    """Pass one: direct execution of derived gold programs."""
    session = DialogueSession(catalog, databases)
    scenario = GoldScenario()

    def step(index, turn, frame):
        program = derive_turn_program(session, frame, _act_names(turn), table)
        session.execute_user_statements(frame["service"], turn.get("utterance", ""), program)
        values = {k: list(v) for k, v in frame["state"].get("slot_values", {}).items()}
        scenario.turns.append(GoldTurn([dsl.render_statement(s) for s in program], values))

    predictions = _Walker(dialogue, session, table).run(step)
    return scenario, predictions


def default_lexicon(catalog: SchemaCatalog) -> list[str]:
    return sorted({slot for name in catalog.seen_services for slot in catalog.services[name].slot_names})


def replay_dialogue(
    dialogue: Mapping,
    catalog: SchemaCatalog,
    databases: Mapping[str, Database],
    table: NormalizationTable | None = None,
    backends: Backends | None = None,
    training_lexicon: Sequence[str] | None = None,
) -> DialogueRun:
    """Pass two: run the DM pipeline. Without ``backends`` the scripted-gold
    backend built from pass one answers every prompt."""
    dialogue_id = dialogue["dialogue_id"]
    scenario, _ = derive_gold_programs(dialogue, catalog, databases, table)
    if backends is None:
        backends = Backends.uniform(ScriptedGoldBackend(scenario))
    lexicon = default_lexicon(catalog) if training_lexicon is None else training_lexicon
    run = DialogueRun(dialogue_id, gold_programs=[t.statements for t in scenario.turns])
    manager = DialogueManager(backends, lexicon, run.prompt_log)
    session = DialogueSession(catalog, databases, manager)

    def step(index, turn, frame):
        result = session.user_turn(frame["service"], turn.get("utterance", ""))
        run.corrections.extend((index, event) for event in result.report.corrections)

    walker = _Walker(dialogue, session, table)
    try:
        run.predictions = walker.run(step)
    except BackendError as exc:
        # Turns after the failure are scored as empty predictions.
        run.aborted = str(exc)
        run.backend_failure = True
        missing = len(walker.frames) - len(walker.predictions)
        run.predictions = walker.predictions + [DialogueState()] * missing
    run.transcript = session.transcript.render()
    return run
