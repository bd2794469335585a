"""Validate, constrain and execute action-parser output for one user turn.

Pipeline per turn:

1. split the raw output into lines; unparsable lines become ``parse_error``;
2. API names missing from the header are replaced by the closest header API
   (unit-cost Levenshtein distance, ties resolved by header order);
3. statements are executed; an unknown slot or an invalid categorical value
   triggers one schema-supervisor query per offending occurrence;
4. slots requested at the previous system turn but left unassigned are sent
   to the parser supervisor, whose answers rename or append assignments.

Every rewrite is logged as a :class:`CorrectionEvent`, so replaying the log
over the raw output reproduces the constrained statements.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import dsl
from .backends import LmRequest, Purpose, fingerprint
from .engine import (
    BUILTINS,
    SYSTEM_ROUTINES,
    Environment,
    ExecutionContext,
    ExecutionOutcome,
    _restore,
    active_api_var,
    execute,
    mint_variable,
)
from .environment import HintRequestValue, Notification
from .errors import (
    BackendError,
    ExhaustedResults,
    InvalidAnswer,
    InvalidCategoricalValue,
    StatementSyntaxError,
    UnknownSlot,
)
from .supervisors import (
    MqaPrompt,
    TemplateId,
    apply_mqa_answer,
    apply_ps_answers,
    assigned_values,
    build_ps_prompt,
    build_ss_prompt,
    build_ss_value_prompt,
    parse_ps_answers,
)


class CorrectionKind(str, enum.Enum):
    API_NAME_EDIT_DISTANCE = "ApiNameEditDistance"
    SS_UNKNOWN_SLOT = "SsUnknownSlot"
    SS_CATEGORICAL_VALUE = "SsCategoricalValue"
    SS_PARAPHRASE = "SsParaphrase"
    PS_OMISSION = "PsOmission"
    PS_SEMANTIC_RENAME = "PsSemanticRename"
    PARSE_ERROR_INSERTED = "ParseErrorInserted"
    DROPPED = "Dropped"


_APPEND_KINDS = (CorrectionKind.PS_OMISSION,)


@dataclass
class CorrectionEvent:
    kind: CorrectionKind
    before: str
    after: str
    index: int
    prompt_id: str | None = None

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "before": self.before,
            "after": self.after,
            "index": self.index,
            "prompt_id": self.prompt_id,
        }


@dataclass(frozen=True)
class RequestedSlots:
    slots: tuple[str, ...] = ()
    api_var: str | None = None


@dataclass
class ValidationReport:
    raw_output: str
    constrained_statements: list[dsl.Statement]
    corrections: list[CorrectionEvent]


@dataclass
class Backends:
    ap: object = None
    ss: object = None
    ps: object = None

    @classmethod
    def uniform(cls, backend) -> "Backends":
        return cls(backend, backend, backend)


@dataclass
class PromptLogEntry:
    purpose: str
    template_id: str
    fingerprint: str
    prompt: str
    answer: str

    def to_json(self) -> dict:
        return {
            "purpose": self.purpose,
            "template_id": self.template_id,
            "fingerprint": self.fingerprint,
            "prompt": self.prompt,
            "answer": self.answer,
        }


@dataclass
class TurnResult:
    report: ValidationReport
    outcome: ExecutionOutcome
    steps: list[tuple[dsl.Statement, ExecutionOutcome]]
    requested: RequestedSlots
    omitted: list[str] = field(default_factory=list)


# -- API name constraining ------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute), case-sensitive."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def constrain_api_name(predicted: str, candidates: Sequence[str]) -> str:
    if not candidates:
        raise ValueError("no candidate API names")
    # min() keeps the first of equally distant candidates, i.e. header order.
    return min(candidates, key=lambda c: levenshtein(predicted, c))


def detect_omissions(constrained: Iterable[dsl.Statement], prev_requested: RequestedSlots) -> list[str]:
    assigned = {name for stmt in constrained for name, _ in assigned_values(stmt)}
    return [slot for slot in prev_requested.slots if slot not in assigned]


def _top_call(stmt: dsl.Statement) -> dsl.CallExpr | None:
    if isinstance(stmt, dsl.BareCall):
        return stmt.call
    if isinstance(stmt, dsl.Assign) and stmt.target.attribute is None and isinstance(stmt.value, dsl.CallExpr):
        return stmt.value
    return None


def _with_callee(stmt: dsl.Statement, callee: str) -> dsl.Statement:
    call = _top_call(stmt)
    new_call = dsl.CallExpr(callee, call.positional, call.keyword)
    if isinstance(stmt, dsl.BareCall):
        return dsl.BareCall(new_call)
    return dsl.Assign(stmt.target, new_call)


def replay_corrections(raw_output: str, corrections: Sequence[CorrectionEvent]) -> list[dsl.Statement]:
    """Rebuild the constrained statements from the raw output and the correction log."""
    slots: list = []
    for lineno, line in dsl.iter_program_lines(raw_output):
        try:
            slots.append(dsl.parse_statement(line, lineno))
        except StatementSyntaxError:
            slots.append(line)
    for event in corrections:
        if event.kind in _APPEND_KINDS:
            if event.index != len(slots):
                raise ValueError(f"append correction at {event.index}, expected {len(slots)}")
            slots.append(dsl.parse_statement(event.after))
            continue
        current = slots[event.index]
        current_text = current if isinstance(current, str) else dsl.render_statement(current)
        if current_text != event.before:
            raise ValueError(f"correction {event.kind.value} expected {event.before!r}, found {current_text!r}")
        slots[event.index] = dsl.parse_statement(event.after) if event.after else None
    return [s for s in slots if s is not None and not isinstance(s, str)]


def requested_after(ctx: ExecutionContext, outcome: ExecutionOutcome) -> RequestedSlots:
    """Slots the policy asked for during this turn that the active API still lacks."""
    if not ctx.api_order:
        return RequestedSlots()
    api_var = active_api_var(ctx)
    api = ctx.bindings[api_var]
    slots: list[str] = []
    for var, action in outcome.system_statements:
        if (
            isinstance(action, HintRequestValue)
            and outcome.api_vars.get(var) == api_var
            and action.slot not in api.slot_values
            and action.slot not in slots
        ):
            slots.append(action.slot)
    return RequestedSlots(tuple(slots), api_var)


class DialogueManager:
    def __init__(self, backends: Backends, training_lexicon: Iterable[str] = (), prompt_log: list | None = None):
        self.backends = backends
        self.training_lexicon = frozenset(training_lexicon)
        self.prompt_log = prompt_log if prompt_log is not None else []

    # -- backend access ---------------------------------------------------

    def _ask(self, backend, request: LmRequest, template_id: str) -> str:
        if backend is None:
            raise BackendError(f"no backend configured for {request.purpose.value}")
        answer = backend.complete(request)
        self.prompt_log.append(
            PromptLogEntry(
                request.purpose.value,
                template_id,
                fingerprint(request.purpose, request.prompt),
                request.prompt,
                answer,
            )
        )
        return answer

    def _ask_ss(self, prompt: MqaPrompt, turn_index) -> str:
        request = LmRequest(
            prompt.text,
            Purpose.SCHEMA_SUPERVISION,
            max_answer_tokens=1,
            context={
                "turn_index": turn_index,
                "template_id": prompt.template_id.value,
                "labels": [label for label, _ in prompt.options],
                "targets": list(prompt.targets),
                "predicted_slot": prompt.predicted_slot,
                "value": prompt.value,
            },
        )
        return self._ask(self.backends.ss, request, prompt.template_id.value)

    # -- pipeline ---------------------------------------------------------

    def process_turn(
        self,
        raw_output: str,
        ctx: ExecutionContext,
        env: Environment,
        prev_requested: RequestedSlots = RequestedSlots(),
        history: Sequence = (),
        turn_index: int | None = None,
    ) -> TurnResult:
        """Run one turn of AP output through the DM. On BackendError the
        context is rolled back to its state at turn start and the error re-raised."""
        start = ctx.snapshot()
        try:
            return self._process(raw_output, ctx, env, prev_requested, history, turn_index, start)
        except BackendError:
            _restore(ctx, start)
            raise

    def _process(self, raw_output, ctx, env, prev_requested, history, turn_index, start) -> TurnResult:
        slots: list[dsl.Statement | None] = []
        corrections: list[CorrectionEvent] = []

        for lineno, line in dsl.iter_program_lines(raw_output):
            try:
                slots.append(dsl.parse_statement(line, lineno))
            except StatementSyntaxError:
                corrections.append(
                    CorrectionEvent(CorrectionKind.PARSE_ERROR_INSERTED, line, dsl.PARSE_ERROR, len(slots))
                )
                slots.append(dsl.ParseErrorMarker())

        candidates = env.service.intent_names
        for i, stmt in enumerate(slots):
            call = _top_call(stmt)
            if (
                call is None
                or not isinstance(call.callee, str)
                or call.callee in BUILTINS
                or call.callee in SYSTEM_ROUTINES
                or call.callee in candidates
                or not candidates
            ):
                continue
            fixed = _with_callee(stmt, constrain_api_name(call.callee, candidates))
            corrections.append(
                CorrectionEvent(
                    CorrectionKind.API_NAME_EDIT_DISTANCE,
                    dsl.render_statement(stmt),
                    dsl.render_statement(fixed),
                    i,
                )
            )
            slots[i] = fixed

        steps = self._execute_all(slots, corrections, ctx, env, turn_index, supervise=True)

        omitted: list[str] = []
        api_var = active_api_var(ctx) if ctx.api_order else None
        if prev_requested.slots and api_var is not None and api_var == prev_requested.api_var:
            api = ctx.bindings[api_var]
            present = [s for s in slots if s is not None]
            omitted = [
                s
                for s in detect_omissions(present, prev_requested)
                if s not in api.slot_values and env.service.has_slot(s)
            ]
        if omitted:
            if self._parser_supervision(omitted, slots, corrections, api_var, env, history, ctx, turn_index):
                _restore(ctx, start.snapshot())
                steps = self._execute_all(slots, corrections, ctx, env, turn_index, supervise=False)

        outcome = ExecutionOutcome()
        for _, step in steps:
            outcome.extend(step)
        report = ValidationReport(raw_output, [s for s in slots if s is not None], corrections)
        return TurnResult(report, outcome, steps, requested_after(ctx, outcome), omitted)

    def _execute_all(self, slots, corrections, ctx, env, turn_index, supervise):
        steps = []
        for i in range(len(slots)):
            if slots[i] is None:
                continue
            outcome = self._execute_one(i, slots, corrections, ctx, env, turn_index, supervise)
            if slots[i] is not None:
                steps.append((slots[i], outcome))
        return steps

    def _execute_one(self, i, slots, corrections, ctx, env, turn_index, supervise) -> ExecutionOutcome:
        stmt = slots[i]
        attempted: set[tuple[str, str]] = set()
        while True:
            outcome = execute(stmt, ctx, env)
            if outcome.ok:
                slots[i] = stmt
                return outcome
            error = outcome.errors[0]
            if isinstance(error, ExhaustedResults):
                # Statement stays in the program; the user is told there is nothing left.
                var = mint_variable(ctx)
                notice = Notification(reason="no more results")
                notice.bound_var = var
                ctx.bind(var, notice)
                return ExecutionOutcome(system_statements=[(var, notice)], errors=[error])
            prompt = None
            if supervise and isinstance(error, UnknownSlot) and ("slot", error.slot) not in attempted:
                attempted.add(("slot", error.slot))
                prompt = build_ss_prompt(error, env.service, self.training_lexicon, dsl.render_statement(stmt))
                kind = (
                    CorrectionKind.SS_PARAPHRASE
                    if prompt.template_id == TemplateId.PARAPHRASE
                    else CorrectionKind.SS_UNKNOWN_SLOT
                )
            elif (
                supervise
                and isinstance(error, InvalidCategoricalValue)
                and ("value", error.slot) not in attempted
            ):
                attempted.add(("value", error.slot))
                prompt = build_ss_value_prompt(
                    env.service.slot(error.slot),
                    str(error.value),
                    dsl.render_statement(stmt),
                    _intent_of(stmt, ctx, env),
                )
                kind = CorrectionKind.SS_CATEGORICAL_VALUE
            if prompt is not None:
                answer = self._ask_ss(prompt, turn_index)
                try:
                    fixed = apply_mqa_answer(prompt, answer, stmt)
                except InvalidAnswer:
                    fixed = None
                if fixed is not None:
                    corrections.append(
                        CorrectionEvent(
                            kind,
                            dsl.render_statement(stmt),
                            dsl.render_statement(fixed),
                            i,
                            fingerprint(Purpose.SCHEMA_SUPERVISION, prompt.text),
                        )
                    )
                    stmt = fixed
                    continue
            corrections.append(CorrectionEvent(CorrectionKind.DROPPED, dsl.render_statement(stmt), "", i))
            slots[i] = None
            return outcome

    def _parser_supervision(self, omitted, slots, corrections, api_var, env, history, ctx, turn_index) -> bool:
        current_task = max(len(ctx.api_order) - 1, 0)
        if history:
            history[-1].task_index = current_task
        prompt = build_ps_prompt(history, omitted, env.service, current_task)
        request = LmRequest(
            prompt.text,
            Purpose.PARSER_SUPERVISION,
            context={"turn_index": turn_index, "slots": list(prompt.slots)},
        )
        answers = parse_ps_answers(prompt, self._ask(self.backends.ps, request, "ParserSupervisor"))
        present = [(i, s) for i, s in enumerate(slots) if s is not None]
        updated = apply_ps_answers(answers, [s for _, s in present], api_var, env.service)
        changed = False
        for (i, old), new in zip(present, updated):
            if new != old:
                corrections.append(
                    CorrectionEvent(
                        CorrectionKind.PS_SEMANTIC_RENAME, dsl.render_statement(old), dsl.render_statement(new), i
                    )
                )
                slots[i] = new
                changed = True
        for new in updated[len(present):]:
            corrections.append(CorrectionEvent(CorrectionKind.PS_OMISSION, "", dsl.render_statement(new), len(slots)))
            slots.append(new)
            changed = True
        return changed


def _intent_of(stmt, ctx, env) -> str:
    call = _top_call(stmt)
    if call is not None and isinstance(call.callee, str) and env.service.has_intent(call.callee):
        return call.callee
    if isinstance(stmt, dsl.Assign) and stmt.target.variable in ctx.bindings:
        api = ctx.bindings[stmt.target.variable]
        return getattr(api, "name", env.service.service_name)
    return env.service.service_name
