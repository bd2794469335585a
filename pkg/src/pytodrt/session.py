"""A dialogue session: one execution context shared across services and turns."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import dsl
from .backends import LmRequest, Purpose
from .dialogue_manager import (
    DialogueManager,
    RequestedSlots,
    TurnResult,
    ValidationReport,
    requested_after,
)
from .engine import Environment, ExecutionContext, ExecutionOutcome, execute
from .environment import (
    ApiInstance,
    ConfirmationHint,
    Database,
    HintRequestValue,
    ResultSet,
    Show,
)
from .prompts import (
    SessionTranscript,
    TurnRecord,
    assemble_ap_prompt,
    render_entity_instruction,
    render_policy_note,
)
from . import templates
from .schema import SchemaCatalog, linearize_header


@dataclass
class DialogueSession:
    catalog: SchemaCatalog
    databases: Mapping[str, Database]
    manager: DialogueManager | None = None
    ctx: ExecutionContext = field(default_factory=ExecutionContext)
    transcript: SessionTranscript = field(default_factory=SessionTranscript)
    requested: RequestedSlots = field(default_factory=RequestedSlots)
    user_turns: int = 0
    last_outcome: ExecutionOutcome = field(default_factory=ExecutionOutcome)
    results_api: dict[str, str] = field(default_factory=dict)  # result-set var -> API var
    reports: list[ValidationReport] = field(default_factory=list)
    retrieved: list[tuple[str, str]] = field(default_factory=list)  # entity var -> API var

    def env_for(self, service_name: str) -> Environment:
        service = self.catalog.services[service_name]
        db = self.databases.get(service_name) or Database()
        return Environment(service, db)

    def header(self, service_name: str) -> str:
        return linearize_header(
            self.catalog.services[service_name],
            self.ctx.task_stack,
            templates.render("task_instructions"),
        )

    def ap_prompt(self, service_name: str) -> str:
        return assemble_ap_prompt(self.header(service_name), self.transcript)

    def current_task(self) -> int:
        return max(len(self.ctx.api_order) - 1, 0)

    # -- user turns -------------------------------------------------------

    def user_turn(self, service_name: str, utterance: str, raw_output: str | None = None) -> TurnResult:
        """Parse (or take) AP output for the utterance and run it through the DM."""
        if self.manager is None:
            raise ValueError("user_turn needs a dialogue manager")
        env = self.env_for(service_name)
        turn = TurnRecord("user", utterance, task_index=self.current_task())
        if raw_output is None:
            request = LmRequest(
                assemble_ap_prompt(self.header(service_name), self._with(turn)),
                Purpose.ACTION_PARSE,
                context={"turn_index": self.user_turns},
            )
            raw_output = self.manager._ask(self.manager.backends.ap, request, "ActionParser")
        self.transcript.append(turn)
        try:
            result = self.manager.process_turn(
                raw_output, self.ctx, env, self.requested, self.transcript.turns, self.user_turns
            )
        except Exception:
            self.transcript.turns.pop()
            self.transcript.invalidate()
            raise
        self._record(turn, result.steps, env)
        self.requested = result.requested
        self.reports.append(result.report)
        return result

    def _with(self, turn: TurnRecord) -> SessionTranscript:
        return SessionTranscript(self.transcript.turns + [turn], set(self.transcript.consumed))

    def execute_user_statements(self, service_name: str, utterance: str, statements: Sequence) -> ExecutionOutcome:
        """Execute known-good statements directly, bypassing the DM. Any error is raised."""
        env = self.env_for(service_name)
        steps = []
        for stmt in statements:
            if isinstance(stmt, str):
                stmt = dsl.parse_statement(stmt)
            outcome = execute(stmt, self.ctx, env)
            if not outcome.ok:
                raise outcome.errors[0]
            steps.append((stmt, outcome))
        turn = TurnRecord("user", utterance)
        self.transcript.append(turn)
        self._record(turn, steps, env)
        combined = ExecutionOutcome()
        for _, outcome in steps:
            combined.extend(outcome)
        self.requested = requested_after(self.ctx, combined)
        return combined

    def _record(self, turn: TurnRecord, steps, env: Environment) -> None:
        combined = ExecutionOutcome()
        for stmt, outcome in steps:
            turn.statements.append(stmt)
            anchor = len(turn.statements) - 1
            for api_var in outcome.confirmed:
                api = self.ctx.bindings[api_var]
                turn.instructions.append(render_policy_note(api.name, api_var, anchor))
            turn.statements.extend(outcome.statements())
            combined.extend(outcome)
        for var, action in combined.system_statements:
            if isinstance(action, Show):
                self.results_api[var] = combined.api_vars[var]
        turn.task_index = self.current_task()
        self.transcript.invalidate()
        self.last_outcome = combined
        self.user_turns += 1 if turn.speaker == "user" else 0

    # -- agent turns ------------------------------------------------------

    def agent_turn(self, service_name: str, utterance: str = "", offer: bool = False) -> list:
        """Agent program for one system turn: optionally retrieve the next
        offered entity, then ``say`` the outstanding recommendations."""
        env = self.env_for(service_name)
        turn = TurnRecord("agent", utterance, task_index=self.current_task())
        said: list[str] = []
        if offer:
            results_var = self._open_results()
            if results_var is not None:
                target = self.ctx.peek_variable()
                stmt = dsl.Assign(dsl.Target(target), dsl.call("next", dsl.VarRef(results_var)))
                outcome = execute(stmt, self.ctx, env)
                if not outcome.ok:
                    raise outcome.errors[0]
                turn.statements.append(stmt)
                for var, entity in outcome.retrieved:
                    api = self.ctx.bindings[self.results_api[results_var]]
                    props = [(s, env.service.slot(s).description) for s in api.intent.result_slots]
                    if props:
                        turn.instructions.append(
                            render_entity_instruction(entity.entity_type, props, var, len(turn.statements) - 1)
                        )
                    self.retrieved.append((var, self.results_api[results_var]))
                    said.append(var)
        said = self._outstanding() + said
        if said:
            stmt = dsl.BareCall(dsl.call("say", *[dsl.VarRef(v) for v in said]))
            outcome = execute(stmt, self.ctx, env)
            if not outcome.ok:
                raise outcome.errors[0]
            turn.statements.append(stmt)
        self.transcript.consumed = set(self.ctx.consumed)
        self.transcript.append(turn)
        return turn.statements

    def last_entity(self, service_name: str) -> str | None:
        """Most recently retrieved entity produced by an API of ``service_name``."""
        for var, api_var in reversed(self.retrieved):
            if self.ctx.bindings[api_var].service.service_name == service_name:
                return var
        return None

    def _open_results(self) -> str | None:
        for var in reversed(list(self.results_api)):
            results = self.ctx.bindings.get(var)
            if isinstance(results, ResultSet) and results.cursor < len(results.entities):
                return var
        return None

    def _outstanding(self) -> list[str]:
        """Communicative actions from the last user turn that still apply."""
        names = []
        for var, action in self.last_outcome.system_statements:
            if not action.communicative or var in self.ctx.consumed:
                continue
            api = self.ctx.bindings.get(self.last_outcome.api_vars.get(var, ""))
            if isinstance(action, HintRequestValue) and isinstance(api, ApiInstance):
                if action.slot in api.slot_values:
                    continue
            if isinstance(action, ConfirmationHint) and isinstance(api, ApiInstance) and api.confirmed:
                continue
            names.append(var)
        return names

    def run_program(self, service_name: str, statements: Sequence) -> list[ExecutionOutcome]:
        env = self.env_for(service_name)
        outcomes = []
        for stmt in statements:
            outcome = execute(dsl.parse_statement(stmt) if isinstance(stmt, str) else stmt, self.ctx, env)
            outcomes.append(outcome)
        return outcomes

