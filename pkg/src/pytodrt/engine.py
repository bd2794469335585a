"""Execute parsed statements against the simulated environment.

Variables ``x1, x2, ...`` bind API instances, result sets, entities, system
actions or literal values. Built-in routines:

* ``xk = next(xr)`` binds the entity under the cursor of result set ``xr``.
* ``xk = select(xe)`` copies entity properties that are slots of the active API.
* ``xk = confirm(xa, slot=value, ...)`` confirms a transactional API.
* ``say(xa, xb, ...)`` hands actions to the NLG module and marks them consumed.

``query``, ``perform``, ``Hint`` and ``Notification`` only appear in statements
the engine itself emits; they are rejected when found in agent output.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Any

from . import dsl
from .environment import (
    ApiInstance,
    Database,
    EntityRecord,
    Perform,
    ResultSet,
    Show,
    SystemAction,
    confirm_api,
    instantiate_api,
    policy_step,
    set_slot,
)
from .errors import (
    ExecError,
    ExhaustedResults,
    NoActiveApi,
    Rebound,
    ReservedRoutine,
    UnboundVariable,
    UnknownIntent,
    WrongKind,
)
from .schema import ServiceSchema, TaskStackEntry

BUILTINS = ("say", "next", "select", "confirm")
SYSTEM_ROUTINES = ("query", "perform", "Hint", "Notification")
_VAR = re.compile(r"x([1-9][0-9]*)\Z")


@dataclass
class Environment:
    """The service schema currently in the header plus the shared database."""

    service: ServiceSchema
    db: Database


@dataclass
class ExecutionContext:
    bindings: dict[str, Any] = field(default_factory=dict)
    next_index: int = 1
    api_order: list[str] = field(default_factory=list)
    consumed: set[str] = field(default_factory=set)
    audit: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)
    task_stack: list[TaskStackEntry] = field(default_factory=list)
    pending_extras: list[SystemAction] = field(default_factory=list)

    def bind(self, name: str, value: Any) -> None:
        if name in self.bindings:
            raise Rebound(name)
        self.bindings[name] = value
        match = _VAR.match(name)
        if match:
            self.next_index = max(self.next_index, int(match.group(1)) + 1)

    def lookup(self, name: str) -> Any:
        if name not in self.bindings:
            raise UnboundVariable(name)
        return self.bindings[name]

    def peek_variable(self) -> str:
        index = self.next_index
        while f"x{index}" in self.bindings:
            index += 1
        return f"x{index}"

    def snapshot(self) -> "ExecutionContext":
        return copy.deepcopy(self)

    def apis(self) -> list[tuple[str, ApiInstance]]:
        return [(name, self.bindings[name]) for name in self.api_order]


def mint_variable(ctx: ExecutionContext) -> str:
    name = ctx.peek_variable()
    ctx.next_index = int(name[1:]) + 1
    return name


def active_api(ctx: ExecutionContext) -> ApiInstance:
    return ctx.bindings[active_api_var(ctx)]


def active_api_var(ctx: ExecutionContext) -> str:
    """The most recently instantiated API, whatever its phase."""
    if not ctx.api_order:
        raise NoActiveApi("no API has been instantiated")
    return ctx.api_order[-1]


@dataclass
class ExecutionOutcome:
    system_statements: list[tuple[str, SystemAction]] = field(default_factory=list)
    errors: list[ExecError] = field(default_factory=list)
    state_changed: bool = False
    retrieved: list[tuple[str, EntityRecord]] = field(default_factory=list)
    confirmed: list[str] = field(default_factory=list)
    api_vars: dict[str, str] = field(default_factory=dict)  # emitted var -> API var

    @property
    def ok(self) -> bool:
        return not self.errors

    def extend(self, other: "ExecutionOutcome") -> None:
        self.system_statements.extend(other.system_statements)
        self.errors.extend(other.errors)
        self.state_changed = self.state_changed or other.state_changed
        self.retrieved.extend(other.retrieved)
        self.confirmed.extend(other.confirmed)
        self.api_vars.update(other.api_vars)

    def statements(self) -> list[dsl.Assign]:
        return [system_statement(var, action, self.api_vars.get(var)) for var, action in self.system_statements]

    def actions(self, kind=SystemAction) -> list[SystemAction]:
        return [a for _, a in self.system_statements if isinstance(a, kind)]


def system_statement(var: str, action: SystemAction, api_var: str | None) -> dsl.Assign:
    return dsl.Assign(dsl.Target(var), action.to_call(api_var))


def execute(stmt: dsl.Statement, ctx: ExecutionContext, env: Environment) -> ExecutionOutcome:
    """Execute one statement. Execution errors are collected, never raised,
    and leave ``ctx`` exactly as it was."""
    outcome = ExecutionOutcome()
    if isinstance(stmt, dsl.ParseErrorMarker):
        return outcome
    before = ctx.snapshot()
    try:
        _execute(stmt, ctx, env, outcome)
    except ExecError as exc:
        _restore(ctx, before)
        return ExecutionOutcome(errors=[exc])
    return outcome


def _restore(ctx: ExecutionContext, snapshot: ExecutionContext) -> None:
    ctx.__dict__.update(snapshot.__dict__)


def _execute(stmt, ctx, env, outcome):
    if isinstance(stmt, dsl.BareCall):
        call = stmt.call
        if call.name == "say":
            _say(call, ctx)
        else:
            _call(None, call, ctx, env, outcome)
        return
    target, value = stmt.target, stmt.value
    if target.attribute is not None:
        api = ctx.lookup(target.variable)
        if not isinstance(api, ApiInstance):
            raise WrongKind(f"{target.variable} is not an API; cannot set {target.attribute}")
        set_slot(api, target.attribute, _resolve(value, ctx))
        outcome.state_changed = True
        _run_policy(target.variable, ctx, env, outcome)
        return
    if target.variable in ctx.bindings:
        raise Rebound(target.variable)
    if isinstance(value, dsl.CallExpr):
        _call(target.variable, value, ctx, env, outcome)
    else:
        ctx.bind(target.variable, _resolve(value, ctx))


def _call(target, call: dsl.CallExpr, ctx, env, outcome):
    name = call.name
    if name in SYSTEM_ROUTINES or name == "say":
        raise ReservedRoutine(f"{name} cannot be called by the agent here")
    if name == "next":
        results = _arg(call, ctx, ResultSet, "result set")
        if results.cursor >= len(results.entities):
            raise ExhaustedResults(f"{call.positional[0].name} has no more results")
        entity = results.entities[results.cursor]
        results.cursor += 1
        var = target or mint_variable(ctx)
        ctx.bind(var, entity)
        outcome.retrieved.append((var, entity))
        return
    if name == "select":
        entity = _arg(call, ctx, EntityRecord, "entity")
        api_var = active_api_var(ctx)
        api = ctx.bindings[api_var]
        params = set(api.intent.parameters)
        for slot, value in entity.properties.items():
            if slot in params:
                set_slot(api, slot, value)
        ctx.bind(target or mint_variable(ctx), entity)
        outcome.state_changed = True
        _run_policy(api_var, ctx, env, outcome)
        return
    if name == "confirm":
        api = _arg(call, ctx, ApiInstance, "API")
        api_var = call.positional[0].name
        confirm_api(api, {k: _resolve(v, ctx) for k, v in call.keyword})
        if target is not None:
            ctx.bind(target, api)
        outcome.state_changed = True
        outcome.confirmed.append(api_var)
        _run_policy(api_var, ctx, env, outcome)
        return
    if isinstance(call.callee, dsl.AttrRef) or not env.service.has_intent(name):
        raise UnknownIntent(name)
    if call.positional:
        raise WrongKind(f"{name} takes keyword arguments only")
    api = instantiate_api(name, {k: _resolve(v, ctx) for k, v in call.keyword}, env.service)
    var = target or mint_variable(ctx)
    ctx.bind(var, api)
    ctx.api_order.append(var)
    outcome.state_changed = True
    _run_policy(var, ctx, env, outcome)


def _arg(call: dsl.CallExpr, ctx, kind, label):
    if len(call.positional) != 1 or not isinstance(call.positional[0], dsl.VarRef):
        raise WrongKind(f"{call.name} expects one variable argument")
    value = ctx.lookup(call.positional[0].name)
    if not isinstance(value, kind):
        raise WrongKind(f"{call.name} expects a bound {label}, got {type(value).__name__}")
    return value


def _resolve(expr, ctx):
    if isinstance(expr, dsl.Literal):
        return expr.to_python()
    if isinstance(expr, dsl.VarRef):
        value = ctx.lookup(expr.name)
        if isinstance(value, (str, int, float, bool, list)):
            return value
        raise WrongKind(f"{expr.name} is not a value")
    if isinstance(expr, dsl.AttrRef):
        base = ctx.lookup(expr.base)
        if isinstance(base, EntityRecord):
            props = base.properties
        elif isinstance(base, ApiInstance):
            props = base.slot_values
        else:
            raise WrongKind(f"{expr.base} has no attributes")
        if expr.attribute not in props:
            raise ExecError(f"{expr.base} has no value for {expr.attribute}")
        return props[expr.attribute]
    # TODO(compositional-builtins): evaluate nested calls once sort/filter routines exist.
    raise ExecError(f"nested call {dsl.render_expr(expr)} is not supported")


def _say(call: dsl.CallExpr, ctx):
    names = []
    for arg in call.positional:
        if not isinstance(arg, dsl.VarRef):
            raise WrongKind("say expects variables")
        ctx.lookup(arg.name)
        names.append(arg.name)
    if call.keyword:
        raise WrongKind("say takes no keyword arguments")
    ctx.consumed.update(names)
    ctx.audit.append(("say", tuple(names)))


def _run_policy(api_var: str, ctx: ExecutionContext, env: Environment, outcome: ExecutionOutcome):
    api = ctx.bindings[api_var]
    extras, ctx.pending_extras = ctx.pending_extras, []
    for action in policy_step(api, env.db, extras):
        var = mint_variable(ctx)
        action.bound_var = var
        ctx.bind(var, action.results if isinstance(action, Show) else action)
        outcome.system_statements.append((var, action))
        outcome.api_vars[var] = api_var
        if isinstance(action, Perform):
            ctx.task_stack.append(TaskStackEntry(action.intent, action.summary, action.entity))
