"""Simulated schema-guided services.

An :class:`ApiInstance` is the runtime object behind a program statement such as
``x1 = FindBus(from_city="LA")``. Slots are validated and coerced on every
assignment, and :func:`policy_step` turns the API state into system action
recommendations (hints, query results, confirmations, notifications).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import dsl
from .errors import (
    CoercionError,
    InvalidCategoricalValue,
    NotConfirmable,
    UnknownIntent,
    UnknownSlot,
)
from .normalization import NormalizationTable
from .schema import BOOLEAN, INTEGER, IntentSpec, ServiceSchema, SlotSpec

DONTCARE = "dontcare"


class Phase(str, enum.Enum):
    FILLING = "Filling"
    READY = "Ready"
    AWAITING_CONFIRMATION = "AwaitingConfirmation"
    EXECUTED = "Executed"
    FAILED = "Failed"


TERMINAL = (Phase.EXECUTED, Phase.FAILED)


@dataclass
class ApiInstance:
    intent: IntentSpec
    service: ServiceSchema
    slot_values: dict[str, str] = field(default_factory=dict)
    phase: Phase = Phase.FILLING
    confirmed: bool = False

    @property
    def name(self) -> str:
        return self.intent.name

    def missing_required(self) -> list[str]:
        return [s for s in self.intent.required_slots if s not in self.slot_values]

    def recompute_phase(self) -> None:
        if self.phase in TERMINAL:
            return
        if self.missing_required():
            self.phase = Phase.FILLING
            self.confirmed = False
        elif self.phase == Phase.FILLING:
            self.phase = Phase.READY


@dataclass
class EntityRecord:
    entity_type: str
    properties: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"entity_type": self.entity_type, "properties": dict(self.properties)}

    @classmethod
    def from_json(cls, raw: Mapping) -> "EntityRecord":
        return cls(raw["entity_type"], {k: str(v) for k, v in raw["properties"].items()})


@dataclass
class ResultSet:
    entities: list[EntityRecord] = field(default_factory=list)
    cursor: int = 0

    def __len__(self):
        return len(self.entities)

    def __bool__(self):
        return bool(self.entities)


# -- system actions -------------------------------------------------------


@dataclass
class SystemAction:
    """Base class. ``bound_var`` is assigned when the engine emits the action."""

    bound_var: str | None = field(default=None, init=False, compare=False)
    communicative = True

    def to_call(self, api_var: str | None) -> dsl.CallExpr:
        raise NotImplementedError


@dataclass
class HintRequestValue(SystemAction):
    slot: str = ""

    def to_call(self, api_var):
        return dsl.call("Hint", f"request value: {self.slot}")


@dataclass
class ConfirmationHint(SystemAction):
    values: dict[str, str] = field(default_factory=dict)

    def to_call(self, api_var):
        return dsl.call("Hint", "confirm", **self.values)


@dataclass
class Show(SystemAction):
    results: ResultSet = field(default_factory=ResultSet)
    communicative = False

    def to_call(self, api_var):
        return dsl.CallExpr("query", (dsl.VarRef(api_var),))


@dataclass
class Perform(SystemAction):
    intent: str = ""
    values: dict[str, str] = field(default_factory=dict)
    entity: EntityRecord | None = None
    communicative = False

    def to_call(self, api_var):
        return dsl.CallExpr("perform", (dsl.VarRef(api_var),))

    @property
    def summary(self) -> str:
        args = ", ".join(f"{k}={json.dumps(v, ensure_ascii=False)}" for k, v in self.values.items())
        return f"{self.intent}({args})"


@dataclass
class Notification(SystemAction):
    reason: str = ""
    alternatives: dict[str, str] = field(default_factory=dict)

    def to_call(self, api_var):
        return dsl.call("Notification", self.reason, **self.alternatives)


@dataclass
class OfferIntent(SystemAction):
    intent: str = ""

    def to_call(self, api_var):
        return dsl.call("Hint", f"offer intent: {self.intent}")


@dataclass
class UserPromptHint(SystemAction):
    text: str = ""

    def to_call(self, api_var):
        return dsl.call("Hint", f"user prompt: {self.text}")


# -- database -------------------------------------------------------------


@dataclass
class TransactionOutcome:
    success: bool
    entity: EntityRecord | None = None
    reason: str = ""
    alternatives: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        if self.success:
            return {"status": "success", "entity": self.entity.to_json() if self.entity else None}
        return {"status": "failure", "reason": self.reason, "alternatives": dict(self.alternatives)}

    @classmethod
    def from_json(cls, raw: Mapping) -> "TransactionOutcome":
        if raw["status"] == "success":
            entity = raw.get("entity")
            return cls(True, EntityRecord.from_json(entity) if entity else None)
        return cls(False, None, raw.get("reason", ""), dict(raw.get("alternatives", {})))


def call_fingerprint(intent_name: str, values: Mapping[str, str]) -> str:
    """Order-insensitive key for an API call: intent name plus sorted slot/value pairs."""
    args = ", ".join(f"{k}={json.dumps(str(values[k]), ensure_ascii=False)}" for k in sorted(values))
    return f"{intent_name}({args})"


@dataclass
class Database:
    tables: dict[str, list[EntityRecord]] = field(default_factory=dict)
    transactions: dict[str, TransactionOutcome] = field(default_factory=dict)
    normalizer: NormalizationTable | None = None

    def __deepcopy__(self, memo):
        return self

    def canonical(self, slot: str, value: str) -> str:
        return self.normalizer.canonical(slot, value) if self.normalizer else value

    def fingerprint(self, api: ApiInstance) -> str:
        params = set(api.intent.parameters)
        values = {k: self.canonical(k, v) for k, v in api.slot_values.items() if k in params}
        return call_fingerprint(api.name, values)

    def to_json(self) -> dict:
        return {
            "tables": {k: [e.to_json() for e in rows] for k, rows in self.tables.items()},
            "transactions": {k: o.to_json() for k, o in self.transactions.items()},
        }

    @classmethod
    def from_json(cls, raw: Mapping, normalizer: NormalizationTable | None = None) -> "Database":
        return cls(
            tables={k: [EntityRecord.from_json(e) for e in rows] for k, rows in raw.get("tables", {}).items()},
            transactions={k: TransactionOutcome.from_json(o) for k, o in raw.get("transactions", {}).items()},
            normalizer=normalizer,
        )

    @classmethod
    def load(cls, path, normalizer: NormalizationTable | None = None) -> "Database":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")), normalizer)


# -- slot assignment ------------------------------------------------------


def coerce_value(slot: SlotSpec, value: Any) -> str:
    """Cast ``value`` to the slot's data type and return its canonical text."""
    if isinstance(value, str):
        text = value.strip()
    elif isinstance(value, bool):
        text = "True" if value else "False"
    elif isinstance(value, float) and value.is_integer():
        text = str(int(value))
    else:
        text = str(value)
    if text == DONTCARE:
        return text
    if slot.data_type == INTEGER:
        if isinstance(value, bool):
            raise CoercionError(f"{text} is not a valid integer for {slot.name}", slot.name, value)
        try:
            text = str(int(text))
        except ValueError:
            raise CoercionError(f"{text} is not a valid integer for {slot.name}", slot.name, value) from None
    elif slot.data_type == BOOLEAN:
        if text.lower() not in ("true", "false"):
            raise CoercionError(f"{text} is not a valid boolean for {slot.name}", slot.name, value)
        text = "True" if text.lower() == "true" else "False"
    if slot.is_categorical and text not in slot.possible_values:
        folded = [v for v in slot.possible_values if v.lower() == text.lower()]
        if len(folded) != 1:
            options = ", ".join(slot.possible_values)
            raise InvalidCategoricalValue(
                f"{text} is not a valid option for {slot.name}; valid options are {options}", slot.name, value
            )
        text = folded[0]
    return text


def set_slot(api: ApiInstance, slot: str, value: Any) -> None:
    """Assign a slot. The empty string clears it. State is untouched on error."""
    if not api.service.has_slot(slot):
        raise UnknownSlot(slot, value, api.name)
    if value is None or (isinstance(value, str) and value.strip() == ""):
        api.slot_values.pop(slot, None)
    else:
        api.slot_values[slot] = coerce_value(api.service.slot(slot), value)
    api.recompute_phase()


def instantiate_api(intent_name: str, kwargs: Mapping[str, Any], schema: ServiceSchema) -> ApiInstance:
    if not schema.has_intent(intent_name):
        raise UnknownIntent(intent_name)
    api = ApiInstance(schema.intent(intent_name), schema)
    for slot, value in kwargs.items():
        set_slot(api, slot, value)
    api.recompute_phase()
    return api


# -- policy ---------------------------------------------------------------


def execute_query(api: ApiInstance, db: Database) -> ResultSet:
    params = set(api.intent.parameters)
    constraints = {
        slot: db.canonical(slot, value)
        for slot, value in api.slot_values.items()
        if slot in params and value != DONTCARE
    }
    rows = [
        row
        for row in db.tables.get(api.name, [])
        if all(
            slot in row.properties and db.canonical(slot, row.properties[slot]) == value
            for slot, value in constraints.items()
        )
    ]
    return ResultSet(list(rows))


def confirmation_values(api: ApiInstance) -> dict[str, str]:
    """Slot values the transaction would execute with: provided parameters plus optional defaults."""
    values = {}
    for slot in api.intent.parameters:
        if slot in api.slot_values:
            values[slot] = api.slot_values[slot]
        elif slot in api.intent.optional_slots:
            values[slot] = api.intent.optional_slots[slot]
    return values


def confirm_api(api: ApiInstance, overrides: Mapping[str, Any] | None = None) -> None:
    if not api.intent.is_transactional:
        raise NotConfirmable(f"{api.name} is a search API and cannot be confirmed")
    if api.phase not in (Phase.READY, Phase.AWAITING_CONFIRMATION):
        raise NotConfirmable(f"{api.name} cannot be confirmed in phase {api.phase.value}")
    staged = ApiInstance(api.intent, api.service, dict(api.slot_values), api.phase)
    for slot, value in confirmation_values(api).items():
        set_slot(staged, slot, value)
    for slot, value in (overrides or {}).items():
        set_slot(staged, slot, value)
    if staged.missing_required():
        raise NotConfirmable(f"{api.name} is missing {', '.join(staged.missing_required())}")
    api.slot_values = staged.slot_values
    api.phase = Phase.AWAITING_CONFIRMATION
    api.confirmed = True


def policy_step(api: ApiInstance, db: Database, extra_actions: Iterable[SystemAction] = ()) -> list[SystemAction]:
    """Recommend the next system actions for ``api``, advancing transactional phases."""
    if api.phase in TERMINAL:
        return []
    if api.phase == Phase.FILLING:
        actions: list[SystemAction] = [HintRequestValue(slot=s) for s in api.missing_required()]
    elif not api.intent.is_transactional:
        results = execute_query(api, db)
        if results:
            actions = [Show(results=results)]
        else:
            outcome = db.transactions.get(db.fingerprint(api))
            alternatives = dict(outcome.alternatives) if outcome and not outcome.success else {}
            actions = [Notification(reason="no results", alternatives=alternatives)]
    elif not api.confirmed:
        api.phase = Phase.AWAITING_CONFIRMATION
        actions = [ConfirmationHint(values=confirmation_values(api))]
    else:
        outcome = db.transactions.get(db.fingerprint(api)) or TransactionOutcome(True, None)
        if outcome.success:
            api.phase = Phase.EXECUTED
            entity = outcome.entity or EntityRecord(api.intent.entity_type)
            actions = [Perform(intent=api.name, values=dict(api.slot_values), entity=entity)]
        else:
            api.phase = Phase.FAILED
            actions = [Notification(reason=outcome.reason or "failure", alternatives=dict(outcome.alternatives))]
    actions.extend(extra_actions)
    return actions
