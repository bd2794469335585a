"""Service schemas in SGD format: loading, validation and AP header rendering."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import templates
from .errors import FormatError, SchemaIOError, ValidationError

log = logging.getLogger(__name__)

STRING, INTEGER, BOOLEAN = "string", "integer", "boolean"
_PY_TYPES = {STRING: "str", INTEGER: "int", BOOLEAN: "bool"}


class _Immutable:
    # Schema objects are shared read-only between sessions, so session
    # snapshots must not clone them.
    def __deepcopy__(self, memo):
        return self

    def __copy__(self):
        return self


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def infer_data_type(possible_values: Iterable[str]) -> str:
    values = list(possible_values)
    if not values:
        return STRING
    if all(_is_int(v) for v in values):
        return INTEGER
    if set(values) <= {"True", "False"}:
        return BOOLEAN
    return STRING


@dataclass(frozen=True)
class SlotSpec(_Immutable):
    name: str
    description: str
    is_categorical: bool = False
    possible_values: tuple[str, ...] = ()
    data_type: str = STRING

    @property
    def py_type(self) -> str:
        return _PY_TYPES[self.data_type]


@dataclass(frozen=True)
class IntentSpec(_Immutable):
    name: str
    description: str
    is_transactional: bool
    required_slots: tuple[str, ...] = ()
    optional_slots: Mapping[str, str] = field(default_factory=dict)
    result_slots: tuple[str, ...] = ()

    @property
    def parameters(self) -> tuple[str, ...]:
        """Required slots followed by optional slots, in schema order."""
        return self.required_slots + tuple(self.optional_slots)

    @property
    def entity_type(self) -> str:
        return f"{self.name}Result"


@dataclass(frozen=True)
class ServiceSchema(_Immutable):
    service_name: str
    description: str
    slots: tuple[SlotSpec, ...] = ()
    intents: tuple[IntentSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "_slots", {s.name: s for s in self.slots})
        object.__setattr__(self, "_intents", {i.name: i for i in self.intents})

    @property
    def slot_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.slots)

    @property
    def intent_names(self) -> tuple[str, ...]:
        return tuple(i.name for i in self.intents)

    def has_slot(self, name: str) -> bool:
        return name in self._slots

    def slot(self, name: str) -> SlotSpec:
        return self._slots[name]

    def has_intent(self, name: str) -> bool:
        return name in self._intents

    def intent(self, name: str) -> IntentSpec:
        return self._intents[name]


@dataclass(frozen=True)
class SchemaCatalog(_Immutable):
    services: Mapping[str, ServiceSchema]
    seen_services: frozenset[str] = frozenset()

    def __getitem__(self, service_name: str) -> ServiceSchema:
        return self.services[service_name]

    def __contains__(self, service_name: str) -> bool:
        return service_name in self.services

    def __len__(self) -> int:
        return len(self.services)

    def is_seen(self, service_name: str) -> bool:
        return service_name in self.seen_services


@dataclass(frozen=True)
class TaskStackEntry:
    """A completed task whose summary and returned entity precede the
    instructions in the header."""

    intent_name: str
    summary: str
    returned_entity: Any = None


# -- loading --------------------------------------------------------------


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise FormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _parse_slot(raw: Mapping, service: str) -> SlotSpec:
    where = f"service {service!r}"
    name = _require(raw, "name", f"{where}, slot")
    where = f"{where}, slot {name!r}"
    description = _require(raw, "description", where)
    is_categorical = bool(_require(raw, "is_categorical", where))
    values = tuple(str(v) for v in _require(raw, "possible_values", where))
    if is_categorical:
        if not values:
            raise ValidationError(f"{where}: categorical slot {name!r} has no possible values")
        if len(set(values)) != len(values):
            raise ValidationError(f"{where}: categorical slot {name!r} has duplicate values")
    elif values:
        raise ValidationError(f"{where}: non-categorical slot {name!r} lists possible values")
    data_type = raw.get("data_type") or infer_data_type(values)
    if data_type not in _PY_TYPES:
        raise ValidationError(f"{where}: unknown data_type {data_type!r}")
    return SlotSpec(name, description, is_categorical, values, data_type)


def _parse_intent(raw: Mapping, service: str, slot_names: set[str]) -> IntentSpec:
    where = f"service {service!r}, intent"
    name = _require(raw, "name", where)
    where = f"service {service!r}, intent {name!r}"
    intent = IntentSpec(
        name=name,
        description=_require(raw, "description", where),
        is_transactional=bool(_require(raw, "is_transactional", where)),
        required_slots=tuple(_require(raw, "required_slots", where)),
        optional_slots={k: str(v) for k, v in _require(raw, "optional_slots", where).items()},
        result_slots=tuple(_require(raw, "result_slots", where)),
    )
    for slot in (*intent.required_slots, *intent.optional_slots, *intent.result_slots):
        if slot not in slot_names:
            raise ValidationError(f"{where}: references undefined slot {slot!r}")
    overlap = set(intent.required_slots) & set(intent.optional_slots)
    if overlap:
        raise ValidationError(f"{where}: slots both required and optional: {sorted(overlap)}")
    return intent


def parse_service(raw: Mapping) -> ServiceSchema:
    name = _require(raw, "service_name", "service")
    slots = tuple(_parse_slot(s, name) for s in _require(raw, "slots", f"service {name!r}"))
    slot_names = [s.name for s in slots]
    dupes = sorted({n for n in slot_names if slot_names.count(n) > 1})
    if dupes:
        raise ValidationError(f"service {name!r}: duplicate slot names {dupes}")
    intents = tuple(
        _parse_intent(i, name, set(slot_names)) for i in _require(raw, "intents", f"service {name!r}")
    )
    intent_names = [i.name for i in intents]
    dupes = sorted({n for n in intent_names if intent_names.count(n) > 1})
    if dupes:
        raise ValidationError(f"service {name!r}: duplicate intent names {dupes}")
    return ServiceSchema(name, _require(raw, "description", f"service {name!r}"), slots, intents)


def catalog_from_json(data: Any, seen_services: Iterable[str] = ()) -> SchemaCatalog:
    if not isinstance(data, list):
        raise FormatError("schema document must be a JSON list of services")
    services: dict[str, ServiceSchema] = {}
    for raw in data:
        service = parse_service(raw)
        if service.service_name in services:
            raise ValidationError(f"duplicate service {service.service_name!r}")
        services[service.service_name] = service
    seen = frozenset(seen_services)
    for name in sorted(seen - services.keys()):
        log.warning("seen service %r is not defined in this schema split", name)
    return SchemaCatalog(services, seen)


def load_schema_catalog(path, seen_services: Iterable[str] = ()) -> SchemaCatalog:
    """Load an SGD ``schema.json`` file into a validated catalog."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaIOError(f"cannot read schema file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return catalog_from_json(data, seen_services)


# -- header rendering -----------------------------------------------------


def py_literal(value: Any, data_type: str = STRING) -> str:
    text = str(value)
    if data_type == INTEGER and _is_int(text):
        return str(int(text))
    if data_type == BOOLEAN and text in ("True", "False"):
        return text
    return json.dumps(text, ensure_ascii=False)


def _parameter_line(slot: SlotSpec, default: str | None) -> str:
    head = f"{slot.name}: {slot.py_type}"
    if default is not None:
        head += f" = {py_literal(default, slot.data_type)}"
    description = slot.description
    if slot.is_categorical:
        options = ", ".join(py_literal(v, slot.data_type) for v in slot.possible_values)
        description = f"[{options}] {description}"
    return f"    {head},  # {description}"


def intent_signature(service: ServiceSchema, intent: IntentSpec) -> str:
    lines = [f"def {intent.name}(  # {intent.description}"]
    for name in intent.required_slots:
        lines.append(_parameter_line(service.slot(name), None))
    for name, default in intent.optional_slots.items():
        lines.append(_parameter_line(service.slot(name), default))
    lines.append(f") -> {intent.entity_type}")
    return "\n".join(lines)


def _entity_block(entry: TaskStackEntry, service: ServiceSchema) -> str:
    entity = entry.returned_entity
    type_name = getattr(entity, "entity_type", None)
    if type_name is None and service.has_intent(entry.intent_name):
        type_name = service.intent(entry.intent_name).entity_type
    lines = [
        f"# Completed task: {entry.summary}",
        f"class {type_name or entry.intent_name + 'Result'}:",
        '    """Copy relevant argument values from this entity to the parameters of subsequent API calls."""',
    ]
    properties = getattr(entity, "properties", None) or {}
    for name, value in properties.items():
        data_type = service.slot(name).data_type if service.has_slot(name) else STRING
        lines.append(f"    {name} = {py_literal(value, data_type)}")
    if not properties:
        lines.append("    pass")
    return "\n".join(lines)


def linearize_header(
    service: ServiceSchema,
    task_stack: Iterable[TaskStackEntry] = (),
    instructions: str | None = None,
) -> str:
    """Render the AP header: completed tasks, task instructions, API signatures."""
    blocks = [_entity_block(entry, service) for entry in task_stack]
    instruction_text = templates.template_text("task_instructions") if instructions is None else instructions
    blocks.append(instruction_text.rstrip("\n"))
    blocks.extend(intent_signature(service, intent) for intent in service.intents)
    return "\n\n".join(blocks) + "\n"
