"""Schema-supervisor (multiple choice) and parser-supervisor (extractive QA) prompts.

The schema supervisor maps an out-of-schema slot name, or an invalid
categorical value, onto the decoding schema. The parser supervisor recovers
slots the system requested but the action parser did not assign.
"""

from __future__ import annotations

import enum
import logging
import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import dsl, templates
from .errors import InvalidAnswer, PreconditionError, UnknownSlot
from .schema import INTEGER, ServiceSchema, SlotSpec

log = logging.getLogger(__name__)

NONE_OPTION = "none"


class TemplateId(str, enum.Enum):
    UNKNOWN_SLOT = "UnknownSlot"
    UNKNOWN_SLOT_CATEGORICAL_VALUE = "UnknownSlotCategoricalValue"
    CATEGORICAL_VALUE_ONLY = "CategoricalValueOnly"
    PARAPHRASE = "Paraphrase"


_TEMPLATE_FILES = {
    TemplateId.UNKNOWN_SLOT: "ss_unknown_slot",
    TemplateId.UNKNOWN_SLOT_CATEGORICAL_VALUE: "ss_unknown_slot_categorical_value",
    TemplateId.CATEGORICAL_VALUE_ONLY: "ss_categorical_value",
    TemplateId.PARAPHRASE: "ss_paraphrase",
}


def option_labels(n: int) -> list[str]:
    letters = string.ascii_uppercase
    labels = list(letters[:n])
    # services with more than 26 slots continue with AA, AB, ...
    for i in range(26, n):
        labels.append(letters[i // 26 - 1] + letters[i % 26])
    return labels


@dataclass
class MqaPrompt:
    template_id: TemplateId
    question: str
    options: list[tuple[str, str]]
    targets: list[str | None]  # slot name (or value) chosen by each label; None for "none"
    text: str
    predicted_slot: str = ""
    value: str = ""
    expected_answer_form: str = "single option label"

    def target_for(self, label: str) -> str | None:
        return dict(zip((l for l, _ in self.options), self.targets))[label]

    def label_for(self, target: str | None) -> str:
        for (label, _), t in zip(self.options, self.targets):
            if t == target:
                return label
        raise KeyError(target)


@dataclass
class QaPrompt:
    context: list[str]
    questions: list[tuple[str, str]]
    text: str = ""

    @property
    def slots(self) -> list[str]:
        return [slot for slot, _ in self.questions]


# -- schema supervisor ----------------------------------------------------


def slot_definition(slot: SlotSpec) -> str:
    """Option text for the unknown-slot template: integer slots show their
    type, categorical slots their values, everything else its description."""
    if slot.is_categorical:
        return f"{slot.name}: {', '.join(slot.possible_values)}"
    if slot.data_type == INTEGER:
        return f"{slot.name}: integer"
    return f"{slot.name}: {slot.description}"


def categorical_definition(slot: SlotSpec) -> str:
    return f"{slot.name}: {slot.description}. Possible values: {', '.join(slot.possible_values)}"


def _paraphrase_texts(slots: Sequence[SlotSpec]) -> list[str]:
    descriptions = [s.description for s in slots]
    return [d if descriptions.count(d) == 1 else f"{d} ({s.name})" for s, d in zip(slots, descriptions)]


def _mqa(template_id, targets, texts, statement, intent, none_option=True, **fields) -> MqaPrompt:
    texts = list(texts)
    targets = list(targets)
    if none_option:
        texts.append(NONE_OPTION)
        targets.append(None)
    labels = option_labels(len(texts))
    options = list(zip(labels, texts))
    rendered_options = "\n".join(f"{label}) {text}" for label, text in options)
    text = templates.render(
        _TEMPLATE_FILES[template_id],
        statement=statement,
        intent=intent,
        options=rendered_options,
        **fields,
    )
    question = text.split("\n" + rendered_options)[0]
    return MqaPrompt(template_id, question, options, targets, text)


def build_ss_prompt(
    error: UnknownSlot,
    schema: ServiceSchema,
    training_lexicon: Iterable[str] = (),
    statement: str = "",
) -> MqaPrompt:
    """Choose and render the schema-supervisor template for an unknown slot."""
    predicted = error.slot
    value = "" if error.value is None else str(error.value)
    intent = error.intent or schema.service_name
    fields = {"predicted_slot": predicted, "value": value}
    if predicted in set(training_lexicon) and not schema.has_slot(predicted):
        prompt = _mqa(
            TemplateId.PARAPHRASE,
            schema.slot_names,
            _paraphrase_texts(schema.slots),
            statement,
            intent,
            **fields,
        )
    else:
        matching = [s for s in schema.slots if s.is_categorical and value in s.possible_values]
        if matching:
            if len(matching) > 1:
                log.info("value %r fits categorical slots %s", value, ", ".join(s.name for s in matching))
            prompt = _mqa(
                TemplateId.UNKNOWN_SLOT_CATEGORICAL_VALUE,
                [s.name for s in matching],
                [categorical_definition(s) for s in matching],
                statement,
                intent,
                **fields,
            )
        else:
            prompt = _mqa(
                TemplateId.UNKNOWN_SLOT,
                schema.slot_names,
                [slot_definition(s) for s in schema.slots],
                statement,
                intent,
                **fields,
            )
    prompt.predicted_slot, prompt.value = predicted, value
    return prompt


def build_ss_value_prompt(slot: SlotSpec, bad_value: str, statement: str = "", intent: str = "") -> MqaPrompt:
    if not slot.is_categorical:
        raise PreconditionError(f"slot {slot.name!r} is not categorical")
    prompt = _mqa(
        TemplateId.CATEGORICAL_VALUE_ONLY,
        slot.possible_values,
        slot.possible_values,
        statement,
        intent or slot.name,
        none_option=False,
        slot=slot.name,
        value=bad_value,
    )
    prompt.predicted_slot, prompt.value = slot.name, str(bad_value)
    return prompt


def normalize_label(answer: str) -> str:
    token = answer.strip().split()[0] if answer.strip() else ""
    return token.rstrip(").:").upper()


def _rename_in_statement(stmt: dsl.Statement, old: str, new: str) -> dsl.Statement:
    if isinstance(stmt, dsl.Assign) and stmt.target.attribute == old:
        return dsl.Assign(dsl.Target(stmt.target.variable, new), stmt.value)
    call = _statement_call(stmt)
    if call is not None and old in call.kwargs():
        if new in call.kwargs():
            raise InvalidAnswer(f"{new!r} is already assigned in {dsl.render_statement(stmt)}")
        keyword = tuple((new if k == old else k, v) for k, v in call.keyword)
        return _replace_call(stmt, dsl.CallExpr(call.callee, call.positional, keyword))
    raise InvalidAnswer(f"{old!r} is not assigned in {dsl.render_statement(stmt)}")


def _replace_value(stmt: dsl.Statement, slot: str, value: str) -> dsl.Statement:
    if isinstance(stmt, dsl.Assign) and stmt.target.attribute == slot:
        return dsl.Assign(stmt.target, dsl.Literal(value))
    call = _statement_call(stmt)
    if call is not None and slot in call.kwargs():
        keyword = tuple((k, dsl.Literal(value) if k == slot else v) for k, v in call.keyword)
        return _replace_call(stmt, dsl.CallExpr(call.callee, call.positional, keyword))
    raise InvalidAnswer(f"{slot!r} is not assigned in {dsl.render_statement(stmt)}")


def _statement_call(stmt: dsl.Statement) -> dsl.CallExpr | None:
    if isinstance(stmt, dsl.BareCall):
        return stmt.call
    if isinstance(stmt, dsl.Assign) and stmt.target.attribute is None and isinstance(stmt.value, dsl.CallExpr):
        return stmt.value
    return None


def _replace_call(stmt: dsl.Statement, new_call: dsl.CallExpr) -> dsl.Statement:
    if isinstance(stmt, dsl.BareCall):
        return dsl.BareCall(new_call)
    return dsl.Assign(stmt.target, new_call)


def apply_mqa_answer(prompt: MqaPrompt, answer: str, stmt: dsl.Statement) -> dsl.Statement:
    """Rewrite ``stmt`` according to the option the supervisor chose."""
    label = normalize_label(answer)
    labels = [l for l, _ in prompt.options]
    if label not in labels:
        raise InvalidAnswer(f"answer {answer!r} is not one of the labels {', '.join(labels)}")
    target = prompt.target_for(label)
    if target is None:
        raise InvalidAnswer("the supervisor selected the none option")
    if prompt.template_id == TemplateId.CATEGORICAL_VALUE_ONLY:
        return _replace_value(stmt, prompt.predicted_slot, target)
    return _rename_in_statement(stmt, prompt.predicted_slot, target)


# -- parser supervisor ----------------------------------------------------


def question_text(description: str) -> str:
    return description.strip().lower() + "?"


def build_ps_prompt(history, omitted: Iterable[str], schema: ServiceSchema, current_task: int) -> QaPrompt:
    """Extractive QA prompt over the current task's user and agent turns."""
    context = [
        f"{turn.speaker}: {turn.utterance}"
        for turn in history
        if turn.speaker in ("user", "agent") and turn.task_index == current_task and turn.utterance
    ]
    questions = [(slot, question_text(schema.slot(slot).description)) for slot in omitted]
    text = templates.render(
        "ps_extractive_qa",
        context="\n".join(context),
        questions="\n".join(f"{i}. {q}" for i, (_, q) in enumerate(questions, start=1)),
    )
    return QaPrompt(context, questions, text)


def parse_ps_answers(prompt: QaPrompt, answer_text: str) -> dict[str, str]:
    """One answer per line, in question order; missing lines are unanswerable."""
    lines = [line.strip() for line in answer_text.strip().splitlines()] if answer_text.strip() else []
    answers = {}
    for i, slot in enumerate(prompt.slots):
        line = lines[i] if i < len(lines) else ""
        prefix = f"{i + 1}."
        if line.startswith(prefix):
            line = line[len(prefix):].strip()
        answers[slot] = line
    return answers


def is_unanswerable(answer: str | None) -> bool:
    return answer is None or answer.strip() == "" or answer.strip().lower() == NONE_OPTION


def assigned_values(stmt: dsl.Statement) -> list[tuple[str, dsl.Expr]]:
    """Slot assignments made by a statement: attribute targets and call keywords."""
    if isinstance(stmt, dsl.Assign) and stmt.target.attribute is not None:
        return [(stmt.target.attribute, stmt.value)]
    call = _statement_call(stmt)
    if call is not None and call.name not in ("say", "next", "select"):
        return list(call.keyword)
    return []


def _literal_text(expr) -> str | None:
    if isinstance(expr, dsl.Literal) and not isinstance(expr.value, tuple):
        return str(expr.value).strip()
    return None


def apply_ps_answers(
    answers: Mapping[str, str],
    constrained: Sequence[dsl.Statement],
    api_var: str,
    schema: ServiceSchema,
) -> list[dsl.Statement]:
    """Rename semantically confused open-valued slots, else append assignments."""
    result = list(constrained)
    renamed: set[int] = set()
    for slot, answer in answers.items():
        if is_unanswerable(answer) or not schema.has_slot(slot):
            continue
        value = answer.strip()
        target_index = None
        if not schema.slot(slot).is_categorical:
            for i, stmt in enumerate(result[: len(constrained)]):
                if i in renamed:
                    continue
                for name, expr in assigned_values(stmt):
                    if name != slot and _literal_text(expr) == value:
                        target_index, old = i, name
                        break
                if target_index is not None:
                    break
        if target_index is not None:
            result[target_index] = _rename_in_statement(result[target_index], old, slot)
            renamed.add(target_index)
        else:
            result.append(dsl.Assign(dsl.Target(api_var, slot), dsl.Literal(value)))
    return result
