import pytest

from pytodrt import dsl
from pytodrt.errors import InvalidAnswer, PreconditionError, UnknownSlot
from pytodrt.prompts import TurnRecord
from pytodrt.supervisors import (
    NONE_OPTION,
    TemplateId,
    apply_mqa_answer,
    apply_ps_answers,
    build_ps_prompt,
    build_ss_prompt,
    build_ss_value_prompt,
    normalize_label,
    option_labels,
    parse_ps_answers,
    question_text,
)


def stmt(text):
    return dsl.parse_statement(text)


def test_option_labels():
    assert option_labels(3) == ["A", "B", "C"]
    labels = option_labels(30)
    assert labels[25:28] == ["Z", "AA", "AB"]
    assert len(set(labels)) == 30


def test_unknown_slot_lists_every_slot_plus_none(buses):
    prompt = build_ss_prompt(UnknownSlot("to_town", "Sacramento", "FindBus"), buses)
    assert prompt.template_id == TemplateId.UNKNOWN_SLOT
    assert prompt.targets == list(buses.slot_names) + [None]
    assert prompt.options[-1][1] == NONE_OPTION
    assert "B) to_city: Destination city" in prompt.text
    assert "F) travelers: 1, 2, 3, 4, 5" in prompt.text


def test_categorical_value_narrows_options(buses):
    prompt = build_ss_prompt(UnknownSlot("stops", "direct", "FindBus"), buses)
    assert prompt.template_id == TemplateId.UNKNOWN_SLOT_CATEGORICAL_VALUE
    assert prompt.targets == ["category", None]


def test_paraphrase_only_for_training_slots(buses):
    error = UnknownSlot("date", "2019-03-03", "FindBus")
    assert build_ss_prompt(error, buses, ["date"]).template_id == TemplateId.PARAPHRASE
    assert build_ss_prompt(error, buses, []).template_id == TemplateId.UNKNOWN_SLOT


def test_value_prompt_has_no_none_option(buses):
    prompt = build_ss_value_prompt(buses.slot("category"), "nonstop", 'x1.category = "nonstop"', "FindBus")
    assert prompt.targets == ["direct", "one-stop"]
    assert NONE_OPTION not in [text for _, text in prompt.options]


def test_value_prompt_requires_categorical(buses):
    with pytest.raises(PreconditionError):
        build_ss_value_prompt(buses.slot("from_city"), "x")


@pytest.mark.parametrize("answer", ["B", " b ", "B)", "B. to_city", "b: whatever"])
def test_label_normalisation(answer):
    assert normalize_label(answer) == "B"


def test_apply_rename(buses):
    prompt = build_ss_prompt(UnknownSlot("to_town", "Sacramento", "FindBus"), buses)
    fixed = apply_mqa_answer(prompt, prompt.label_for("to_city"), stmt('x1 = FindBus(to_town="Sacramento")'))
    assert dsl.render_statement(fixed) == 'x1 = FindBus(to_city="Sacramento")'


def test_apply_rename_attribute(buses):
    prompt = build_ss_prompt(UnknownSlot("to_town", "Sacramento", "FindBus"), buses)
    fixed = apply_mqa_answer(prompt, prompt.label_for("to_city"), stmt('x1.to_town = "Sacramento"'))
    assert dsl.render_statement(fixed) == 'x1.to_city = "Sacramento"'


def test_apply_value(buses):
    prompt = build_ss_value_prompt(buses.slot("category"), "nonstop")
    fixed = apply_mqa_answer(prompt, prompt.label_for("direct"), stmt('x1.category = "nonstop"'))
    assert dsl.render_statement(fixed) == 'x1.category = "direct"'


def test_none_and_bad_labels_are_invalid(buses):
    prompt = build_ss_prompt(UnknownSlot("to_town", "x", "FindBus"), buses)
    with pytest.raises(InvalidAnswer):
        apply_mqa_answer(prompt, prompt.label_for(None), stmt('x1.to_town = "x"'))
    with pytest.raises(InvalidAnswer):
        apply_mqa_answer(prompt, "ZZ", stmt('x1.to_town = "x"'))


def test_rename_onto_existing_keyword_is_invalid(buses):
    prompt = build_ss_prompt(UnknownSlot("to_town", "x", "FindBus"), buses)
    with pytest.raises(InvalidAnswer):
        apply_mqa_answer(prompt, prompt.label_for("to_city"), stmt('x1 = FindBus(to_town="x", to_city="y")'))


def test_question_text():
    assert question_text("Departure date of the flight") == "departure date of the flight?"


def test_ps_prompt_uses_current_task_only(flights):
    history = [
        TurnRecord("user", "Book the bus.", task_index=0),
        TurnRecord("user", "I need a flight to San Diego on the 7th.", task_index=1),
        TurnRecord("agent", "", task_index=1),
    ]
    prompt = build_ps_prompt(history, ["departure_date"], flights, 1)
    assert prompt.context == ["user: I need a flight to San Diego on the 7th."]
    assert prompt.questions == [("departure_date", "departure date of the flight?")]
    assert "1. departure date of the flight?" in prompt.text


def test_parse_ps_answers(flights):
    prompt = build_ps_prompt([], ["destination_city", "departure_date"], flights, 0)
    assert parse_ps_answers(prompt, "1. San Diego\n2. none") == {"destination_city": "San Diego", "departure_date": "none"}
    assert parse_ps_answers(prompt, "San Diego") == {"destination_city": "San Diego", "departure_date": ""}


def test_apply_ps_appends(flights):
    out = apply_ps_answers({"departure_date": "2019-03-07"}, [stmt('x1.destination_city = "San Diego"')], "x1", flights)
    assert dsl.render_statement(out[-1]) == 'x1.departure_date = "2019-03-07"'


def test_apply_ps_renames_matching_value(flights):
    out = apply_ps_answers({"destination_city": "San Diego"}, [stmt('x1.origin_city = "San Diego"')], "x1", flights)
    assert [dsl.render_statement(s) for s in out] == ['x1.destination_city = "San Diego"']


def test_apply_ps_never_renames_categorical(flights):
    before = [stmt("x1.passengers = 2")]
    out = apply_ps_answers({"seating_class": "2"}, before, "x1", flights)
    assert out[0] == before[0]
    assert len(out) == 2


def test_apply_ps_skips_unanswerable(flights):
    assert apply_ps_answers({"departure_date": "None"}, [], "x1", flights) == []
