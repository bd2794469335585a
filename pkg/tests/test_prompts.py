import pytest

from pytodrt import dsl
from pytodrt.errors import PreconditionError
from pytodrt.prompts import (
    InstructionKind,
    SessionTranscript,
    TurnRecord,
    assemble_ap_prompt,
    render_entity_instruction,
    render_policy_note,
    render_transcript,
    statement_lines,
)
from pytodrt.session import DialogueSession
from pytodrt import templates


def s(text):
    return dsl.parse_statement(text)


def test_empty_transcript():
    assert render_transcript(SessionTranscript()) == ""
    assert assemble_ap_prompt("HEADER\n", SessionTranscript()) == "HEADER\n"


def test_turn_order_and_suppression():
    transcript = SessionTranscript(
        [
            TurnRecord("user", "Bus to Sacramento.", [s('x1 = FindBus(to_city="Sacramento")'), s('x2 = Hint("request value: from_city")')]),
            TurnRecord("agent", "Where from?", [s("say(x2)")]),
        ],
        consumed={"x2"},
    )
    assert render_transcript(transcript) == 'user: Bus to Sacramento.\nx1 = FindBus(to_city="Sacramento")\nagent: Where from?\n'


def test_unconsumed_hint_is_shown():
    transcript = SessionTranscript([TurnRecord("user", "Hi", [s('x2 = Hint("request value: from_city")')])])
    assert 'x2 = Hint("request value: from_city")' in transcript.render()


def test_instruction_follows_anchor():
    note = render_policy_note("BuyBusTicket", "x4", anchor=0)
    turn = TurnRecord("user", "Yes.", [s("x5 = confirm(x4)"), s("x6 = perform(x4)")], instructions=[note])
    lines = render_transcript(SessionTranscript([turn])).splitlines()
    assert lines[1] == "x5 = confirm(x4)"
    assert lines[2].startswith("developer: If the call to BuyBusTicket fails")
    assert lines[3] == "x6 = perform(x4)"


def test_entity_instruction_lists_properties():
    inst = render_entity_instruction("FindBusResult", [("price", "Price of the ticket")], "x3")
    assert inst.kind == InstructionKind.ENTITY_PROPERTIES
    assert "  - price: Price of the ticket" in inst.body
    with pytest.raises(PreconditionError):
        render_entity_instruction("FindBusResult", [])


def test_unknown_speaker():
    with pytest.raises(ValueError):
        TurnRecord("system", "hi")


def test_render_cache_invalidation():
    transcript = SessionTranscript()
    transcript.append(TurnRecord("user", "one"))
    first = transcript.render()
    transcript.append(TurnRecord("user", "two"))
    assert transcript.render() != first


def test_statement_lines():
    text = 'user: hi\nx1 = FindBus()\ndeveloper: note\n  - a: b\nagent: ok\n'
    assert list(statement_lines(text)) == ["x1 = FindBus()"]


def test_session_header_prefix(catalog, bus_db):
    session = DialogueSession(catalog, {"Buses_3": bus_db})
    session.execute_user_statements("Buses_3", "Bus from Fresno.", ['x1 = FindBus(from_city="Fresno")'])
    prompt = session.ap_prompt("Buses_3")
    assert prompt.startswith(templates.template_text("task_instructions").rstrip("\n"))
    assert prompt.endswith('user: Bus from Fresno.\nx1 = FindBus(from_city="Fresno")\nx2 = Hint("request value: to_city")\nx3 = Hint("request value: departure_date")\n')


def test_agent_turn_offers_entity(catalog, bus_db):
    session = DialogueSession(catalog, {"Buses_3": bus_db})
    session.execute_user_statements(
        "Buses_3", "LA to Sacramento on the 3rd.",
        ['x1 = FindBus(from_city="Los Angeles", to_city="Sacramento", departure_date="2019-03-03")'],
    )
    stmts = session.agent_turn("Buses_3", "There is an 11am bus.", offer=True)
    assert [dsl.render_statement(x) for x in stmts] == ["x3 = next(x2)", "say(x3)"]
    assert session.last_entity("Buses_3") == "x3"


def test_template_override(tmp_path, monkeypatch):
    (tmp_path / "policy_note.txt").write_text("custom $intent $variable", encoding="utf-8")
    monkeypatch.setenv("PYTODRT_TEMPLATE_DIR", str(tmp_path))
    assert render_policy_note("A", "x1").body == "custom A x1"
