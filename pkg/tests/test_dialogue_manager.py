import copy
import random
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from pytodrt import dsl
from pytodrt.dialogue_manager import (
    Backends,
    CorrectionKind,
    DialogueManager,
    RequestedSlots,
    constrain_api_name,
    levenshtein,
    replay_corrections,
)
from pytodrt.engine import BUILTINS, execute
from pytodrt.environment import Notification
from pytodrt.errors import BackendError
from pytodrt.state_eval import extract_state
from pytodrt.supervisors import TemplateId, assigned_values

from conftest import FLIGHT_REPAIR_BACKEND, RuleBackend, flight_repair_session


def manager(backend=None, lexicon=()):
    return DialogueManager(Backends.uniform(backend or RuleBackend()), lexicon)


def kinds(result):
    return [c.kind for c in result.report.corrections]


# -- Levenshtein oracle -----------------------------------------------------


def oracle_distance(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def oracle_constrain(predicted, candidates):
    best = None
    for position, name in enumerate(candidates):
        key = (oracle_distance(predicted, name), position)
        if best is None or key < best[0]:
            best = (key, name)
    return best[1]


def fuzz_name(rng, name):
    chars = list(name)
    for _ in range(rng.randint(0, 4)):
        op = rng.choice("ids")
        pos = rng.randrange(len(chars) + (op == "i")) if chars or op == "i" else 0
        letter = rng.choice("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
        if op == "i":
            chars.insert(pos, letter)
        elif chars and op == "d":
            del chars[pos]
        elif chars:
            chars[pos] = letter
    return "".join(chars)


def fuzzed_names(catalog, n=500, seed=7):
    rng = random.Random(seed)
    services = list(catalog.services.values())
    out = []
    for _ in range(n):
        service = rng.choice(services)
        out.append((fuzz_name(rng, rng.choice(service.intent_names)), service.intent_names))
    return out


def test_levenshtein_known_values():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "abc") == 3
    assert levenshtein("FindBus", "FindBus") == 0


@settings(max_examples=500, deadline=None)
@given(st.text("abc", max_size=7), st.text("abc", max_size=7))
def test_levenshtein_matches_recursive_definition(a, b):
    assert levenshtein(a, b) == oracle_distance(a, b)


def test_constraining_matches_oracle_on_fuzzed_names(catalog):
    for predicted, candidates in fuzzed_names(catalog):
        assert constrain_api_name(predicted, candidates) == oracle_constrain(predicted, candidates)


def test_tie_goes_to_first_in_header():
    # "FindBx" is one edit from both names
    assert constrain_api_name("FindBx", ["FindBy", "FindBz"]) == "FindBy"
    assert constrain_api_name("FindBx", ["FindBz", "FindBy"]) == "FindBz"


def test_constraining_needs_candidates():
    with pytest.raises(ValueError):
        constrain_api_name("x", [])


# -- pipeline ---------------------------------------------------------------


def test_clean_output_is_untouched(ctx, bus_env):
    result = manager().process_turn('x1 = FindBus(from_city="Fresno")', ctx, bus_env)
    assert result.report.corrections == []
    assert result.requested == RequestedSlots(("to_city", "departure_date"), "x1")


def test_misspelt_api_is_constrained(ctx, bus_env):
    result = manager().process_turn('x1 = FindBuss(from_city="Fresno")', ctx, bus_env)
    assert kinds(result) == [CorrectionKind.API_NAME_EDIT_DISTANCE]
    assert ctx.bindings["x1"].name == "FindBus"


def test_builtins_are_not_constrained(ctx, bus_env):
    manager().process_turn("x1 = FindBus()\nsay(x2)", ctx, bus_env)
    assert "x2" in ctx.consumed


def test_unparsable_line_becomes_parse_error(ctx, bus_env):
    result = manager().process_turn('x1 = FindBus(from_city="Fresno")\nx1.to_city = = 3', ctx, bus_env)
    assert kinds(result) == [CorrectionKind.PARSE_ERROR_INSERTED]
    assert result.report.constrained_statements[1] == dsl.ParseErrorMarker()
    assert ctx.bindings["x1"].slot_values == {"from_city": "Fresno"}


def test_ss_unknown_slot(ctx, bus_env):
    backend = RuleBackend(ss={"to_town": "to_city"})
    result = manager(backend).process_turn('x1 = FindBus(to_town="Sacramento")', ctx, bus_env)
    assert kinds(result) == [CorrectionKind.SS_UNKNOWN_SLOT]
    assert ctx.bindings["x1"].slot_values == {"to_city": "Sacramento"}
    (request,) = backend.requests
    assert request.max_answer_tokens == 1
    assert request.context["template_id"] == TemplateId.UNKNOWN_SLOT.value


def test_ss_unknown_slot_with_categorical_value(ctx, bus_env):
    backend = RuleBackend(ss={"stops": "category"})
    result = manager(backend).process_turn('x1 = FindBus(stops="one-stop")', ctx, bus_env)
    assert backend.requests[0].context["template_id"] == TemplateId.UNKNOWN_SLOT_CATEGORICAL_VALUE.value
    assert backend.requests[0].context["targets"] == ["category", None]
    assert ctx.bindings["x1"].slot_values == {"category": "one-stop"}
    assert kinds(result) == [CorrectionKind.SS_UNKNOWN_SLOT]


def test_ss_paraphrase_for_training_slot(ctx, bus_env):
    backend = RuleBackend(ss={"date": "departure_date"})
    result = manager(backend, lexicon=["date"]).process_turn('x1 = FindBus(date="2019-03-03")', ctx, bus_env)
    assert backend.requests[0].context["template_id"] == TemplateId.PARAPHRASE.value
    assert kinds(result) == [CorrectionKind.SS_PARAPHRASE]
    assert ctx.bindings["x1"].slot_values == {"departure_date": "2019-03-03"}


def test_ss_categorical_value(ctx, bus_env):
    backend = RuleBackend(ss={"category": "direct"})
    result = manager(backend).process_turn('x1 = FindBus(category="nonstop")', ctx, bus_env)
    assert backend.requests[0].context["template_id"] == TemplateId.CATEGORICAL_VALUE_ONLY.value
    assert None not in backend.requests[0].context["targets"]
    assert kinds(result) == [CorrectionKind.SS_CATEGORICAL_VALUE]
    assert ctx.bindings["x1"].slot_values == {"category": "direct"}


def test_none_answer_drops_statement(ctx, bus_env):
    result = manager().process_turn('x1 = FindBus(from_city="Fresno")\nx1.weather = "sunny"', ctx, bus_env)
    assert kinds(result) == [CorrectionKind.DROPPED]
    assert len(result.report.constrained_statements) == 1


def test_ss_runs_once_per_slot(ctx, bus_env):
    # the supervisor keeps answering with a slot that then fails coercion
    backend = RuleBackend(ss={"count": "travelers", "abc": "travelers"})
    result = manager(backend).process_turn('x1 = FindBus(count="abc")', ctx, bus_env)
    assert len(backend.requests) == 1
    assert kinds(result) == [CorrectionKind.SS_UNKNOWN_SLOT, CorrectionKind.DROPPED]
    assert "x1" not in ctx.bindings


def test_exhausted_results_notify(ctx, bus_env):
    m = manager()
    m.process_turn(
        'x1 = FindBus(from_city="Fresno", to_city="Sacramento", departure_date="2019-03-03")\nx3 = next(x2)',
        ctx,
        bus_env,
    )
    result = m.process_turn("x4 = next(x2)", ctx, bus_env)
    assert result.report.corrections == []
    assert isinstance(result.outcome.actions()[0], Notification)


def test_backend_error_rolls_back(ctx, bus_env):
    manager().process_turn('x1 = FindBus(from_city="Fresno")', ctx, bus_env)
    before = copy.deepcopy(ctx)
    with pytest.raises(BackendError):
        manager(RuleBackend(fail=True)).process_turn('x1.to_city = "Sacramento"\nx1.to_town = "x"', ctx, bus_env)
    assert ctx == before


def test_missing_backend_is_backend_error(ctx, bus_env):
    with pytest.raises(BackendError):
        DialogueManager(Backends()).process_turn('x1 = FindBus(to_town="x")', ctx, bus_env)


def test_flight_repair_pipeline(catalog):
    backend = RuleBackend(**FLIGHT_REPAIR_BACKEND)
    session, result = flight_repair_session(catalog, backend)
    assert kinds(result) == [CorrectionKind.SS_UNKNOWN_SLOT, CorrectionKind.PS_OMISSION]
    state = extract_state(session.ctx, catalog["Flights_1"])
    assert dict(state.slot_values) == {
        "origin_city": frozenset({"Los Angeles"}),
        "destination_city": frozenset({"San Diego"}),
        "departure_date": frozenset({"2019-03-07"}),
    }
    ps = [r for r in backend.requests if r.context.get("slots")]
    assert ps[0].context["slots"] == ["departure_date"]
    assert "departure date of the flight?" in ps[0].prompt


def test_ps_renames_confused_slot(catalog, flights):
    from pytodrt.engine import Environment, ExecutionContext
    from pytodrt.environment import Database

    ctx = ExecutionContext()
    env = Environment(flights, Database())
    execute(dsl.parse_statement('x1 = SearchOnewayFlight(origin_city="Los Angeles")'), ctx, env)
    backend = RuleBackend(ps={"destination_city": "San Diego", "departure_date": "none"})
    result = manager(backend).process_turn(
        'x1.departure_date = "San Diego"', ctx, env, RequestedSlots(("destination_city", "departure_date"), "x1")
    )
    assert CorrectionKind.PS_SEMANTIC_RENAME in kinds(result)
    assert ctx.bindings["x1"].slot_values == {"origin_city": "Los Angeles", "destination_city": "San Diego"}


def test_ps_skipped_when_task_changes(ctx, bus_env):
    m = manager(RuleBackend(ps={"departure_date": "2019-03-03"}))
    first = m.process_turn('x1 = FindBus(from_city="Fresno", to_city="Sacramento")', ctx, bus_env)
    result = m.process_turn("x3 = BuyBusTicket()", ctx, bus_env, first.requested)
    assert result.omitted == []
    assert "departure_date" not in ctx.bindings["x1"].slot_values


def test_ps_without_answers_changes_nothing(ctx, bus_env):
    m = manager(RuleBackend())
    first = m.process_turn('x1 = FindBus(from_city="Fresno")', ctx, bus_env)
    result = m.process_turn('x1.to_city = "Sacramento"', ctx, bus_env, first.requested)
    assert result.omitted == ["departure_date"]
    assert [c.kind for c in result.report.corrections] == []


# -- correction log -----------------------------------------------------------


def test_corrections_replay_flight_repair(catalog):
    _, result = flight_repair_session(catalog, RuleBackend(**FLIGHT_REPAIR_BACKEND))
    report = result.report
    assert replay_corrections(report.raw_output, report.corrections) == report.constrained_statements


def test_correction_events_serialise(ctx, bus_env):
    result = manager().process_turn('x1 = FindBuss(from_city="Fresno")', ctx, bus_env)
    row = result.report.corrections[0].to_json()
    assert row["kind"] == "ApiNameEditDistance"
    assert row["after"] == 'x1 = FindBus(from_city="Fresno")'


# -- noisy parser: closure and replay -----------------------------------------

SLOT_NOISE = ["to_town", "date", "stops", "count", "weather", "from_city", "to_city", "travelers", "category"]
VALUES = ['"Fresno"', '"Sacramento"', "2", '"one-stop"', '"nonstop"', '"2019-03-03"', '"x"']
CALLS = ["FindBus", "FindBsu", "BuyBusTcket", "GetWeather", "BuyBusTicket"]


def noisy_program(rng):
    lines = []
    for _ in range(rng.randint(1, 5)):
        roll = rng.random()
        if roll < 0.3:
            kw = ", ".join(f"{rng.choice(SLOT_NOISE)}={rng.choice(VALUES)}" for _ in range(rng.randint(0, 2)))
            lines.append(f"x{rng.randint(1, 3)} = {rng.choice(CALLS)}({kw})")
        elif roll < 0.8:
            lines.append(f"x{rng.randint(1, 3)}.{rng.choice(SLOT_NOISE)} = {rng.choice(VALUES)}")
        elif roll < 0.9:
            lines.append("x1.to_city = = ")
        else:
            lines.append(f"x9 = next(x{rng.randint(1, 9)})")
    return "\n".join(lines)


class RandomBackend(RuleBackend):
    def __init__(self, seed):
        super().__init__()
        self.rng = random.Random(seed)

    def complete(self, request):
        if "labels" in request.context:
            return self.rng.choice(request.context["labels"] + ["?"])
        return "\n".join(self.rng.choice(["none", "Fresno", "2"]) for _ in request.context["slots"])


def closure_violations(statements, schema):
    bad = []
    for stmt in statements:
        for name, _ in assigned_values(stmt):
            if not schema.has_slot(name):
                bad.append(name)
        call = stmt.value if isinstance(stmt, dsl.Assign) and isinstance(stmt.value, dsl.CallExpr) else None
        if call is not None and stmt.target.attribute is None:
            if call.name not in BUILTINS and not schema.has_intent(call.name):
                bad.append(call.name)
    return bad


def test_noisy_parser_closure_and_replay(buses, bus_db):
    from pytodrt.engine import Environment, ExecutionContext

    env = Environment(buses, bus_db)
    for seed in range(200):
        rng = random.Random(seed)
        ctx = ExecutionContext()
        m = manager(RandomBackend(seed), lexicon=["date", "count"])
        requested = RequestedSlots()
        for _ in range(3):
            raw = noisy_program(rng)
            result = m.process_turn(raw, ctx, env, requested)
            report = result.report
            assert closure_violations(report.constrained_statements, buses) == [], raw
            assert replay_corrections(raw, report.corrections) == report.constrained_statements, raw
            requested = result.requested


def test_oracle_with_wrong_ss_answer(catalog):
    from pytodrt.backends import Purpose, fingerprint

    # first pass records every prompt; the book then answers them all, with one SS answer flipped
    recorder = RuleBackend(**FLIGHT_REPAIR_BACKEND)
    flight_repair_session(catalog, recorder)
    book = {}
    for request in recorder.requests:
        if request.purpose == Purpose.SCHEMA_SUPERVISION:
            ctx = request.context
            book[fingerprint(request.purpose, request.prompt)] = ctx["labels"][ctx["targets"].index("origin_city")]
    session, result = flight_repair_session(catalog, _BookThenRules(book))
    ss = [c for c in result.report.corrections if c.kind == CorrectionKind.SS_UNKNOWN_SLOT]
    assert [c.after for c in ss] == ['x1.origin_city = "San Diego"']
    assert ss[0].prompt_id in book


class _BookThenRules(RuleBackend):
    def __init__(self, book):
        super().__init__(ps={"departure_date": "2019-03-07", "destination_city": "San Diego"})
        from pytodrt.backends import OracleBackend

        self.oracle = OracleBackend(book)

    def complete(self, request):
        from pytodrt.backends import Purpose

        if request.purpose == Purpose.SCHEMA_SUPERVISION:
            return self.oracle.complete(request)
        return super().complete(request)
