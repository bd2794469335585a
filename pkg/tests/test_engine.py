import copy

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from pytodrt.dsl import parse_statement, render_statement
from pytodrt.engine import (
    Environment,
    ExecutionContext,
    active_api_var,
    execute,
)
from pytodrt.environment import HintRequestValue, Phase, Show
from pytodrt.errors import (
    ExhaustedResults,
    NoActiveApi,
    Rebound,
    ReservedRoutine,
    UnboundVariable,
    UnknownIntent,
    UnknownSlot,
    WrongKind,
)


def run(ctx, env, *lines):
    outcomes = []
    for line in lines:
        outcome = execute(parse_statement(line), ctx, env)
        assert outcome.ok, (line, outcome.errors)
        outcomes.append(outcome)
    return outcomes


def rendered(outcome):
    return [render_statement(s) for s in outcome.statements()]


def test_instantiation_emits_hint(ctx, bus_env):
    (out,) = run(ctx, bus_env, 'x1 = FindBus(from_city="Los Angeles", to_city="Sacramento")')
    assert out.actions() == [HintRequestValue(slot="departure_date")]
    assert rendered(out) == ['x2 = Hint("request value: departure_date")']


def test_search_flow_and_next(ctx, bus_env):
    out = run(
        ctx,
        bus_env,
        'x1 = FindBus(to_city="Sacramento", departure_date="2019-03-03")',
        'x1.from_city = "Los Angeles"',
    )[-1]
    assert rendered(out) == ["x3 = query(x1)"]
    run(ctx, bus_env, "x4 = next(x3)")
    assert ctx.bindings["x4"].properties["departure_time"] == "11:00"
    failed = execute(parse_statement("x5 = next(x3)"), ctx, bus_env)
    assert isinstance(failed.errors[0], ExhaustedResults)


def test_select_fills_parameters(ctx, bus_env):
    run(
        ctx,
        bus_env,
        'x1 = FindBus(from_city="Los Angeles", to_city="Sacramento", departure_date="2019-03-03")',
        "x3 = next(x2)",
        "x4 = BuyBusTicket(travelers=2)",
    )
    out = run(ctx, bus_env, "x20 = select(x3)")[0]
    api = ctx.bindings["x4"]
    assert api.slot_values["departure_time"] == "11:00"
    assert api.phase == Phase.AWAITING_CONFIRMATION
    assert rendered(out)[0].startswith('x21 = Hint("confirm"')


def test_confirm_then_perform(ctx, bus_env):
    run(
        ctx,
        bus_env,
        'x1 = BuyBusTicket(from_city="Fresno", to_city="Sacramento", departure_date="2019-03-03",'
        ' departure_time="12:00", travelers=1)',
    )
    out = run(ctx, bus_env, "x3 = confirm(x1, additional_luggage=True)")[0]
    assert rendered(out) == ["x4 = perform(x1)"]
    assert out.confirmed == ["x1"]
    assert ctx.bindings["x1"].phase == Phase.EXECUTED
    assert ctx.task_stack[-1].intent_name == "BuyBusTicket"


def test_say_marks_consumed(ctx, bus_env):
    run(ctx, bus_env, "x1 = FindBus()", "say(x2, x3)")
    assert {"x2", "x3"} <= ctx.consumed


@pytest.mark.parametrize(
    "line, error",
    [
        ("x9 = FindTrain()", UnknownIntent),
        ('x1.to_town = "a"', UnknownSlot),
        ("x1 = FindBus()", Rebound),
        ("say(x42)", UnboundVariable),
        ("x9 = next(x1)", WrongKind),
        ("x9 = query(x1)", ReservedRoutine),
        ('x9 = Hint("x")', ReservedRoutine),
        ("x9 = FindBus(x1)", WrongKind),
    ],
)
def test_errors_leave_context_untouched(ctx, bus_env, line, error):
    run(ctx, bus_env, 'x1 = FindBus(from_city="Fresno")')
    before = copy.deepcopy(ctx)
    out = execute(parse_statement(line), ctx, bus_env)
    assert isinstance(out.errors[0], error)
    assert ctx == before


def test_active_api_is_most_recent(ctx, bus_env):
    with pytest.raises(NoActiveApi):
        active_api_var(ctx)
    run(ctx, bus_env, "x1 = FindBus()", "x5 = BuyBusTicket()")
    assert active_api_var(ctx) == "x5"


def test_variables_are_fresh_and_increasing(ctx, bus_env):
    run(ctx, bus_env, "x7 = FindBus()")
    assert ctx.peek_variable() == "x11"  # three hints minted after x7


def test_snapshot_is_independent(ctx, bus_env):
    run(ctx, bus_env, "x1 = FindBus()")
    snap = ctx.snapshot()
    run(ctx, bus_env, 'x1.from_city = "Fresno"')
    assert "from_city" not in snap.bindings["x1"].slot_values
    assert snap.bindings["x1"].service is ctx.bindings["x1"].service


def test_dontcare_does_not_filter(ctx, bus_env):
    out = run(
        ctx, bus_env, 'x1 = FindBus(from_city="dontcare", to_city="Sacramento", departure_date="2019-03-03")'
    )[0]
    (show,) = out.actions(Show)
    assert len(show.results) == 2


# Fuzzed statements: a failing statement never mutates the context.
names = st.sampled_from(["x1", "x2", "x3", "x4", "x9"])
slots = st.sampled_from(["from_city", "to_city", "departure_date", "travelers", "category", "bogus"])
values = st.sampled_from(['"Fresno"', '"Sacramento"', "2", '"abc"', '"direct"', '"nonstop"', "True", '""'])
lines = st.one_of(
    st.builds(lambda n, s, v: f"{n}.{s} = {v}", names, slots, values),
    st.builds(lambda n, s, v: f"{n} = FindBus({s}={v})", names, slots, values),
    st.builds(lambda n: f"x9 = next({n})", names),
    st.builds(lambda n: f"x9 = select({n})", names),
    st.builds(lambda n: f"x9 = confirm({n})", names),
    st.builds(lambda n: f"say({n})", names),
)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(lines, max_size=8))
def test_execution_is_atomic(bus_db, buses, program):
    ctx = ExecutionContext()
    env = Environment(buses, bus_db)
    for line in program:
        before = copy.deepcopy(ctx)
        out = execute(parse_statement(line), ctx, env)
        if not out.ok:
            assert ctx == before
