"""Walk one flight-search turn through the dialogue manager.

The parser writes the destination into a slot the schema does not have and
drops the date. The schema supervisor repairs the slot name and the parser
supervisor recovers the date.

    python3 scripts/flight_repair_demo.py
"""
from pathlib import Path

from pytodrt.backends import Purpose
from pytodrt.dialogue_manager import Backends, DialogueManager
from pytodrt.schema import load_schema_catalog
from pytodrt.session import DialogueSession
from pytodrt.state_eval import extract_state

SCHEMA = Path(__file__).resolve().parent.parent / "tests" / "data" / "schema.json"


class CannedSupervisor:
    """Answers SS by picking the listed slot and PS by slot lookup."""

    ss_target = {"to_city": "destination_city"}
    ps_answers = {"departure_date": "2019-03-07"}

    def complete(self, request):
        ctx = request.context
        if request.purpose == Purpose.SCHEMA_SUPERVISION:
            wanted = self.ss_target.get(ctx["predicted_slot"])
            return ctx["labels"][ctx["targets"].index(wanted)]
        if request.purpose == Purpose.PARSER_SUPERVISION:
            return "\n".join(self.ps_answers.get(s, "none") for s in ctx["slots"])
        raise RuntimeError("the parser output is given inline")


def main():
    catalog = load_schema_catalog(SCHEMA)
    session = DialogueSession(catalog, {}, DialogueManager(Backends.uniform(CannedSupervisor()), []))
    session.execute_user_statements(
        "Flights_1", "Find me a flight from LA.", ['x1 = SearchOnewayFlight(origin_city="Los Angeles")']
    )
    session.agent_turn("Flights_1", "Where are you flying to, and when?")
    result = session.user_turn("Flights_1", "To San Diego on the 7th of March.", raw_output='x1.to_city = "San Diego"')

    print("== transcript")
    print(session.transcript.render())
    print("\n== corrections")
    for c in result.report.corrections:
        print(f"{c.kind.value}: {c.before!r} -> {c.after!r}")
    print("\n== state")
    state = extract_state(session.ctx, catalog["Flights_1"])
    print(state.active_intent)
    for slot, values in sorted(state.slot_values.items()):
        print(f"  {slot} = {sorted(values)}")


if __name__ == "__main__":
    main()
