import json

import pytest

from pytodrt import sgd
from pytodrt.dialogue_manager import Backends
from pytodrt.errors import FormatError, SchemaIOError
from pytodrt.replay import derive_gold_programs, replay_dialogue
from pytodrt.state_eval import evaluate, gold_turns, turn_correct

from conftest import DATA, RuleBackend


@pytest.fixture(scope="module")
def runs(dialogues, catalog, databases, table):
    return {d["dialogue_id"]: replay_dialogue(d, catalog, databases, table) for d in dialogues}


def test_every_turn_matches_gold(runs, dialogues, table):
    for dialogue in dialogues:
        gold = [g for _, g in gold_turns(dialogue, table)]
        run = runs[dialogue["dialogue_id"]]
        assert run.aborted is None
        assert [turn_correct(p, g) for p, g in zip(run.predictions, gold)] == [True] * len(gold)


def test_gold_programs_reproduce_gold(dialogues, catalog, databases, table):
    for dialogue in dialogues:
        _, predictions = derive_gold_programs(dialogue, catalog, databases, table)
        gold = [g for _, g in gold_turns(dialogue, table)]
        assert all(turn_correct(p, g) for p, g in zip(predictions, gold))


def test_scripted_gold_needs_no_repair(runs):
    assert all(not run.corrections for run in runs.values())


def test_restaurant_dialogue_program(runs):
    programs = runs["3_00000"].gold_programs
    flat = [line for turn in programs for line in turn]
    assert any("= select(" in line for line in flat)
    assert any("= confirm(" in line for line in flat)
    assert sum("= ReserveRestaurant(" in line for line in flat) == 2


def test_replay_is_deterministic(dialogues, catalog, databases, table):
    d = dialogues[2]
    first = replay_dialogue(d, catalog, databases, table)
    second = replay_dialogue(d, catalog, databases, table)
    assert first.transcript == second.transcript
    assert [p.to_json() for p in first.predictions] == [p.to_json() for p in second.predictions]


def test_backend_failure_aborts_and_pads(dialogues, catalog, databases, table):
    d = dialogues[0]
    run = replay_dialogue(d, catalog, databases, table, Backends.uniform(RuleBackend(fail=True)))
    assert run.aborted
    assert len(run.predictions) == len(gold_turns(d))
    report = evaluate([d], {d["dialogue_id"]: run.predictions}, catalog, table)
    assert report.jga_overall == 0


# -- ingestion ------------------------------------------------------------


def test_fixtures_contain_search_rows_and_transactions(databases):
    buses = databases["Buses_3"]
    assert buses.tables["FindBus"]
    assert buses.transactions
    restaurants = databases["Restaurants_1"].transactions
    failures = [o for o in restaurants.values() if not o.success]
    assert failures and failures[0].alternatives == {"time": "7:30 pm"}


def test_write_is_idempotent(tmp_path, dialogues, catalog, table):
    fixtures = sgd.build_fixtures(dialogues, catalog)
    sgd.write_fixtures(tmp_path, fixtures, table)
    first = {p.name: p.read_bytes() for p in tmp_path.rglob("*.json")}
    sgd.write_fixtures(tmp_path, sgd.build_fixtures(dialogues, catalog), table)
    assert {p.name: p.read_bytes() for p in tmp_path.rglob("*.json")} == first
    loaded = sgd.load_fixtures(tmp_path, table)
    assert {k: v.to_json() for k, v in loaded.items()} == {k: v.to_json() for k, v in fixtures.items()}
    assert sgd.load_normalization(tmp_path).entries == table.entries


def test_load_fixtures_before_ingest(tmp_path):
    with pytest.raises(SchemaIOError):
        sgd.load_fixtures(tmp_path)


def test_load_dialogues_directory_skips_schema(tmp_path):
    (tmp_path / "schema.json").write_text("[]", encoding="utf-8")
    (tmp_path / "dialogues_001.json").write_text((DATA / "dialogues.json").read_text(), encoding="utf-8")
    assert len(sgd.load_dialogues(tmp_path)) == 4


@pytest.mark.parametrize("payload", ["{", "{}", '[{"turns": []}]'])
def test_bad_dialogue_files(tmp_path, payload):
    path = tmp_path / "d.json"
    path.write_text(payload, encoding="utf-8")
    with pytest.raises(FormatError):
        sgd.load_dialogues(path)


def test_unknown_service_call(catalog, dialogues):
    broken = json.loads(json.dumps(dialogues[0]))
    for turn in broken["turns"]:
        for frame in turn["frames"]:
            if frame.get("service_call"):
                frame["service_call"]["method"] = "Teleport"
    with pytest.raises(FormatError):
        sgd.build_fixtures([broken], catalog)
