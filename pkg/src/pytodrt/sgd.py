"""SGD dialogue ingestion: environment fixtures from system-turn annotations."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping

from .environment import Database, EntityRecord, TransactionOutcome, call_fingerprint
from .errors import FormatError, SchemaIOError
from .normalization import NormalizationTable
from .schema import SchemaCatalog

FIXTURE_DIR = "fixtures"
NORMALIZATION_FILE = "normalization.json"


def load_dialogues(path) -> list[dict]:
    """Read a dialogue file, or every ``*.json`` file of a directory except ``schema.json``."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.glob("*.json") if p.name != "schema.json")
    elif path.is_file():
        files = [path]
    else:
        raise SchemaIOError(f"{path}: no such file or directory")
    dialogues = []
    for file in files:
        try:
            data = json.loads(file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{file}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(data, list):
            raise FormatError(f"{file}: expected a list of dialogues")
        for i, dialogue in enumerate(data):
            if not isinstance(dialogue, dict) or "dialogue_id" not in dialogue or "turns" not in dialogue:
                raise FormatError(f"{file}: dialogue #{i} lacks dialogue_id or turns")
            dialogues.append(dialogue)
    return dialogues


def _acts(frame: Mapping) -> list[Mapping]:
    return list(frame.get("actions", ()))


def _check_frame(frame, dialogue_id: str, position: int) -> None:
    if not isinstance(frame, Mapping) or "service" not in frame:
        raise FormatError(f"dialogue {dialogue_id}: malformed frame in turn {position}")
    call = frame.get("service_call")
    if call is not None and (not isinstance(call, Mapping) or "method" not in call):
        raise FormatError(f"dialogue {dialogue_id}: malformed service_call in turn {position}")


def build_fixtures(dialogues: Iterable[Mapping], catalog: SchemaCatalog) -> dict[str, Database]:
    """Search tables are the union of observed results; transactions are keyed by call."""
    fixtures: dict[str, Database] = {}
    seen_rows: dict[str, set] = {}
    for dialogue in dialogues:
        dialogue_id = dialogue.get("dialogue_id", "?")
        for position, turn in enumerate(dialogue["turns"]):
            for frame in turn.get("frames", ()):
                _check_frame(frame, dialogue_id, position)
                call = frame.get("service_call")
                if turn.get("speaker") != "SYSTEM" or not call:
                    continue
                service = catalog.services.get(frame["service"])
                if service is None or not service.has_intent(call["method"]):
                    raise FormatError(f"dialogue {dialogue_id}: unknown call {frame['service']}.{call['method']}")
                intent = service.intent(call["method"])
                db = fixtures.setdefault(service.service_name, Database())
                results = frame.get("service_results", [])
                params = {k: str(v) for k, v in call.get("parameters", {}).items()}
                key = call_fingerprint(intent.name, params)
                if not intent.is_transactional:
                    rows = db.tables.setdefault(intent.name, [])
                    for result in results:
                        props = {k: str(v) for k, v in result.items()}
                        marker = (intent.name, tuple(sorted(props.items())))
                        if marker not in seen_rows.setdefault(service.service_name, set()):
                            seen_rows[service.service_name].add(marker)
                            rows.append(EntityRecord(intent.entity_type, props))
                    if results:
                        continue
                alternatives = {}
                for act in _acts(frame):
                    if act.get("act") == "OFFER" and act.get("values"):
                        alternatives.setdefault(act["slot"], str(act["values"][0]))
                if results:
                    entity = EntityRecord(intent.entity_type, {k: str(v) for k, v in results[0].items()})
                    outcome = TransactionOutcome(True, entity)
                else:
                    outcome = TransactionOutcome(False, None, "the request could not be completed", alternatives)
                db.transactions.setdefault(key, outcome)
    return fixtures


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_fixtures(output_dir, fixtures: Mapping[str, Database], table: NormalizationTable) -> list[Path]:
    out = Path(output_dir)
    (out / FIXTURE_DIR).mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(fixtures):
        path = out / FIXTURE_DIR / f"{name}.json"
        path.write_text(_dump(fixtures[name].to_json()), encoding="utf-8")
        written.append(path)
    rows = sorted(table.to_json(), key=lambda r: (r["slot"], r["surface"]))
    path = out / NORMALIZATION_FILE
    path.write_text(_dump(rows), encoding="utf-8")
    written.append(path)
    return written


def load_fixtures(output_dir, table: NormalizationTable | None = None) -> dict[str, Database]:
    folder = Path(output_dir) / FIXTURE_DIR
    if not folder.is_dir():
        raise SchemaIOError(f"{folder}: fixtures have not been built (run ingest first)")
    return {p.stem: Database.load(p, table) for p in sorted(folder.glob("*.json"))}


def load_normalization(output_dir) -> NormalizationTable:
    path = Path(output_dir) / NORMALIZATION_FILE
    return NormalizationTable.load(path) if path.is_file() else NormalizationTable()
