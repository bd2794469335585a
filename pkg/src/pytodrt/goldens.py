"""Render prompt goldens from a JSON list of cases.

Each case has a ``name`` and a ``kind``: ``ss``, ``ss_value``, ``ps``, ``header``,
``transcript`` or ``ap_prompt``. Output files are ``<name>.prompt.txt``.
"""

from __future__ import annotations

import difflib
import json
from pathlib import Path
from typing import Mapping, Sequence

from .environment import Database, EntityRecord
from .errors import FormatError, UnknownSlot
from .prompts import TurnRecord
from .schema import SchemaCatalog, TaskStackEntry, linearize_header
from .session import DialogueSession
from .supervisors import build_ps_prompt, build_ss_prompt, build_ss_value_prompt

SUFFIX = ".prompt.txt"


def _session(case: Mapping, catalog: SchemaCatalog) -> DialogueSession:
    service = case["service"]
    db = Database.from_json(case.get("database", {}))
    session = DialogueSession(catalog, {service: db})
    for turn in case.get("turns", ()):
        if turn["speaker"] == "user":
            session.execute_user_statements(service, turn.get("utterance", ""), turn.get("statements", ()))
        else:
            session.agent_turn(service, turn.get("utterance", ""), offer=turn.get("offer", False))
    return session


def render_case(case: Mapping, catalog: SchemaCatalog) -> str:
    kind = case.get("kind")
    try:
        schema = catalog.services[case["service"]]
    except KeyError as exc:
        raise FormatError(f"golden case {case.get('name')!r}: unknown or missing service") from exc
    if kind == "ss":
        error = UnknownSlot(case["slot"], case.get("value"), case.get("intent"))
        return build_ss_prompt(error, schema, case.get("lexicon", ()), case.get("statement", "")).text
    if kind == "ss_value":
        return build_ss_value_prompt(
            schema.slot(case["slot"]), case["value"], case.get("statement", ""), case.get("intent", "")
        ).text
    if kind == "ps":
        history = [TurnRecord(speaker, utterance) for speaker, utterance in case["history"]]
        return build_ps_prompt(history, case["omitted"], schema, 0).text
    if kind == "header":
        stack = [
            TaskStackEntry(
                e["intent"],
                e["summary"],
                EntityRecord(schema.intent(e["intent"]).entity_type, dict(e.get("entity", {}))),
            )
            for e in case.get("task_stack", ())
        ]
        return linearize_header(schema, stack)
    if kind == "transcript":
        return _session(case, catalog).transcript.render()
    if kind == "ap_prompt":
        return _session(case, catalog).ap_prompt(case["service"])
    raise FormatError(f"golden case {case.get('name')!r}: unknown kind {kind!r}")


def load_cases(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        return []
    try:
        cases = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(cases, list):
        raise FormatError(f"{path}: expected a list of cases")
    return cases


def render_all(cases: Sequence[Mapping], catalog: SchemaCatalog) -> dict[str, str]:
    return {case["name"]: render_case(case, catalog) for case in cases}


def write_goldens(rendered: Mapping[str, str], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in sorted(rendered.items()):
        path = directory / f"{name}{SUFFIX}"
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths


def diff_goldens(rendered: Mapping[str, str], directory) -> list[str]:
    """Unified diffs for every golden that is missing or differs."""
    directory = Path(directory)
    diffs = []
    for name, text in sorted(rendered.items()):
        path = directory / f"{name}{SUFFIX}"
        expected = path.read_text(encoding="utf-8") if path.is_file() else ""
        if expected != text:
            diffs.append(
                "".join(
                    difflib.unified_diff(
                        expected.splitlines(keepends=True),
                        text.splitlines(keepends=True),
                        fromfile=str(path),
                        tofile=f"{name} (rendered)",
                    )
                )
            )
    return diffs
