"""Command-line entry point.

    pytodrt ingest  --schema S --dialogues D --output-dir OUT
    pytodrt replay  --schema S --dialogues D --output-dir OUT [--backend scripted-gold|oracle|http]
    pytodrt eval    --schema S --dialogues D --output-dir OUT
    pytodrt golden  --schema S --cases CASES --goldens-dir G [--check]

Settings come from defaults, then ``--config FILE`` (JSON), then ``PYTODRT_*``
environment variables, then flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import goldens, sgd
from .backends import HttpBackend, OracleBackend
from .dialogue_manager import Backends
from .errors import BackendError, MissingPredictions, PytodError, SchemaIOError
from .replay import DialogueRun, ReplayError, default_lexicon, replay_dialogue
from .schema import load_schema_catalog
from .state_eval import DialogueState, build_normalization_table, evaluate, user_frames

log = logging.getLogger("pytodrt")

EXIT_OK, EXIT_INVALID, EXIT_BACKEND, EXIT_DRIFT = 0, 1, 2, 3
BACKENDS = ("scripted-gold", "oracle", "http")
ENV_PREFIX = "PYTODRT_"
PREDICTIONS_FILE = "predictions.json"
METRICS_FILE = "metrics.json"


@dataclass
class RunConfig:
    schema_path: str = ""
    dialogues_path: str = ""
    seen_services: list[str] = field(default_factory=list)
    training_lexicon_path: str = ""
    backend: str = "scripted-gold"
    backend_url: str = ""
    answers_path: str = ""
    output_dir: str = "out"
    cases_path: str = ""
    goldens_dir: str = ""
    seed: int = 0

    def validate(self, *required: str) -> None:
        if self.backend not in BACKENDS:
            raise SchemaIOError(f"unknown backend {self.backend!r}; expected one of {', '.join(BACKENDS)}")
        for name in required:
            value = getattr(self, name)
            if not value:
                raise SchemaIOError(f"{name} is required")
            if not Path(value).exists():
                raise SchemaIOError(f"{name}: {value} does not exist")


_LIST_FIELDS = {"seen_services"}
_INT_FIELDS = {"seed"}


def _coerce(name: str, value):
    if name in _LIST_FIELDS and isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if name in _INT_FIELDS:
        return int(value)
    return value


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise SchemaIOError(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaIOError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        values.update(data)
    names = [f.name for f in dataclasses.fields(RunConfig)]
    unknown = set(values) - set(names)
    if unknown:
        raise SchemaIOError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in names:
        env = environ.get(ENV_PREFIX + name.upper())
        if env is not None:
            values[name] = env
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})


def _catalog(config: RunConfig):
    catalog = load_schema_catalog(config.schema_path, config.seen_services)
    return catalog


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# -- commands -------------------------------------------------------------


def cmd_ingest(config: RunConfig) -> list[Path]:
    config.validate("schema_path", "dialogues_path")
    catalog = _catalog(config)
    dialogues = sgd.load_dialogues(config.dialogues_path)
    table = build_normalization_table(dialogues)
    for slot, surface, kept, dropped in table.conflicts:
        log.warning("normalization conflict for (%s, %r): kept %r, ignored %r", slot, surface, kept, dropped)
    fixtures = sgd.build_fixtures(dialogues, catalog)
    return sgd.write_fixtures(config.output_dir, fixtures, table)


def _backends(config: RunConfig) -> Backends | None:
    if config.backend == "scripted-gold":
        return None
    if config.backend == "oracle":
        if not config.answers_path:
            raise SchemaIOError("the oracle backend needs answers_path")
        return Backends.uniform(OracleBackend.load(config.answers_path))
    if not config.backend_url:
        raise SchemaIOError("the http backend needs backend_url")
    return Backends.uniform(HttpBackend(config.backend_url))


def _lexicon(config: RunConfig, catalog) -> list[str]:
    if not config.training_lexicon_path:
        return default_lexicon(catalog)
    text = Path(config.training_lexicon_path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        return list(json.loads(text))
    return [line.strip() for line in text.splitlines() if line.strip()]


def cmd_replay(config: RunConfig) -> dict[str, DialogueRun]:
    config.validate("schema_path", "dialogues_path")
    catalog = _catalog(config)
    dialogues = sorted(sgd.load_dialogues(config.dialogues_path), key=lambda d: d["dialogue_id"])
    table = sgd.load_normalization(config.output_dir)
    databases = sgd.load_fixtures(config.output_dir, table)
    backends = _backends(config)
    lexicon = _lexicon(config, catalog)
    out = Path(config.output_dir) / "replay"
    out.mkdir(parents=True, exist_ok=True)
    runs = {}
    for dialogue in dialogues:
        dialogue_id = dialogue["dialogue_id"]
        try:
            run = replay_dialogue(dialogue, catalog, databases, table, backends, lexicon)
        except ReplayError as exc:
            log.error("dialogue %s: %s", dialogue_id, exc)
            run = DialogueRun(
                dialogue_id,
                predictions=[DialogueState()] * len(user_frames(dialogue)),
                aborted=f"gold program derivation failed: {exc}",
            )
        if run.aborted:
            log.warning("dialogue %s aborted: %s", dialogue_id, run.aborted)
        runs[dialogue_id] = run
        (out / f"{dialogue_id}.transcript.txt").write_text(run.transcript, encoding="utf-8")
        (out / f"{dialogue_id}.prompts.jsonl").write_text(
            "".join(json.dumps(e.to_json(), sort_keys=True, ensure_ascii=False) + "\n" for e in run.prompt_log),
            encoding="utf-8",
        )
        (out / f"{dialogue_id}.corrections.jsonl").write_text(
            "".join(
                json.dumps({"turn": turn, **event.to_json()}, sort_keys=True, ensure_ascii=False) + "\n"
                for turn, event in run.corrections
            ),
            encoding="utf-8",
        )
    predictions = {
        "backend": config.backend,
        "seed": config.seed,
        "dialogues": {k: [s.to_json() for s in r.predictions] for k, r in sorted(runs.items())},
        "aborted": {k: r.aborted for k, r in sorted(runs.items()) if r.aborted},
    }
    (Path(config.output_dir) / PREDICTIONS_FILE).write_text(_dump(predictions), encoding="utf-8")
    return runs


def cmd_eval(config: RunConfig):
    config.validate("schema_path", "dialogues_path")
    path = Path(config.output_dir) / PREDICTIONS_FILE
    if not path.is_file():
        raise MissingPredictions(f"{path}: no predictions (run replay first)")
    catalog = _catalog(config)
    dialogues = sgd.load_dialogues(config.dialogues_path)
    table = sgd.load_normalization(config.output_dir)
    raw = json.loads(path.read_text(encoding="utf-8"))["dialogues"]
    predictions = {k: [DialogueState.from_json(s) for s in v] for k, v in raw.items()}
    report = evaluate(dialogues, predictions, catalog, table)
    (Path(config.output_dir) / METRICS_FILE).write_text(_dump(report.to_json()), encoding="utf-8")
    return report


def cmd_golden(config: RunConfig, check: bool = False) -> int:
    config.validate("schema_path")
    if not config.goldens_dir:
        raise SchemaIOError("goldens_dir is required")
    catalog = _catalog(config)
    cases = goldens.load_cases(config.cases_path) if config.cases_path else []
    rendered = goldens.render_all(cases, catalog)
    if not check:
        goldens.write_goldens(rendered, config.goldens_dir)
        return EXIT_OK
    diffs = goldens.diff_goldens(rendered, config.goldens_dir)
    for diff in diffs:
        sys.stdout.write(diff)
    return EXIT_DRIFT if diffs else EXIT_OK


# -- argument parsing -----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors (exit 1); 2 is reserved for backend failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pytodrt", description="Schema-guided dialogue replay and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--schema", dest="schema_path")
        p.add_argument("--dialogues", dest="dialogues_path")
        p.add_argument("--seen-services", dest="seen_services", help="comma-separated service names")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", dest="seed", type=int)
        return p

    common(sub.add_parser("ingest", help="build environment fixtures and the normalization table"))
    replay = common(sub.add_parser("replay", help="run dialogues through the dialogue manager"))
    replay.add_argument("--backend", choices=BACKENDS)
    replay.add_argument("--backend-url", dest="backend_url")
    replay.add_argument("--answers", dest="answers_path", help="oracle answer book (fingerprint -> answer)")
    replay.add_argument("--training-lexicon", dest="training_lexicon_path")
    common(sub.add_parser("eval", help="score predictions with JGA and C-JGA"))
    golden = common(sub.add_parser("golden", help="render prompt goldens"))
    golden.add_argument("--cases", dest="cases_path")
    golden.add_argument("--goldens-dir", dest="goldens_dir")
    golden.add_argument("--check", action="store_true", help="diff against existing goldens instead of writing")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = resolve_config(args)
        if args.command == "ingest":
            for path in cmd_ingest(config):
                log.info("wrote %s", path)
            return EXIT_OK
        if args.command == "replay":
            runs = cmd_replay(config)
            aborted = sum(1 for r in runs.values() if r.aborted)
            print(f"replayed {len(runs)} dialogues ({aborted} aborted)")
            # every dialogue is still written; the exit code flags backend trouble
            return EXIT_BACKEND if any(r.backend_failure for r in runs.values()) else EXIT_OK
        if args.command == "eval":
            report = cmd_eval(config)
            print(json.dumps(report.to_json(), indent=2, sort_keys=True))
            return EXIT_OK
        return cmd_golden(config, check=args.check)
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (PytodError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
