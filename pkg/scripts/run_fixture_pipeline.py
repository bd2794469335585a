"""Ingest, replay and score the bundled fixture dialogues.

    python3 scripts/run_fixture_pipeline.py [output_dir]

Replay uses the scripted-gold backend, so no model is needed.
"""
import json
import sys
from pathlib import Path

from pytodrt.cli import EXIT_OK, main

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def run(out: Path) -> int:
    common = [
        "--schema", str(DATA / "schema.json"),
        "--dialogues", str(DATA / "dialogues.json"),
        "--seen-services", "Restaurants_1",
        "--output-dir", str(out),
    ]
    for command in ("ingest", "replay", "eval"):
        code = main([command, *common])
        if code != EXIT_OK:
            print(f"{command} exited with {code}", file=sys.stderr)
            return code
    print(json.dumps(json.loads((out / "metrics.json").read_text()), indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1] if len(sys.argv) > 1 else "runs/fixtures")))
