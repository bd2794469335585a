"""Text assets used to render prompts.

Templates are plain ``string.Template`` files shipped in ``pytodrt/assets``.
Setting ``PYTODRT_TEMPLATE_DIR`` makes any file of the same name in that
directory take precedence, which is how edited templates are checked against
the goldens before being committed.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path
from string import Template

TEMPLATE_NAMES = (
    "task_instructions",
    "ss_unknown_slot",
    "ss_unknown_slot_categorical_value",
    "ss_categorical_value",
    "ss_paraphrase",
    "ps_extractive_qa",
    "entity_properties",
    "policy_note",
)

_builtin_cache: dict[str, str] = {}


def template_text(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    override_dir = os.environ.get("PYTODRT_TEMPLATE_DIR")
    if override_dir:
        candidate = Path(override_dir) / f"{name}.txt"
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
    if name not in _builtin_cache:
        path = resources.files("pytodrt").joinpath("assets", f"{name}.txt")
        _builtin_cache[name] = path.read_text(encoding="utf-8")
    return _builtin_cache[name]


def render(name: str, **fields) -> str:
    """Substitute ``fields`` into the named template."""
    return Template(template_text(name)).substitute(**fields)
