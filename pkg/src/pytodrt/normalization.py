"""Surface-form to canonical-value lookup table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class NormalizationTable:
    entries: dict[tuple[str, str], str] = field(default_factory=dict)
    conflicts: list[tuple[str, str, str, str]] = field(default_factory=list)

    def __deepcopy__(self, memo):
        return self

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def lookup(self, slot: str, surface: str) -> str | None:
        return self.entries.get((slot, surface))

    def canonical(self, slot: str, value: str) -> str:
        return self.entries.get((slot, value), value)

    def add(self, slot: str, surface: str, canonical: str) -> bool:
        """Insert a pair; the first pairing for a key wins. Returns False on conflict."""
        key = (slot, surface)
        if key in self.entries:
            if self.entries[key] != canonical:
                self.conflicts.append((slot, surface, self.entries[key], canonical))
                return False
            return True
        self.entries[key] = canonical
        return True

    def to_json(self) -> list[dict]:
        return [{"slot": s, "surface": v, "canonical": c} for (s, v), c in self.entries.items()]

    @classmethod
    def from_json(cls, rows) -> "NormalizationTable":
        table = cls()
        for row in rows:
            table.add(row["slot"], row["surface"], row["canonical"])
        return table

    @classmethod
    def load(cls, path) -> "NormalizationTable":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
