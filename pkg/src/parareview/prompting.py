"""Prompt templates with named-slot substitution.

Templates live as plain text files, one pair per key: ``<key>.system.txt``
(optional) and ``<key>.user.txt``. Slot names may contain spaces (e.g.
``{next step}``), which rules out str.format; substitution is a single
regex pass, so braces inside substituted values are left untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

# conservative charset so literal JSON braces in template text never match
_SLOT = re.compile(r"\{([a-z][a-z0-9 _-]*)\}")


def fill_slots(text: str, mapping: dict[str, str]) -> str:
    missing = sorted({m.group(1) for m in _SLOT.finditer(text)} - mapping.keys())
    if missing:
        raise KeyError(f"unfilled prompt slots: {missing}")
    return _SLOT.sub(lambda m: mapping[m.group(1)], text)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def fill_user(self, mapping: dict[str, str]) -> str:
        return fill_slots(self.user, mapping)


def _packaged_dir() -> Path:
    return Path(str(resources.files("parareview") / "prompts"))


class PromptLibrary:
    """Loads templates from a directory, defaulting to the packaged set."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else _packaged_dir()
        self._load = lru_cache(maxsize=None)(self._load_uncached)

    def load(self, name: str) -> PromptTemplate:
        return self._load(name)

    def _load_uncached(self, name: str) -> PromptTemplate:
        user_path = self.directory / f"{name}.user.txt"
        if not user_path.exists():
            raise FileNotFoundError(f"no prompt template {name!r} in {self.directory}")
        system_path = self.directory / f"{name}.system.txt"
        system = system_path.read_text(encoding="utf-8").strip() if system_path.exists() else ""
        return PromptTemplate(name=name, system=system,
                              user=user_path.read_text(encoding="utf-8").strip())
