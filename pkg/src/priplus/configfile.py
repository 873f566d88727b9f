"""Reader/writer for the sectioned ``key=value`` configuration format.

The format is the one used for topic catalogs and proxy-topic lists::

    [tickets]
    keywords=concerts croke park tickets cheap deal
    queries=concerts in croke park
    tickets for croke park

A line without ``=`` continues the value of the most recent key, so a
``queries=`` block runs until the next section header or key. Indentation is
ignored. ``#`` and ``;`` at the start of a line mark comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError

_SECTION = re.compile(r"^\[([^\]]+)\]\s*$")
_KEY = re.compile(r"^([A-Za-z_][A-Za-z0-9_.-]*)\s*=\s*(.*)$")


@dataclass
class Section:
    name: str
    values: dict[str, list[str]] = field(default_factory=dict)

    def __contains__(self, key):
        return key in self.values

    def lines(self, key, default=None) -> list[str]:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"[{self.name}] missing '{key}='")
            return list(default)
        return list(self.values[key])

    def words(self, key, default=None) -> list[str]:
        return " ".join(self.lines(key, default)).split()

    def get(self, key, default=None):
        if key not in self.values:
            return default
        return " ".join(self.values[key]).strip()

    def get_float(self, key, default):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected a number, got {raw!r}") from None

    def get_int(self, key, default):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected an integer, got {raw!r}") from None


def parse(text: str) -> dict[str, Section]:
    sections: dict[str, Section] = {}
    current = None
    key = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1).strip()
            if name in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{name}]")
            current = sections[name] = Section(name)
            key = None
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: content before first section header")
        m = _KEY.match(line)
        if m:
            key = m.group(1).lower()
            value = m.group(2).strip()
            current.values[key] = [value] if value else []
            continue
        if key is None:
            raise ConfigError(f"line {lineno}: value without a key in [{current.name}]")
        current.values[key].append(line)
    return sections


def load(path) -> dict[str, Section]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def render(sections) -> str:
    out = []
    for sec in sections:
        out.append(f"[{sec.name}]")
        for key, lines in sec.values.items():
            first, *rest = lines or [""]
            out.append(f"{key}={first}")
            out.extend(rest)
        out.append("")
    return "\n".join(out)
