"""IPC symbol parsing and rendering.

Accepted source forms::

    A61K                 subclass only
    A61K31               main group, no subgroup
    A61K 31/00           spaced (Espacenet / OPS style, any amount of space)
    A61K31/00            compressed
    A61K0031/00          zero-padded group (some patent office exports)

The canonical symbol is the compressed form with the group's leading zeros
removed, e.g. ``A61K31/00``.  Subgroup digits are kept verbatim because
``/0073`` and ``/73`` are different subgroups.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import InvalidIpcSymbol

SECTIONS = "ABCDEFGH"

_IPC_RE = re.compile(
    r"""
    ^(?P<section>[A-Z])
    (?P<klass>\d{2})
    (?P<subclass>[A-Z])
    (?:\s*(?P<group>\d{1,4})
       (?:\s*/\s*(?P<subgroup>\d{1,6}))?
    )?$
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, order=True)
class IpcCode:
    section: str
    klass: str
    subclass: str
    group: str | None = None
    subgroup: str | None = None

    @property
    def symbol(self) -> str:
        return render_ipc(self)

    @property
    def subclass_symbol(self) -> str:
        return f"{self.section}{self.klass}{self.subclass}"

    def prefix(self, length: int) -> str:
        return self.symbol[:length]

    def at_subclass(self) -> IpcCode:
        return IpcCode(self.section, self.klass, self.subclass)

    def __str__(self) -> str:
        return self.symbol


def render_ipc(code: IpcCode) -> str:
    out = f"{code.section}{code.klass}{code.subclass}"
    if code.group is not None:
        out += code.group
        if code.subgroup is not None:
            out += f"/{code.subgroup}"
    return out


def parse_ipc(symbol_text: str) -> IpcCode:
    if symbol_text is None or not symbol_text.strip():
        raise InvalidIpcSymbol("empty IPC symbol")
    text = symbol_text.strip().upper()
    if len(text) < 4:
        raise InvalidIpcSymbol(f"{symbol_text!r} is too short; a subclass needs 4 characters")
    if text[0] not in SECTIONS:
        raise InvalidIpcSymbol(f"{symbol_text!r}: section {text[0]!r} is not one of A-H")
    if not text[1:3].isdigit():
        raise InvalidIpcSymbol(f"{symbol_text!r}: class {text[1:3]!r} is not numeric")
    if text[1:3] == "00":
        raise InvalidIpcSymbol(f"{symbol_text!r}: class 00 does not exist")
    m = _IPC_RE.match(text)
    if m is None:
        raise InvalidIpcSymbol(f"{symbol_text!r} is not a valid IPC symbol")
    group = m.group("group")
    if group is not None:
        group = str(int(group))
    return IpcCode(
        section=m.group("section"),
        klass=m.group("klass"),
        subclass=m.group("subclass"),
        group=group,
        subgroup=m.group("subgroup"),
    )


def ipc_prefix(code: IpcCode | str, length: int) -> str:
    symbol = code.symbol if isinstance(code, IpcCode) else code
    return symbol[:length]
