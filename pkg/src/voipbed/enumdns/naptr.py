"""NAPTR records and the E2U+sip regexp rewrite.

The rewrite dialect is the ENUM subset: a sed-style ``!pattern!replacement!``
string whose first byte is the delimiter (appearing exactly three times),
POSIX-extended-style patterns, and ``\\1``..``\\9`` back-references in the
replacement.  Terminal records carry flag "u" and replacement ".".
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from voipbed.enumdns.e164 import E164Number

SIP_SERVICE = "E2U+sip"


class NaptrError(ValueError):
    pass


class BadRegexpSyntax(NaptrError):
    pass


class PatternMismatch(NaptrError):
    pass


@dataclass(frozen=True)
class NaptrRecord:
    """One ENUM mapping entry (RFC 3403 field order)."""

    order: int
    preference: int
    flags: str = "u"
    service: str = SIP_SERVICE
    regexp: str = ""
    replacement: str = "."
    ttl: int = 3600

    def __post_init__(self) -> None:
        for name in ("order", "preference"):
            value = getattr(self, name)
            if not 0 <= value <= 0xFFFF:
                raise NaptrError(f"{name} out of u16 range: {value}")
        if self.regexp and self.replacement not in (".", ""):
            raise NaptrError("terminal regexp records must use replacement '.'")
        if not self.regexp and self.replacement in (".", ""):
            raise NaptrError("record needs a regexp or a replacement domain")

    @property
    def is_terminal(self) -> bool:
        return "u" in self.flags.lower()


def split_regexp(rule: str) -> tuple[str, str]:
    """``(pattern, replacement)`` from a delimiter-framed rewrite string."""
    if len(rule) < 3:
        raise BadRegexpSyntax(f"rewrite too short: {rule!r}")
    delim = rule[0]
    if rule.count(delim) != 3 or not rule.endswith(delim):
        raise BadRegexpSyntax(f"delimiter {delim!r} must appear exactly 3 times: {rule!r}")
    pattern, replacement = rule[1:-1].split(delim, 1)
    return pattern, replacement


def apply_naptr_regexp(record: NaptrRecord, number: E164Number | str) -> str:
    """Rewrite ``number`` (its full '+digits' form) into a URI.

    Raises BadRegexpSyntax for an unusable rule and PatternMismatch when the
    pattern does not match the number.
    """
    if isinstance(number, str):
        number = E164Number(number)
    if not record.regexp:
        raise BadRegexpSyntax("record has no regexp rule")
    pattern_text, replacement = split_regexp(record.regexp)
    try:
        pattern = re.compile(pattern_text)
    except re.error as exc:
        raise BadRegexpSyntax(f"bad pattern {pattern_text!r}: {exc}") from None

    match = pattern.search(number.full)
    if match is None:
        raise PatternMismatch(f"{pattern_text!r} does not match {number.full!r}")
    return _substitute(replacement, match)


def _substitute(replacement: str, match: re.Match[str]) -> str:
    out: list[str] = []
    i = 0
    while i < len(replacement):
        ch = replacement[i]
        if ch == "\\" and i + 1 < len(replacement):
            nxt = replacement[i + 1]
            if nxt.isdigit():
                group = int(nxt)
                if group == 0 or group > match.re.groups:
                    raise BadRegexpSyntax(f"back-reference \\{nxt} has no group")
                out.append(match.group(group) or "")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def select_naptr(records: list[NaptrRecord]) -> list[NaptrRecord]:
    """E2U+sip records in processing order: sorted by (order, preference).

    Ties break on the remaining fields so the result is a total order and
    therefore independent of input permutation.
    """
    usable = [r for r in records if r.service == SIP_SERVICE]
    return sorted(usable, key=lambda r: (r.order, r.preference, r.regexp,
                                         r.replacement, r.flags))
