"""ENUM zone store and the line-oriented zone file loader.

Zone file format, one record per line, ``#`` comments allowed:

    <owner> NAPTR <order> <pref> "<flags>" "<service>" "<regexp>" <replacement>

The owner is either a full domain under the apex or the E.164 shorthand
``+<digits>``.  The store is immutable once the server starts; serving is
read-only.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field

from voipbed.enumdns.e164 import DEFAULT_APEX, E164Error, E164Number, domain_to_e164, e164_to_domain
from voipbed.enumdns.naptr import NaptrError, NaptrRecord


class ZoneError(ValueError):
    pass


class ZoneSyntaxError(ZoneError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateEntry(ZoneError):
    pass


class DomainOutsideApex(ZoneError):
    pass


@dataclass
class EnumZone:
    """Map from E.164 digit strings to their NAPTR record lists."""

    apex: str = DEFAULT_APEX
    entries: dict[str, list[NaptrRecord]] = field(default_factory=dict)

    def add(self, number: E164Number | str, record: NaptrRecord) -> None:
        digits = number.digits if isinstance(number, E164Number) else E164Number(number).digits
        records = self.entries.setdefault(digits, [])
        if record in records:
            raise DuplicateEntry(f"duplicate record for +{digits}")
        records.append(record)

    def add_uri(self, number: E164Number | str, uri: str,
                order: int = 10, preference: int = 10) -> None:
        """Convenience: terminal match-all record rewriting to ``uri``."""
        self.add(number, NaptrRecord(order=order, preference=preference,
                                     regexp=f"!^.*$!{uri}!"))

    def domain_of(self, number: E164Number | str) -> str:
        return e164_to_domain(number, self.apex)

    def lookup_domain(self, domain: str) -> list[NaptrRecord] | None:
        """Records for an ENUM domain; None when the name does not exist."""
        try:
            number = domain_to_e164(domain, self.apex)
        except E164Error:
            return None
        return self.entries.get(number.digits)

    def numbers(self) -> list[str]:
        return sorted(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def parse_zone_text(text: str, apex: str = DEFAULT_APEX) -> EnumZone:
    zone = EnumZone(apex=apex)
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            fields = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ZoneSyntaxError(line_no, str(exc)) from None
        if len(fields) != 8:
            raise ZoneSyntaxError(line_no, f"expected 8 fields, got {len(fields)}")
        owner, rtype, order_s, pref_s, flags, service, regexp, replacement = fields
        if rtype.upper() != "NAPTR":
            raise ZoneSyntaxError(line_no, f"unsupported record type {rtype!r}")
        try:
            order, preference = int(order_s), int(pref_s)
        except ValueError:
            raise ZoneSyntaxError(line_no, "order/preference must be integers") from None

        try:
            if owner.startswith("+"):
                number = E164Number(owner)
            else:
                number = domain_to_e164(owner, apex)
        except E164Error as exc:
            raise DomainOutsideApex(f"line {line_no}: {exc}") from None

        try:
            record = NaptrRecord(order=order, preference=preference, flags=flags,
                                 service=service, regexp=regexp, replacement=replacement)
        except NaptrError as exc:
            raise ZoneSyntaxError(line_no, str(exc)) from None
        try:
            zone.add(number, record)
        except DuplicateEntry as exc:
            raise DuplicateEntry(f"line {line_no}: {exc}") from None
    return zone


def load_zone_file(path: str, apex: str = DEFAULT_APEX) -> EnumZone:
    """Parse ``path`` into an EnumZone; raises the ZoneError family."""
    with open(path, encoding="utf-8") as handle:
        return parse_zone_text(handle.read(), apex=apex)
