"""ENUM number mapping: E.164 <-> DNS domains, NAPTR records, wire codec."""

from voipbed.enumdns.e164 import (
    DEFAULT_APEX,
    E164Error,
    E164Number,
    MultiCharLabel,
    NonDigitLabel,
    NotUnderApex,
    domain_to_e164,
    e164_to_domain,
)
from voipbed.enumdns.naptr import (
    BadRegexpSyntax,
    NaptrError,
    NaptrRecord,
    PatternMismatch,
    apply_naptr_regexp,
    select_naptr,
)
from voipbed.enumdns.resolver import (
    EnumResolver,
    IdMismatch,
    NoViableRecord,
    Nxdomain,
    ResolveError,
    ResolveTimeout,
    ServFail,
)
from voipbed.enumdns.server import EnumServer
from voipbed.enumdns.zone import (
    DomainOutsideApex,
    DuplicateEntry,
    EnumZone,
    ZoneError,
    ZoneSyntaxError,
    load_zone_file,
    parse_zone_text,
)

__all__ = [
    "BadRegexpSyntax",
    "DEFAULT_APEX",
    "DomainOutsideApex",
    "DuplicateEntry",
    "E164Error",
    "E164Number",
    "EnumResolver",
    "EnumServer",
    "EnumZone",
    "IdMismatch",
    "MultiCharLabel",
    "NaptrError",
    "NaptrRecord",
    "NoViableRecord",
    "NonDigitLabel",
    "NotUnderApex",
    "Nxdomain",
    "PatternMismatch",
    "ResolveError",
    "ResolveTimeout",
    "ServFail",
    "ZoneError",
    "ZoneSyntaxError",
    "apply_naptr_regexp",
    "domain_to_e164",
    "e164_to_domain",
    "load_zone_file",
    "parse_zone_text",
    "select_naptr",
]
