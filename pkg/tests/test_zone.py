"""Zone file parsing and the zone store."""

import pytest

from voipbed.enumdns.naptr import NaptrRecord
from voipbed.enumdns.zone import (
    DomainOutsideApex,
    DuplicateEntry,
    EnumZone,
    ZoneSyntaxError,
    load_zone_file,
    parse_zone_text,
)

APEX = "e164.test"
LINE = '3.0.0.2.e164.test NAPTR 10 10 "u" "E2U+sip" "!^.*$!sip:2003@gw.example!" .'


def test_single_entry_file(tmp_path):
    path = tmp_path / "one.zone"
    path.write_text(LINE + "\n")
    zone = load_zone_file(str(path), apex=APEX)
    assert len(zone) == 1
    records = zone.entries["2003"]
    assert records == [NaptrRecord(order=10, preference=10, flags="u",
                                   service="E2U+sip",
                                   regexp="!^.*$!sip:2003@gw.example!")]


def test_e164_shorthand_owner_and_comments():
    text = "\n".join([
        "# stock gateway number",
        '+2003 NAPTR 10 10 "u" "E2U+sip" "!^.*$!sip:2003@gw.example!" .',
        "",
        '+111 NAPTR 10 10 "u" "E2U+sip" "!^.*$!sip:111@ims.test!" .  # inline',
    ])
    zone = parse_zone_text(text, apex=APEX)
    assert zone.numbers() == ["111", "2003"]


def test_duplicate_number_lines_rejected():
    text = LINE + "\n" + LINE + "\n"
    with pytest.raises(DuplicateEntry):
        parse_zone_text(text, apex=APEX)


def test_same_number_different_records_allowed():
    text = (LINE + "\n"
            + '+2003 NAPTR 20 10 "u" "E2U+sip" "!^.*$!sip:backup@gw.example!" .\n')
    zone = parse_zone_text(text, apex=APEX)
    assert len(zone.entries["2003"]) == 2


def test_owner_outside_apex_rejected():
    with pytest.raises(DomainOutsideApex):
        parse_zone_text('3.0.0.2.e164.arpa NAPTR 10 10 "u" "E2U+sip" "!a!b!" .',
                        apex=APEX)


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(ZoneSyntaxError) as err:
        parse_zone_text("\n\n+1 NAPTR banana 10 \"u\" \"E2U+sip\" \"!a!b!\" .",
                        apex=APEX)
    assert err.value.line_no == 3
    with pytest.raises(ZoneSyntaxError):
        parse_zone_text("+1 NAPTR 10 10\n", apex=APEX)  # too few fields
    with pytest.raises(ZoneSyntaxError):
        parse_zone_text('+1 MX 10 10 "u" "E2U+sip" "!a!b!" .', apex=APEX)


def test_lookup_domain():
    zone = parse_zone_text(LINE, apex=APEX)
    assert zone.lookup_domain("3.0.0.2.e164.test") is not None
    assert zone.lookup_domain("9.e164.test") is None
    assert zone.lookup_domain("bogus.example.com") is None
    assert zone.domain_of("2003") == "3.0.0.2.e164.test"


def test_add_uri_convenience():
    zone = EnumZone(apex=APEX)
    zone.add_uri("42", "sip:42@pbx.test")
    rec = zone.entries["42"][0]
    assert rec.regexp == "!^.*$!sip:42@pbx.test!"
    assert rec.replacement == "."
