"""NAPTR record selection and the E2U+sip regexp rewrite."""

import random

import pytest

from voipbed.enumdns.naptr import (
    BadRegexpSyntax,
    NaptrError,
    NaptrRecord,
    PatternMismatch,
    apply_naptr_regexp,
    select_naptr,
    split_regexp,
)


def rec(order=10, pref=10, service="E2U+sip", regexp="!^.*$!sip:x@y!"):
    return NaptrRecord(order=order, preference=pref, service=service,
                       regexp=regexp)


def test_record_field_validation():
    with pytest.raises(NaptrError):
        NaptrRecord(order=-1, preference=0, regexp="!a!b!")
    with pytest.raises(NaptrError):
        NaptrRecord(order=0, preference=70000, regexp="!a!b!")
    with pytest.raises(NaptrError):
        # terminal regexp form requires replacement "."
        NaptrRecord(order=1, preference=1, regexp="!a!b!", replacement="x.test")
    with pytest.raises(NaptrError):
        # neither rewrite nor replacement domain
        NaptrRecord(order=1, preference=1, regexp="", replacement=".")


def test_apply_match_all_constant_replacement():
    record = rec(regexp="!^.*$!sip:2003@gw.example!")
    assert apply_naptr_regexp(record, "+622003") == "sip:2003@gw.example"


def test_apply_back_reference_capture():
    record = rec(regexp=r"!^\+62(.*)$!sip:\1@openims.test!")
    assert apply_naptr_regexp(record, "+62111") == "sip:111@openims.test"


def test_apply_anchor_mismatch():
    record = rec(regexp=r"!^\+1.*$!sip:x@y!")
    with pytest.raises(PatternMismatch):
        apply_naptr_regexp(record, "+62111")


def test_apply_runs_against_full_plus_form():
    record = rec(regexp=r"!^\+(.*)$!sip:\1@host!")
    assert apply_naptr_regexp(record, "123") == "sip:123@host"


def test_bad_rewrite_syntax():
    for rule in ("!onlytwo!", "!a!b!c!d!", "nodelims", "!unclosed(!x!"):
        with pytest.raises(BadRegexpSyntax):
            apply_naptr_regexp(rec(regexp=rule), "+1")
    with pytest.raises(BadRegexpSyntax):
        # back-reference to a group the pattern never captured
        apply_naptr_regexp(rec(regexp=r"!^.*$!sip:\1@y!"), "+1")


def test_split_regexp_alternate_delimiter():
    assert split_regexp("/^a$/b/") == ("^a$", "b")


def test_select_preference_tiebreak():
    records = [rec(order=10, pref=50), rec(order=10, pref=10)]
    picked = select_naptr(records)
    assert [(r.order, r.preference) for r in picked] == [(10, 10), (10, 50)]


def test_select_order_sort():
    records = [rec(order=20), rec(order=10)]
    assert [r.order for r in select_naptr(records)] == [10, 20]


def test_select_filters_non_sip_services():
    assert select_naptr([rec(service="E2U+h323")]) == []


def test_select_is_stable_total_order():
    rng = random.Random(99)
    records = [rec(order=rng.randint(0, 3), pref=rng.randint(0, 3),
                   regexp=f"!^.*$!sip:{i}@y!")
               for i in range(20)]
    once = select_naptr(records)
    assert select_naptr(once) == once  # idempotent
    for _ in range(10):
        shuffled = records[:]
        rng.shuffle(shuffled)
        assert select_naptr(shuffled) == once  # permutation-invariant
