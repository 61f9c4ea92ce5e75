"""E.164 <-> ENUM domain mapping."""

import random

import pytest

from voipbed.enumdns.e164 import (
    E164Error,
    E164Number,
    MultiCharLabel,
    NonDigitLabel,
    NotUnderApex,
    domain_to_e164,
    e164_to_domain,
)


def test_number_strips_plus_and_validates():
    assert E164Number("+4689761234").digits == "4689761234"
    assert E164Number("2003").full == "+2003"
    for bad in ("", "+", "12a4", "1" * 16):
        with pytest.raises(E164Error):
            E164Number(bad)


def test_to_domain_hand_derived_examples():
    assert e164_to_domain("+4689761234", "e164.arpa") == "4.3.2.1.6.7.9.8.6.4.e164.arpa"
    assert e164_to_domain("1", "e164.arpa") == "1.e164.arpa"
    # 2003 is the stock FXS number of the gateway scenario
    assert e164_to_domain("2003", "e164.arpa") == "3.0.0.2.e164.arpa"


def test_from_domain_hand_derived_examples():
    assert domain_to_e164("3.0.0.2.e164.arpa", "e164.arpa").digits == "2003"
    assert domain_to_e164("1.e164.arpa", "e164.arpa").digits == "1"


def test_from_domain_rejections():
    with pytest.raises(NonDigitLabel):
        domain_to_e164("a.b.e164.arpa", "e164.arpa")
    with pytest.raises(MultiCharLabel):
        domain_to_e164("12.3.e164.arpa", "e164.arpa")
    with pytest.raises(NotUnderApex):
        domain_to_e164("1.2.3.example.com", "e164.arpa")


def test_round_trip_1000_random_numbers():
    rng = random.Random(20240612)
    for _ in range(1000):
        digits = "".join(rng.choice("0123456789")
                         for _ in range(rng.randint(1, 15)))
        number = E164Number(digits)
        domain = e164_to_domain(number, "e164.test")
        assert domain_to_e164(domain, "e164.test") == number


def test_domain_has_one_label_per_digit():
    rng = random.Random(7)
    for _ in range(100):
        digits = "".join(rng.choice("0123456789")
                         for _ in range(rng.randint(1, 15)))
        domain = e164_to_domain(digits, "e164.test")
        labels = domain.split(".")
        assert labels[-2:] == ["e164", "test"]
        assert len(labels[:-2]) == len(digits)
        assert all(len(l) == 1 for l in labels[:-2])
