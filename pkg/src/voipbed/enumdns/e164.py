"""E.164 numbers and their mapping onto the ENUM DNS tree.

An E.164 number becomes a domain by reversing its digits, joining them as
single-character labels and appending the tree apex (RFC 3761):
``+4689761234`` under ``e164.arpa`` is ``4.3.2.1.6.7.9.8.6.4.e164.arpa``.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_APEX = "e164.arpa"

MAX_DIGITS = 15  # ITU-T E.164 length bound


class E164Error(ValueError):
    pass


class NotUnderApex(E164Error):
    pass


class NonDigitLabel(E164Error):
    pass


class MultiCharLabel(E164Error):
    pass


@dataclass(frozen=True)
class E164Number:
    """A validated telephone number; a leading '+' is stripped on ingest."""

    digits: str

    def __post_init__(self) -> None:
        digits = self.digits
        if digits.startswith("+"):
            digits = digits[1:]
            object.__setattr__(self, "digits", digits)
        if not digits or len(digits) > MAX_DIGITS or not digits.isdigit():
            raise E164Error(f"not a valid E.164 number: {self.digits!r}")

    @property
    def full(self) -> str:
        """International form, '+' plus digits (the NAPTR regexp input)."""
        return "+" + self.digits

    def __str__(self) -> str:
        return self.digits


def e164_to_domain(number: E164Number | str, apex: str = DEFAULT_APEX) -> str:
    """ENUM domain for ``number``: reversed digits, dot-separated, under ``apex``."""
    if not isinstance(number, E164Number):
        number = E164Number(number)
    return ".".join(reversed(number.digits)) + "." + apex.strip(".")


def domain_to_e164(domain: str, apex: str = DEFAULT_APEX) -> E164Number:
    """Exact inverse of :func:`e164_to_domain` on its image.

    Raises NotUnderApex, NonDigitLabel or MultiCharLabel for anything that
    is not a well-formed ENUM name below ``apex``.
    """
    domain = domain.strip(".").lower()
    apex = apex.strip(".").lower()
    suffix = "." + apex
    if not domain.endswith(suffix):
        raise NotUnderApex(f"{domain!r} is not under {apex!r}")
    labels = domain[: -len(suffix)].split(".")
    for label in labels:
        if len(label) != 1:
            raise MultiCharLabel(f"label {label!r} in {domain!r}")
        if not label.isdigit():
            raise NonDigitLabel(f"label {label!r} in {domain!r}")
    return E164Number("".join(reversed(labels)))
