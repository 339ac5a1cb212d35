"""Deterministic number rendering for reports and file names."""

from __future__ import annotations

from fractions import Fraction


def decimal_string(value: Fraction | int, places: int) -> str:
    """Render exactly, rounded half-even to ``places`` decimal places."""
    scaled = round(Fraction(value) * 10**places)
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(places + 1, "0")
    if places == 0:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def fraction_label(value: Fraction) -> str:
    """Short lossless label for a rational: decimal when finite, else ``p_q``.

    Used in file names and table headers, so it must not contain ``/``.
    """
    value = Fraction(value)
    denom = value.denominator
    places = 0
    while denom % 2 == 0:
        denom //= 2
        places += 1
    fives = 0
    while denom % 5 == 0:
        denom //= 5
        fives += 1
    if denom != 1:
        return f"{value.numerator}_{value.denominator}"
    places = max(places, fives, 1)
    text = decimal_string(value, places)
    whole, _, frac = text.partition(".")
    frac = frac.rstrip("0") or "0"
    return f"{whole}.{frac}"


def parse_fraction(raw: object, what: str = "value") -> Fraction:
    """Accept ints, floats (via their shortest repr), and ``p/q`` strings."""
    if isinstance(raw, bool):
        raise ValueError(f"{what} must be a number, got a boolean")
    if isinstance(raw, int):
        return Fraction(raw)
    if isinstance(raw, float):
        return Fraction(str(raw))
    if isinstance(raw, str):
        return Fraction(raw.strip())
    if isinstance(raw, Fraction):
        return raw
    raise ValueError(f"{what} must be a number or 'p/q' string, got {raw!r}")
