"""Canonical "num/den" string form for exact rationals in JSON files."""

from fractions import Fraction


def parse_ratio(text: str) -> Fraction:
    """Parse "num/den" (or a bare integer string) into a Fraction."""
    if not isinstance(text, str):
        raise ValueError(f"rational must be a string, got {type(text).__name__}")
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad rational {text!r}: {exc}") from None


def format_ratio(value: Fraction) -> str:
    """Render a Fraction as "num/den" (denominator always written)."""
    f = Fraction(value)
    return f"{f.numerator}/{f.denominator}"
