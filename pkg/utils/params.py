"""
Parameter parsing for the model config dataclasses.
Rationals arrive as JSON numbers, decimal strings or "p/q" strings and are
always converted through fractions.Fraction.
"""

from fractions import Fraction

from utils.errors import ConfigError

INF = "inf"


def parse_rational(value, key, allow_inf=False):
    if allow_inf and (value is None or (isinstance(value, str) and value.strip().lower() in ("inf", "infinity"))):
        return None
    if isinstance(value, bool):
        raise ConfigError(f"parameter {key!r} must be a number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # repr gives the shortest decimal that reads back as the same float
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"parameter {key!r} is not a rational number: {value!r}")


def parse_int(value, key):
    if isinstance(value, bool):
        raise ConfigError(f"parameter {key!r} must be an integer, got {value!r}")
    try:
        number = parse_rational(value, key)
    except ConfigError:
        raise ConfigError(f"parameter {key!r} must be an integer, got {value!r}") from None
    if number.denominator != 1:
        raise ConfigError(f"parameter {key!r} must be an integer, got {value!r}")
    return int(number)


def parse_choice(value, key, choices):
    text = str(value).strip().lower()
    if text not in choices:
        raise ConfigError(f"parameter {key!r} must be one of {sorted(choices)}, got {value!r}")
    return choices[text]


def read_params(params, fields):
    """
    Apply per-key converters to a parameter dict.

    Args:
        params: raw mapping (usually parsed JSON)
        fields: {key: (attribute, converter)}; converter takes (value, key)

    Returns:
        {attribute: converted value} for the keys present.
    """
    if params is None:
        return {}
    if not isinstance(params, dict):
        raise ConfigError(f"parameters must be a JSON object, got {type(params).__name__}")
    out = {}
    for key, value in params.items():
        if key not in fields:
            raise ConfigError(f"unknown parameter {key!r} (expected one of {sorted(fields)})")
        attribute, convert = fields[key]
        out[attribute] = convert(value, key)
    return out


def format_rational(value):
    """Exact string form: '3', '3/2'; None renders as 'inf'."""
    if value is None:
        return INF
    value = Fraction(value)
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
