"""Temperature unit conversions.

Everything internal runs in Kelvin and hours; Fahrenheit and Celsius only
appear at I/O boundaries (config files, column maps, printed summaries).
"""

from __future__ import annotations

KELVIN = "K"
FAHRENHEIT = "F"
CELSIUS = "C"

_UNITS = (KELVIN, FAHRENHEIT, CELSIUS)


class UnitError(ValueError):
    """Unknown or unsupported unit tag."""


def _check_unit(unit: str) -> str:
    tag = unit.strip().upper()
    if tag not in _UNITS:
        raise UnitError(f"unknown temperature unit {unit!r}; expected one of {_UNITS}")
    return tag


def convert_temperature(value, from_unit: str, to_unit: str):
    """Affine conversion between K, F and C. Works on scalars and arrays."""
    src = _check_unit(from_unit)
    dst = _check_unit(to_unit)
    if src == dst:
        return value
    # hub through Kelvin
    if src == CELSIUS:
        kelvin = value + 273.15
    elif src == FAHRENHEIT:
        kelvin = (value - 32.0) * (5.0 / 9.0) + 273.15
    else:
        kelvin = value
    if dst == CELSIUS:
        return kelvin - 273.15
    if dst == FAHRENHEIT:
        return (kelvin - 273.15) * (9.0 / 5.0) + 32.0
    return kelvin


def convert_temperature_delta(value, from_unit: str, to_unit: str):
    """Scale-only conversion for temperature differences (noise std, spreads)."""
    src = _check_unit(from_unit)
    dst = _check_unit(to_unit)
    in_kelvin = value * (5.0 / 9.0) if src == FAHRENHEIT else value
    return in_kelvin * (9.0 / 5.0) if dst == FAHRENHEIT else in_kelvin
