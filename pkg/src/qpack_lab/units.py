"""Unit strings accepted by the text file formats, and SI conversion."""

from __future__ import annotations

import math
import re

from scipy import constants

C_LIGHT = constants.c
MU0 = constants.mu_0
EPS0 = constants.epsilon_0
HBAR = constants.hbar
K_B = constants.k

_SCALE = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "area": {"m2": 1.0, "m^2": 1.0, "mm2": 1e-6, "mm^2": 1e-6},
    "volume": {"m3": 1.0, "m^3": 1.0, "mm3": 1e-9, "mm^3": 1e-9},
    "resistance": {
        "ohm": 1.0, "Ω": 1.0, "mohm": 1e-3, "mΩ": 1e-3,
        "uohm": 1e-6, "µohm": 1e-6, "µΩ": 1e-6, "nohm": 1e-9,
    },
    "conductance_per_length": {
        "/ohm/m": 1.0, "1/(ohm*m)": 1.0, "ohm^-1*m^-1": 1.0, "S/m": 1.0,
    },
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "power": {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "µW": 1e-6, "nW": 1e-9, "pW": 1e-12},
    "temperature": {"K": 1.0, "mK": 1e-3},
    "dimensionless": {"": 1.0, "1": 1.0},
    "field_e": {"V/m": 1.0},
    "field_h": {"A/m": 1.0},
}

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


class UnitError(ValueError):
    pass


def to_si(value: float, unit: str, dimension: str) -> float:
    """Convert ``value`` expressed in ``unit`` to SI for the given dimension."""
    unit = unit.strip()
    if dimension == "power" and unit == "dBm":
        return dbm_to_watts(value)
    try:
        return value * _SCALE[dimension][unit]
    except KeyError:
        raise UnitError(f"unit {unit!r} is not a {dimension} unit") from None


def parse_quantity(text: str, dimension: str) -> float:
    """Parse ``"50 nm"`` style text into an SI float."""
    m = _NUMBER.match(text)
    if m is None:
        raise UnitError(f"cannot parse quantity {text!r}")
    return to_si(float(m.group(1)), m.group(2), dimension)


def unit_dimension(unit: str) -> str:
    unit = unit.strip()
    if unit == "dBm":
        return "power"
    for dim, table in _SCALE.items():
        if unit in table:
            return dim
    raise UnitError(f"unknown unit {unit!r}")


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts / 1e-3)


def angular(frequency: float) -> float:
    return 2.0 * math.pi * frequency
