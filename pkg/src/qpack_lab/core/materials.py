"""Material property tables.

File format, one property per line::

    # comment
    Al.penetration_depth = 50 nm
    Al/Al.seam_conductance = 700 /ohm/m

The key is split at its last ``.`` into material and property name; the
value carries an explicit unit that is converted to SI on load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from ..errors import MissingPropertyError, ParseError, ValidationError
from ..units import UnitError, parse_quantity

PROPERTIES = {
    "relative_permittivity": "dimensionless",
    "loss_tangent": "dimensionless",
    "surface_resistance": "resistance",
    "penetration_depth": "length",
    "oxide_thickness": "length",
    "oxide_permittivity": "dimensionless",
    "seam_conductance": "conductance_per_length",
}

DEFAULT_MATERIALS = "materials_default.txt"


@dataclass(frozen=True)
class MaterialTable:
    """Mapping ``material -> {property: SI value}`` with an open set of keys."""

    entries: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        frozen = {}
        for name, props in self.entries.items():
            for prop, value in props.items():
                if prop not in PROPERTIES:
                    raise ValidationError(f"{name}: unknown property {prop!r}")
                if not math.isfinite(value):
                    raise ValidationError(f"{name}.{prop} is not finite")
                if prop == "loss_tangent":
                    if value < 0:
                        raise ValidationError(f"{name}.loss_tangent must be >= 0")
                elif value <= 0:
                    raise ValidationError(f"{name}.{prop} must be > 0")
            frozen[name] = MappingProxyType(dict(props))
        object.__setattr__(self, "entries", MappingProxyType(frozen))

    def get(self, material: str, prop: str) -> float:
        """Return a property; absent materials or properties raise."""
        try:
            return self.entries[material][prop]
        except KeyError:
            raise MissingPropertyError(
                f"property absent: {material}.{prop}") from None

    def has(self, material: str, prop: str) -> bool:
        return prop in self.entries.get(material, {})

    def __contains__(self, material: str) -> bool:
        return material in self.entries

    def materials(self) -> list[str]:
        return sorted(self.entries)


def parse_material_table(text: str, source: str = "<string>") -> MaterialTable:
    entries: dict[str, dict[str, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ParseError(f"{source}:{lineno}: expected 'material.property = value unit'")
        material, _, prop = key.rpartition(".")
        if prop not in PROPERTIES:
            raise ParseError(f"{source}:{lineno}: unknown property {prop!r}")
        try:
            si = parse_quantity(value, PROPERTIES[prop])
        except UnitError as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from None
        entries.setdefault(material, {})[prop] = si
    return MaterialTable(entries)


def load_material_table(path: str | Path | None = None) -> MaterialTable:
    """Load a material table; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("qpack_lab.data").joinpath(DEFAULT_MATERIALS).read_text()
        return parse_material_table(text, DEFAULT_MATERIALS)
    path = Path(path)
    return parse_material_table(path.read_text(), str(path))


def format_material_table(table: MaterialTable) -> str:
    lines = []
    for name in table.materials():
        for prop, value in sorted(table.entries[name].items()):
            unit = {"length": "m", "resistance": "ohm",
                    "conductance_per_length": "/ohm/m"}.get(PROPERTIES[prop], "")
            lines.append(f"{name}.{prop} = {value!r} {unit}".rstrip())
    return "\n".join(lines) + "\n"
