"""Cavity geometry: a thin disc cavity, optional wafer, shorting pillars."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from ..errors import ParseError, ValidationError
from ..units import UnitError, parse_quantity
from .materials import MaterialTable


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Pillar:
    center: Point2
    radius: float


@dataclass(frozen=True)
class CavityGeometry:
    radius: float
    height: float
    pillars: tuple[Pillar, ...] = ()
    wafer_thickness: float = 0.0
    wafer_permittivity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "pillars", tuple(
            p if isinstance(p, Pillar) else Pillar(Point2(*p[0]), p[1])
            for p in self.pillars))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValidationError("cavity radius must be > 0")
        if not (self.height > 0 and math.isfinite(self.height)):
            raise ValidationError("cavity height must be > 0")
        if not 0 <= self.wafer_thickness < self.height:
            raise ValidationError("wafer thickness must satisfy 0 <= t < height")
        if not self.wafer_permittivity >= 1:
            raise ValidationError("wafer permittivity must be >= 1")
        for i, p in enumerate(self.pillars):
            if not (math.isfinite(p.center.x) and math.isfinite(p.center.y)):
                raise ValidationError(f"pillar {i}: non-finite center")
            if not p.radius > 0:
                raise ValidationError(f"pillar {i}: radius must be > 0")
            if math.hypot(*p.center) + p.radius >= self.radius:
                raise ValidationError(f"pillar {i} is not strictly inside the cavity")
        _check_disjoint(self.pillars)

    @property
    def effective_permittivity(self) -> float:
        """Series-capacitor loading of a partially filled gap (field normal to the wafer)."""
        t = self.wafer_thickness
        return self.height / ((self.height - t) + t / self.wafer_permittivity)

    def with_pillars(self, pillars: Iterable[Pillar]) -> "CavityGeometry":
        return CavityGeometry(self.radius, self.height, tuple(pillars),
                              self.wafer_thickness, self.wafer_permittivity)


def _check_disjoint(pillars: Sequence[Pillar]) -> None:
    # sort by x so only nearby candidates are compared
    order = sorted(range(len(pillars)), key=lambda i: pillars[i].center.x)
    rmax = max((p.radius for p in pillars), default=0.0)
    for a_pos, i in enumerate(order):
        pi = pillars[i]
        for j in order[a_pos + 1:]:
            pj = pillars[j]
            if pj.center.x - pi.center.x > pi.radius + rmax:
                break
            d = math.hypot(pi.center.x - pj.center.x, pi.center.y - pj.center.y)
            if d <= pi.radius + pj.radius:
                raise ValidationError(f"pillars {i} and {j} overlap")


def pillar_lattice(cavity_radius: float, pitch: float, pillar_radius: float,
                   margin: float = 0.0, skip: Iterable[int] = (),
                   kind: str = "triangular") -> list[Pillar]:
    """Pillars on a regular lattice centred on the cavity axis.

    Sites whose pillar would come closer than ``margin`` to the outer wall
    are dropped. Remaining sites are numbered in row-major order (by y then
    x) and any index in ``skip`` is left empty.
    """
    if pitch <= 2 * pillar_radius:
        raise ValidationError("lattice pitch must exceed the pillar diameter")
    if kind == "triangular":
        row_step = pitch * math.sqrt(3) / 2
    elif kind == "square":
        row_step = pitch
    else:
        raise ValidationError(f"unknown lattice kind {kind!r}")
    limit = cavity_radius - margin - pillar_radius
    nrow = int(cavity_radius / row_step) + 1
    ncol = int(cavity_radius / pitch) + 2
    sites = []
    for r in range(-nrow, nrow + 1):
        offset = 0.5 * pitch if (kind == "triangular" and r % 2) else 0.0
        for c in range(-ncol, ncol + 1):
            x, y = c * pitch + offset, r * row_step
            if math.hypot(x, y) < limit:
                sites.append((y, x))
    sites.sort()
    skip = set(skip)
    return [Pillar(Point2(x, y), pillar_radius)
            for k, (y, x) in enumerate(sites) if k not in skip]


_SCALARS = {
    "radius": "length",
    "height": "length",
    "wafer_thickness": "length",
}


def parse_geometry(text: str, materials: MaterialTable | None = None,
                   source: str = "<string>") -> CavityGeometry:
    """Parse the geometry text format.

    ::

        radius = 47.3 mm
        height = 2 mm
        wafer_thickness = 0.43 mm
        wafer_permittivity = 11.5          # or a material name
        pillar = 0 0 1 mm                  # x y radius unit
        lattice = triangular pitch=9.6 mm radius=1 mm margin=2 mm skip=0,3
    """
    values: dict[str, float] = {}
    pillars: list[Pillar] = []
    lattice_line = None
    eps_spec = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        where = f"{source}:{lineno}"
        if not sep:
            raise ParseError(f"{where}: expected 'key = value'")
        try:
            if key in _SCALARS:
                values[key] = parse_quantity(value, _SCALARS[key])
            elif key == "wafer_permittivity":
                eps_spec = value
            elif key == "pillar":
                parts = value.split()
                if len(parts) != 4:
                    raise ParseError(f"{where}: pillar needs 'x y radius unit'")
                unit = parts[3]
                x, y, r = (parse_quantity(f"{p} {unit}", "length") for p in parts[:3])
                pillars.append(Pillar(Point2(x, y), r))
            elif key == "lattice":
                lattice_line = (value, where)
            else:
                raise ParseError(f"{where}: unknown key {key!r}")
        except UnitError as exc:
            raise ParseError(f"{where}: {exc}") from None
    for key in ("radius", "height"):
        if key not in values:
            raise ParseError(f"{source}: missing {key}")
    eps = 1.0
    if eps_spec is not None:
        try:
            eps = float(eps_spec)
        except ValueError:
            if materials is None:
                raise ParseError(f"{source}: wafer permittivity {eps_spec!r} "
                                 "names a material but no table was given") from None
            eps = materials.get(eps_spec, "relative_permittivity")
    if lattice_line is not None:
        pillars.extend(_parse_lattice(*lattice_line, cavity_radius=values["radius"]))
    return CavityGeometry(values["radius"], values["height"], tuple(pillars),
                          values.get("wafer_thickness", 0.0), eps)


def _parse_lattice(value: str, where: str, cavity_radius: float) -> list[Pillar]:
    kind, *rest = value.split()
    opts: dict[str, str] = {}
    key = None
    for tok in rest:
        if "=" in tok:
            key, _, v = tok.partition("=")
            opts[key] = v
        elif key is not None:
            opts[key] += " " + tok
        else:
            raise ParseError(f"{where}: bad lattice token {tok!r}")
    try:
        skip = [int(s) for s in opts.get("skip", "").split(",") if s.strip()]
        return pillar_lattice(
            cavity_radius,
            pitch=parse_quantity(opts["pitch"], "length"),
            pillar_radius=parse_quantity(opts["radius"], "length"),
            margin=parse_quantity(opts.get("margin", "0 m"), "length"),
            skip=skip, kind=kind)
    except KeyError as exc:
        raise ParseError(f"{where}: lattice needs {exc.args[0]}=") from None
    except (UnitError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def load_geometry(path: str | Path, materials: MaterialTable | None = None) -> CavityGeometry:
    path = Path(path)
    return parse_geometry(path.read_text(), materials, str(path))


def format_geometry(geometry: CavityGeometry) -> str:
    lines = [
        f"radius = {geometry.radius!r} m",
        f"height = {geometry.height!r} m",
        f"wafer_thickness = {geometry.wafer_thickness!r} m",
        f"wafer_permittivity = {geometry.wafer_permittivity!r}",
    ]
    lines += [f"pillar = {p.center.x!r} {p.center.y!r} {p.radius!r} m"
              for p in geometry.pillars]
    return "\n".join(lines) + "\n"
