"""Sampled electromagnetic fields on a structured grid, and their text
interchange format.

Field samples are complex RMS phasors, so the time-averaged stored energy
of a grid is ``sum((eps0*eps_r*|E|^2 + mu0*|H|^2) / 2 * dV)``.  Two
dimensional grids describe fields without variation along ``z``; each cell
then stands for a column of height ``depth``.
"""

from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from ..errors import ParseError, ValidationError
from ..units import EPS0, MU0, UnitError, to_si

FORMAT_TAG = "qpack-fieldgrid 1"


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Boundary:
    """Boundary entries: one row per (cell, surface) contact.

    ``point`` is the location on the physical surface the entry represents;
    line integrals along seams run through these points.
    """

    cell: np.ndarray
    normal: np.ndarray
    area: np.ndarray
    label: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cell", _frozen(self.cell, np.int64).reshape(-1))
        m = len(self.cell)
        object.__setattr__(self, "normal", _frozen(self.normal, float).reshape(m, 3))
        object.__setattr__(self, "area", _frozen(self.area, float).reshape(m))
        object.__setattr__(self, "label", _frozen(self.label, object).reshape(m))
        object.__setattr__(self, "point", _frozen(self.point, float).reshape(m, 3))

    @classmethod
    def empty(cls) -> "Boundary":
        return cls(np.zeros(0, int), np.zeros((0, 3)), np.zeros(0),
                   np.zeros(0, object), np.zeros((0, 3)))

    def __len__(self):
        return len(self.cell)

    def select(self, pattern: str | Iterable[str]) -> np.ndarray:
        """Indices of entries whose label matches a glob pattern (or any of several)."""
        patterns = [pattern] if isinstance(pattern, str) else list(pattern)
        labels = np.unique(self.label) if len(self) else []
        hit = [lab for lab in labels
               if any(fnmatch.fnmatchcase(lab, p) for p in patterns)]
        return np.flatnonzero(np.isin(self.label, hit))

    def labels(self) -> list[str]:
        return sorted(set(self.label.tolist()))


@dataclass(frozen=True)
class FieldGrid:
    spacing: float
    dimensionality: int
    points: np.ndarray
    e_field: np.ndarray
    h_field: np.ndarray
    cell_measure: np.ndarray
    region_id: np.ndarray
    region_permittivity: Mapping[str, float]
    boundary: Boundary = field(default_factory=Boundary.empty)
    depth: float = 1.0

    def __post_init__(self):
        n = len(self.cell_measure)
        set_ = object.__setattr__
        set_(self, "points", _frozen(self.points, float).reshape(n, 3))
        set_(self, "e_field", _frozen(self.e_field, complex).reshape(n, 3))
        set_(self, "h_field", _frozen(self.h_field, complex).reshape(n, 3))
        set_(self, "cell_measure", _frozen(self.cell_measure, float))
        set_(self, "region_id", _frozen(self.region_id, object).reshape(n))
        set_(self, "region_permittivity",
             MappingProxyType({str(k): float(v) for k, v in self.region_permittivity.items()}))
        if self.dimensionality not in (2, 3):
            raise ValidationError("dimensionality must be 2 or 3")
        if not self.spacing > 0:
            raise ValidationError("spacing must be > 0")
        if not self.depth > 0:
            raise ValidationError("depth must be > 0")
        if self.cell_measure.ndim != 1:
            raise ValidationError("cell_measure must be one-dimensional")
        if not np.all(self.cell_measure > 0):
            raise ValidationError("cell_measure must be > 0 everywhere")
        missing = set(self.region_id.tolist()) - set(self.region_permittivity)
        if missing:
            raise ValidationError(f"no permittivity for regions {sorted(missing)}")
        b = self.boundary
        if len(b):
            if b.cell.min() < 0 or b.cell.max() >= n:
                raise ValidationError("boundary cell index out of range")
            norms = np.linalg.norm(b.normal, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise ValidationError("boundary normals must be unit vectors")
            if np.any(b.area < 0):
                raise ValidationError("boundary areas must be non-negative")

    @property
    def n_cells(self) -> int:
        return len(self.cell_measure)

    @property
    def volume_weights(self) -> np.ndarray:
        """Integration weight (m^3) of each cell."""
        if self.dimensionality == 2:
            return self.cell_measure * self.depth
        return self.cell_measure

    def cell_permittivity(self) -> np.ndarray:
        lookup = self.region_permittivity
        return np.array([lookup[r] for r in self.region_id], dtype=float)

    def regions(self) -> list[str]:
        return sorted(set(self.region_id.tolist()))

    def scaled(self, factor: complex) -> "FieldGrid":
        return replace(self, e_field=self.e_field * factor, h_field=self.h_field * factor)

    def relabeled(self, mapping: Mapping[str, str]) -> "FieldGrid":
        """Rename regions; permittivities follow their regions."""
        region = np.array([mapping.get(r, r) for r in self.region_id], dtype=object)
        perm = {mapping.get(k, k): v for k, v in self.region_permittivity.items()}
        return replace(self, region_id=region, region_permittivity=perm)


def electric_energy_density(grid: FieldGrid) -> np.ndarray:
    """Per-cell ``eps0 * eps_r * |E|^2`` (J/m^3, before the factor 1/2)."""
    return EPS0 * grid.cell_permittivity() * np.sum(np.abs(grid.e_field) ** 2, axis=1)


def field_energy(grid: FieldGrid) -> float:
    """Time-averaged electromagnetic energy stored in the grid (J)."""
    we = electric_energy_density(grid)
    wh = MU0 * np.sum(np.abs(grid.h_field) ** 2, axis=1)
    return float(0.5 * np.sum((we + wh) * grid.volume_weights))


@dataclass(frozen=True)
class ModeSolution:
    frequency: float
    field: FieldGrid
    stored_energy: float | None = None
    label: str = ""

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValidationError("mode frequency must be > 0")
        if self.stored_energy is not None and not self.stored_energy > 0:
            raise ValidationError("stored energy must be > 0")


def normalize_energy(mode: ModeSolution, target: float = 1.0) -> ModeSolution:
    """Rescale a mode's fields so that its stored energy equals ``target``."""
    if not target > 0:
        raise ValidationError("target energy must be > 0")
    energy = field_energy(mode.field)
    if not energy > 0:
        raise ValidationError("cannot normalize a mode with zero field")
    if math.isclose(energy, target, rel_tol=1e-14, abs_tol=0.0):
        return replace(mode, stored_energy=target)
    return replace(mode, field=mode.field.scaled(math.sqrt(target / energy)),
                   stored_energy=target)


# --- interchange format -----------------------------------------------------

_CELL_COLUMNS = ["region", "measure", "x", "y", "z",
                 "ex_re", "ex_im", "ey_re", "ey_im", "ez_re", "ez_im",
                 "hx_re", "hx_im", "hy_re", "hy_im", "hz_re", "hz_im"]
_BOUNDARY_COLUMNS = ["cell", "nx", "ny", "nz", "area", "wx", "wy", "wz", "label"]


def _check_name(name: str, what: str) -> None:
    if not name or any(c in name for c in ", \t\n#="):
        raise ValidationError(f"{what} {name!r} cannot be written (spaces, commas, '#' or '=')")


def format_field_grid(grid: FieldGrid) -> str:
    for r in grid.region_permittivity:
        _check_name(r, "region")
    for lab in grid.boundary.labels():
        _check_name(lab, "surface label")
    measure_unit = "m2" if grid.dimensionality == 2 else "m3"
    out = [
        "# qpack-lab field grid",
        f"format = {FORMAT_TAG}",
        f"dimensionality = {grid.dimensionality}",
        f"spacing = {grid.spacing!r} m",
        f"depth = {grid.depth!r} m",
        f"cells = {grid.n_cells}",
        f"boundary = {len(grid.boundary)}",
        "length_unit = m",
        f"measure_unit = {measure_unit}",
        "e_unit = V/m",
        "h_unit = A/m",
        "area_unit = m2",
    ]
    for name, eps in sorted(grid.region_permittivity.items()):
        out.append(f"region = {name} {eps!r}")
    out.append("[cells]")
    out.append(",".join(_CELL_COLUMNS))
    e, h, p = grid.e_field, grid.h_field, grid.points
    for i in range(grid.n_cells):
        row = [grid.region_id[i], repr(float(grid.cell_measure[i]))]
        row += [repr(float(v)) for v in p[i]]
        for comp in (e[i], h[i]):
            for v in comp:
                row += [repr(float(v.real)), repr(float(v.imag))]
        out.append(",".join(row))
    out.append("[boundary]")
    out.append(",".join(_BOUNDARY_COLUMNS))
    b = grid.boundary
    for k in range(len(b)):
        row = [str(int(b.cell[k]))] + [repr(float(v)) for v in b.normal[k]]
        row += [repr(float(b.area[k]))] + [repr(float(v)) for v in b.point[k]]
        row.append(b.label[k])
        out.append(",".join(row))
    return "\n".join(out) + "\n"


def write_field_grid(grid: FieldGrid, path: str | Path) -> None:
    Path(path).write_text(format_field_grid(grid))


def parse_field_grid(text: str, source: str = "<string>") -> FieldGrid:
    lines = text.splitlines()
    header: dict[str, str] = {}
    regions: dict[str, float] = {}
    pos = 0
    while pos < len(lines) and lines[pos].strip() != "[cells]":
        line = lines[pos].split("#", 1)[0].strip()
        pos += 1
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ParseError(f"{source}:{pos}: expected 'key = value'")
        if key == "region":
            try:
                name, eps = value.split()
                regions[name] = float(eps)
            except ValueError:
                raise ParseError(f"{source}:{pos}: region needs 'name permittivity'") from None
        else:
            header[key] = value
    if header.get("format") != FORMAT_TAG:
        raise ParseError(f"{source}: not a {FORMAT_TAG!r} file")
    try:
        dim = int(header["dimensionality"])
        n = int(header["cells"])
        m = int(header["boundary"])
        length = _unit_scale(header.get("length_unit", "m"), "length")
        measure = _unit_scale(header.get("measure_unit", "m2" if dim == 2 else "m3"),
                              "area" if dim == 2 else "volume")
        area_scale = _unit_scale(header.get("area_unit", "m2"), "area")
        e_scale = _unit_scale(header.get("e_unit", "V/m"), "field_e")
        h_scale = _unit_scale(header.get("h_unit", "A/m"), "field_h")
        spacing = _quantity(header["spacing"], "length")
        depth = _quantity(header.get("depth", "1 m"), "length")
    except KeyError as exc:
        raise ParseError(f"{source}: header missing {exc.args[0]!r}") from None
    except (UnitError, ValueError) as exc:
        raise ParseError(f"{source}: {exc}") from None

    pos += 1
    if pos >= len(lines) or lines[pos].strip().split(",") != _CELL_COLUMNS:
        raise ParseError(f"{source}: bad cell column header")
    pos += 1
    cell_rows = lines[pos:pos + n]
    if len(cell_rows) != n:
        raise ParseError(f"{source}: expected {n} cell rows")
    pos += n
    region = np.empty(n, dtype=object)
    nums = np.empty((n, 16))
    for i, row in enumerate(cell_rows):
        parts = row.split(",")
        if len(parts) != 17:
            raise ParseError(f"{source}: cell row {i} has {len(parts)} fields")
        region[i] = parts[0]
        try:
            nums[i] = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError(f"{source}: cell row {i} is not numeric") from None
    if pos >= len(lines) or lines[pos].strip() != "[boundary]":
        raise ParseError(f"{source}: missing [boundary] section")
    pos += 1
    if pos >= len(lines) or lines[pos].strip().split(",") != _BOUNDARY_COLUMNS:
        raise ParseError(f"{source}: bad boundary column header")
    pos += 1
    b_rows = [r for r in lines[pos:] if r.strip()]
    if len(b_rows) != m:
        raise ParseError(f"{source}: expected {m} boundary rows, found {len(b_rows)}")
    bcell = np.empty(m, dtype=np.int64)
    bnum = np.empty((m, 7))
    blabel = np.empty(m, dtype=object)
    for k, row in enumerate(b_rows):
        parts = row.split(",")
        if len(parts) != 9:
            raise ParseError(f"{source}: boundary row {k} has {len(parts)} fields")
        try:
            bcell[k] = int(parts[0])
            bnum[k] = [float(v) for v in parts[1:8]]
        except ValueError:
            raise ParseError(f"{source}: boundary row {k} is not numeric") from None
        blabel[k] = parts[8]

    e = (nums[:, 4:10:2] + 1j * nums[:, 5:11:2]) * e_scale
    h = (nums[:, 10:16:2] + 1j * nums[:, 11:17:2]) * h_scale
    boundary = Boundary(bcell, bnum[:, 0:3], bnum[:, 3] * area_scale, blabel,
                        bnum[:, 4:7] * length)
    return FieldGrid(spacing=spacing, dimensionality=dim, points=nums[:, 1:4] * length,
                     e_field=e, h_field=h, cell_measure=nums[:, 0] * measure,
                     region_id=region, region_permittivity=regions,
                     boundary=boundary, depth=depth)


def read_field_grid(path: str | Path) -> FieldGrid:
    path = Path(path)
    return parse_field_grid(path.read_text(), str(path))


def _unit_scale(unit: str, dimension: str) -> float:
    return to_si(1.0, unit, dimension)


def _quantity(text: str, dimension: str) -> float:
    value, _, unit = text.partition(" ")
    return to_si(float(value), unit, dimension)
