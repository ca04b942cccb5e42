"""Packaging loss budget: participation ratios, seam admittances, Q limits.

All integrals use piecewise-constant cell quadrature: a volume integral is
``sum(value * cell weight)``, a surface integral ``sum(value * entry area)``
over boundary entries, and a seam integral the trapezoid rule through the
entries' surface points.  Imported exports and solver grids are therefore
evaluated identically.

Conductor Q is computed as ``omega * mu0 * lambda / (R_s * p_cond)``, i.e.
geometry factor over surface resistance; a larger surface resistance lowers
Q.  Participations are ratios and do not depend on the peak/RMS phasor
convention; seam admittance is likewise a ratio of two quadratic forms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core.fieldgrid import FieldGrid, electric_energy_density
from .core.materials import MaterialTable
from .errors import MissingPropertyError, ParseError, QpackError, ValidationError
from .units import EPS0, MU0, UnitError, angular, parse_quantity


class ChannelKind(str, enum.Enum):
    BULK_DIELECTRIC = "bulk_dielectric"
    SURFACE_DIELECTRIC = "surface_dielectric"
    CONDUCTOR = "conductor"
    SEAM = "seam"


@dataclass(frozen=True)
class LossChannel:
    """One loss channel. ``participation`` holds the seam admittance
    (1/(ohm m)) for seam channels."""

    kind: ChannelKind
    label: str
    participation: float
    material: str

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        p = self.participation
        if not math.isfinite(p) or p < 0:
            raise ValidationError(f"{self.label}: participation must be finite and >= 0")
        if self.kind in (ChannelKind.BULK_DIELECTRIC, ChannelKind.SURFACE_DIELECTRIC) and p > 1:
            raise ValidationError(f"{self.label}: dielectric participation exceeds 1")


@dataclass(frozen=True)
class QBudget:
    channels: tuple[tuple[LossChannel, float], ...]
    total_q: float
    t1_limit: float
    frequency: float
    unbudgeted: tuple[tuple[LossChannel, str], ...] = ()


# --- participations ---------------------------------------------------------

def _region_mask(grid: FieldGrid, region: str | Iterable[str]) -> np.ndarray:
    import fnmatch

    patterns = [region] if isinstance(region, str) else list(region)
    labels = [r for r in grid.regions() if any(fnmatch.fnmatchcase(r, p) for p in patterns)]
    if not labels:
        raise QpackError(f"unknown region {region!r}; grid has {grid.regions()}")
    return np.isin(grid.region_id, labels)


def _check_permittivities(grid: FieldGrid, materials: MaterialTable | None) -> None:
    if materials is None:
        return
    for region, eps in grid.region_permittivity.items():
        if materials.has(region, "relative_permittivity"):
            listed = materials.get(region, "relative_permittivity")
            if not math.isclose(listed, eps, rel_tol=1e-9):
                raise ValidationError(
                    f"region {region!r}: grid permittivity {eps} disagrees with "
                    f"material table value {listed}")


def dielectric_participation(grid: FieldGrid, region: str | Iterable[str],
                             materials: MaterialTable | None = None) -> float:
    """Fraction of electric energy stored in ``region`` (glob patterns allowed)."""
    _check_permittivities(grid, materials)
    mask = _region_mask(grid, region)
    w = electric_energy_density(grid) * grid.volume_weights
    total = w.sum()
    if not total > 0:
        raise QpackError("grid stores no electric energy")
    return float(w[mask].sum() / total)


def _surface(grid: FieldGrid, surface: str | Iterable[str]) -> np.ndarray:
    sel = grid.boundary.select(surface)
    if len(sel) == 0:
        raise QpackError(f"surface label {surface!r} absent; grid has {grid.boundary.labels()}")
    return sel


def surface_dielectric_participation(grid: FieldGrid, surface: str | Iterable[str],
                                     thickness: float, oxide_permittivity: float,
                                     convention: str = "metal_oxide") -> float:
    """Participation of a thin dielectric layer of ``thickness`` on a surface.

    ``metal_oxide``: fields are sampled in the medium just outside a metal
    surface and the layer sits between that medium and the metal.  The
    normal displacement field is continuous, so inside the layer
    ``E = eps_side * E_side / eps_ox`` and the layer's energy density is
    ``eps0 * eps_ox * |E_side|^2 * (eps_side/eps_ox)^2``.

    ``in_layer``: the samples already represent the field inside the layer
    (substrate-air or metal-substrate interfaces evaluated on their own
    side); the energy density is ``eps0 * eps_ox * |E|^2``.

    ``inverse_square``: the sampled-side energy density ``eps0 * eps_side *
    |E|^2`` divided by ``eps_ox**2``.  Kept for comparison with budgets
    quoted that way; it is smaller than ``metal_oxide`` by a factor of
    ``eps_side * eps_ox``.
    """
    if not thickness > 0:
        raise ValidationError("layer thickness must be > 0")
    if not oxide_permittivity > 0:
        raise ValidationError("layer permittivity must be > 0")
    sel = _surface(grid, surface)
    b = grid.boundary
    cells = b.cell[sel]
    e2 = np.sum(np.abs(grid.e_field[cells]) ** 2, axis=1)
    if convention == "metal_oxide":
        eps_side = grid.cell_permittivity()[cells]
        density = EPS0 * oxide_permittivity * e2 * (eps_side / oxide_permittivity) ** 2
    elif convention == "in_layer":
        density = EPS0 * oxide_permittivity * e2
    elif convention == "inverse_square":
        density = EPS0 * grid.cell_permittivity()[cells] * e2 / oxide_permittivity ** 2
    else:
        raise ValidationError(f"unknown surface convention {convention!r}")
    layer = thickness * np.sum(density * b.area[sel])
    total = np.sum(electric_energy_density(grid) * grid.volume_weights)
    if not total > 0:
        raise QpackError("grid stores no electric energy")
    return float(layer / total)


def _tangential_h2(grid: FieldGrid, sel: np.ndarray) -> np.ndarray:
    b = grid.boundary
    h = grid.h_field[b.cell[sel]]
    n = b.normal[sel]
    normal_part = np.sum(h * n, axis=1)
    return np.sum(np.abs(h) ** 2, axis=1) - np.abs(normal_part) ** 2


def _magnetic_integral(grid: FieldGrid) -> float:
    return float(np.sum(np.sum(np.abs(grid.h_field) ** 2, axis=1) * grid.volume_weights))


def conductor_participation(grid: FieldGrid, surface: str | Iterable[str],
                            penetration_depth: float) -> float:
    """``lambda * int |H_par|^2 dS / int |H|^2 dV`` over the matching surfaces."""
    if not penetration_depth > 0:
        raise ValidationError("penetration depth must be > 0")
    sel = _surface(grid, surface)
    total = _magnetic_integral(grid)
    if not total > 0:
        raise QpackError("grid has no magnetic field")
    ht2 = np.maximum(_tangential_h2(grid, sel), 0.0)
    return float(penetration_depth * np.sum(ht2 * grid.boundary.area[sel]) / total)


def surface_loops(grid: FieldGrid, pattern: str | Iterable[str]) -> list[tuple[str, np.ndarray]]:
    """One closed seam path per matching surface label.

    Entries are ordered by angle about the centroid of their surface
    points, which traces a loop around a side wall or pillar.
    """
    b = grid.boundary
    sel = _surface(grid, pattern)
    loops = []
    for label in sorted(set(b.label[sel].tolist())):
        idx = sel[b.label[sel] == label]
        pts = b.point[idx, :2]
        c = pts.mean(axis=0)
        theta = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
        loops.append((label, idx[np.argsort(theta, kind="stable")]))
    return loops


def seam_admittance(grid: FieldGrid, seam_path: Sequence[int], frequency: float,
                    closed: bool = False) -> float:
    """Seam admittance ``int |H_par|^2 dl / (omega * int mu0 |H|^2 dV)``.

    ``seam_path`` lists boundary-entry indices in order along the seam;
    ``H_par`` is the field component along the path direction.
    """
    path = np.asarray(seam_path, dtype=np.int64)
    if len(path) < 2:
        raise ValidationError("seam path needs at least two entries")
    if not frequency > 0:
        raise ValidationError("frequency must be > 0")
    total = _magnetic_integral(grid)
    if not total > 0:
        raise QpackError("zero total magnetic energy")
    b = grid.boundary
    pts = b.point[path]
    if closed:
        fwd = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    else:
        fwd = np.gradient(pts, axis=0)
    norm = np.linalg.norm(fwd, axis=1)
    # duplicate points: fall back to the in-plane direction perpendicular to the normal
    fallback = np.cross(np.array([0.0, 0.0, 1.0]), b.normal[path])
    tangent = np.where(norm[:, None] > 0, fwd / np.where(norm > 0, norm, 1.0)[:, None], fallback)
    h = grid.h_field[b.cell[path]]
    hpar2 = np.abs(np.sum(h * tangent, axis=1)) ** 2
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    line = np.sum(0.5 * (hpar2[:-1] + hpar2[1:]) * seg)
    if closed:
        line += 0.5 * (hpar2[-1] + hpar2[0]) * np.linalg.norm(pts[0] - pts[-1])
    return float(line / (angular(frequency) * MU0 * total))


# --- quality factors --------------------------------------------------------

def q_from_channel(channel: LossChannel, materials: MaterialTable, frequency: float) -> float:
    """Q limit of a single channel; missing material data raises."""
    if not frequency > 0:
        raise ValidationError("frequency must be > 0")
    p = channel.participation
    kind = channel.kind
    if kind in (ChannelKind.BULK_DIELECTRIC, ChannelKind.SURFACE_DIELECTRIC):
        loss = p * materials.get(channel.material, "loss_tangent")
        return math.inf if loss == 0 else 1.0 / loss
    if kind is ChannelKind.CONDUCTOR:
        rs = materials.get(channel.material, "surface_resistance")
        lam = materials.get(channel.material, "penetration_depth")
        return math.inf if p == 0 else angular(frequency) * MU0 * lam / (rs * p)
    g = materials.get(channel.material, "seam_conductance")
    return math.inf if p == 0 else g / p


def assemble_budget(channels: Sequence[LossChannel], materials: MaterialTable,
                    frequency: float) -> QBudget:
    """Combine channels by summing inverse Q; channels whose material has no
    loss rate are carried as unbudgeted."""
    if not channels:
        raise ValidationError("budget needs at least one channel")
    budgeted, unbudgeted = [], []
    for ch in channels:
        try:
            budgeted.append((ch, q_from_channel(ch, materials, frequency)))
        except MissingPropertyError as exc:
            unbudgeted.append((ch, str(exc)))
    inverse = math.fsum(1.0 / q for _, q in budgeted)
    total = math.inf if inverse == 0 else 1.0 / inverse
    return QBudget(tuple(budgeted), total, total / angular(frequency), frequency,
                   tuple(unbudgeted))


def t1_from_q(q: float, frequency: float) -> float:
    return q / angular(frequency)


def seam_bound_from_t1(t1: float, frequency: float, y_seam: float) -> float:
    """Smallest seam conductance compatible with a measured T1 if that seam
    alone limited the qubit."""
    if not (t1 > 0 and frequency > 0 and y_seam > 0):
        raise ValidationError("t1, frequency and y_seam must all be > 0")
    return y_seam * angular(frequency) * t1


def t1_bound(frequencies: Sequence[float], channels: Sequence[LossChannel],
             materials: MaterialTable) -> list[tuple[float, float]]:
    """Packaging-limited T1 across frequency at fixed participations."""
    if len(frequencies) == 0:
        raise ValidationError("empty frequency list")
    return [(float(f), assemble_budget(channels, materials, f).t1_limit)
            for f in frequencies]


# --- channel declarations ---------------------------------------------------

@dataclass(frozen=True)
class ChannelSpec:
    kind: ChannelKind
    label: str
    material: str
    options: Mapping[str, str] = field(default_factory=dict)


_OPTION_DIMS = {"thickness": "length", "permittivity": "dimensionless",
                "lambda": "length"}


def parse_channels(text: str, source: str = "<string>") -> list[ChannelSpec]:
    """Parse ``kind label material [key=value ...]`` lines.

    Labels are region names (bulk dielectric) or surface labels (other
    kinds) and may be glob patterns; ``seam`` entries integrate around
    each matching surface.
    """
    specs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ParseError(f"{source}:{lineno}: expected 'kind label material [options]'")
        try:
            kind = ChannelKind(parts[0])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: unknown channel kind {parts[0]!r}") from None
        opts = {}
        for tok in parts[3:]:
            key, sep, value = tok.partition("=")
            if not sep:
                raise ParseError(f"{source}:{lineno}: bad option {tok!r}")
            opts[key] = value
        specs.append(ChannelSpec(kind, parts[1], parts[2], opts))
    return specs


def load_channels(path: str | Path) -> list[ChannelSpec]:
    path = Path(path)
    return parse_channels(path.read_text(), str(path))


def _option(spec: ChannelSpec, key: str, materials: MaterialTable, prop: str) -> float:
    if key in spec.options:
        value = spec.options[key]
        try:
            return parse_quantity(value.replace("_", " "), _OPTION_DIMS[key])
        except UnitError as exc:
            raise ParseError(f"{spec.label}: option {key}: {exc}") from None
    return materials.get(spec.material, prop)


def evaluate_channels(grid: FieldGrid, specs: Sequence[ChannelSpec],
                      materials: MaterialTable, frequency: float) -> list[LossChannel]:
    channels = []
    for spec in specs:
        if spec.kind is ChannelKind.BULK_DIELECTRIC:
            p = dielectric_participation(grid, spec.label, materials)
        elif spec.kind is ChannelKind.SURFACE_DIELECTRIC:
            p = surface_dielectric_participation(
                grid, spec.label,
                _option(spec, "thickness", materials, "oxide_thickness"),
                _option(spec, "permittivity", materials, "oxide_permittivity"),
                spec.options.get("convention", "metal_oxide"))
        elif spec.kind is ChannelKind.CONDUCTOR:
            p = conductor_participation(
                grid, spec.label, _option(spec, "lambda", materials, "penetration_depth"))
        else:
            p = sum(seam_admittance(grid, loop, frequency, closed=True)
                    for _, loop in surface_loops(grid, spec.label))
        channels.append(LossChannel(spec.kind, spec.label, p, spec.material))
    return channels


def budget_rows(budget: QBudget) -> list[dict]:
    rows = []
    for ch, q in budget.channels:
        rows.append({"kind": ch.kind.value, "label": ch.label, "material": ch.material,
                     "participation": ch.participation, "q_limit": q,
                     "t1_limit_s": t1_from_q(q, budget.frequency), "status": "budgeted"})
    for ch, reason in budget.unbudgeted:
        rows.append({"kind": ch.kind.value, "label": ch.label, "material": ch.material,
                     "participation": ch.participation, "q_limit": None,
                     "t1_limit_s": None, "status": f"unbudgeted: {reason}"})
    return rows
