"""Box modes of a thin cylindrical cavity with shorting pillars.

Below ``c / (2 * height)`` only TM modes without vertical variation exist in
a thin cavity, so the problem reduces to the scalar Helmholtz equation for
``E_z`` on the disc with the pillar cross-sections removed::

    -lap(psi) = k**2 * eps_eff * psi,    psi = 0 on the wall and pillars

The Laplacian is a 5-point stencil on a uniform grid.  Where a stencil arm
leaves the domain it is cut at the true boundary crossing, which only adds
to the diagonal, so the matrix stays symmetric positive definite and the
eigenvalues converge at second order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import j0, j1, jn_zeros

from .core.fieldgrid import (Boundary, FieldGrid, ModeSolution, field_energy,
                             normalize_energy, write_field_grid)
from .core.geometry import CavityGeometry, Pillar, pillar_lattice  # noqa: F401
from .errors import ConvergenceError, QpackError, ValidationError
from .units import C_LIGHT, MU0

log = logging.getLogger(__name__)

REGION = "cavity"
_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class SolverConfig:
    grid_spacing: float
    num_modes: int = 16
    shift: float = 0.0
    max_iterations: int | None = None
    tolerance: float = 1e-9

    def __post_init__(self):
        if not self.grid_spacing > 0:
            raise ValidationError("grid_spacing must be > 0")
        if self.num_modes < 1:
            raise ValidationError("num_modes must be >= 1")
        if not 0 < self.tolerance <= 1e-2:
            raise ValidationError("tolerance must lie in (0, 1e-2]")
        if self.shift < 0:
            raise ValidationError("shift must be >= 0")


@dataclass(frozen=True)
class ModeSpectrum:
    modes: tuple[ModeSolution, ...]
    geometry: CavityGeometry
    config: SolverConfig
    groups: tuple[tuple[int, ...], ...] = ()

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.modes])


class Discretization:
    """Embedded-boundary grid over the cavity cross-section."""

    def __init__(self, geometry: CavityGeometry, spacing: float):
        self.geometry = geometry
        self.h = h = float(spacing)
        a = geometry.radius
        for i, p in enumerate(geometry.pillars):
            if p.radius / h < 4:
                raise ValidationError(
                    f"grid too coarse for pillar {i}: radius spans "
                    f"{p.radius / h:.2f} cells, need >= 4")
        nhalf = int(math.ceil(a / h)) + 1
        self.axis = np.arange(-nhalf, nhalf + 1) * h
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        # 0 = domain, -1 = outside the wall, k + 1 = inside pillar k
        owner = np.zeros(X.shape, dtype=np.int64)
        owner[X ** 2 + Y ** 2 >= a * a] = -1
        for k, p in enumerate(geometry.pillars):
            cx, cy = p.center
            i0 = np.searchsorted(self.axis, cx - p.radius - h)
            i1 = np.searchsorted(self.axis, cx + p.radius + h)
            j0_ = np.searchsorted(self.axis, cy - p.radius - h)
            j1_ = np.searchsorted(self.axis, cy + p.radius + h)
            sub = (slice(i0, i1), slice(j0_, j1_))
            inside = (X[sub] - cx) ** 2 + (Y[sub] - cy) ** 2 <= p.radius ** 2
            owner[sub][inside] = k + 1
        self.owner = owner
        self.mask = owner == 0
        self.index = np.full(X.shape, -1, dtype=np.int64)
        self.n = int(self.mask.sum())
        if self.n == 0:
            raise ValidationError("grid has no interior nodes")
        self.index[self.mask] = np.arange(self.n)
        self.I, self.J = np.nonzero(self.mask)
        self.x = X[self.mask]
        self.y = Y[self.mask]
        # arm length towards each direction (h unless cut by the boundary)
        self.arm = np.full((4, self.n), h)
        self.arm_owner = np.zeros((4, self.n), dtype=np.int64)
        for d, (di, dj) in enumerate(_DIRECTIONS):
            nb = owner[self.I + di, self.J + dj]
            cut = nb != 0
            self.arm_owner[d] = nb
            if np.any(cut):
                self.arm[d, cut] = self._crossing(self.x[cut], self.y[cut],
                                                  di, dj, nb[cut])

    def _crossing(self, x, y, ex, ey, obstacle):
        """Distance from (x, y) along (ex, ey) to the boundary of ``obstacle``."""
        g = self.geometry
        t = np.empty(len(x))
        wall = obstacle == -1
        b = x[wall] * ex + y[wall] * ey
        c = x[wall] ** 2 + y[wall] ** 2 - g.radius ** 2
        t[wall] = -b + np.sqrt(np.maximum(b * b - c, 0.0))
        if np.any(~wall):
            k = obstacle[~wall] - 1
            cx = np.array([p.center.x for p in g.pillars])[k]
            cy = np.array([p.center.y for p in g.pillars])[k]
            r = np.array([p.radius for p in g.pillars])[k]
            dx, dy = x[~wall] - cx, y[~wall] - cy
            b = dx * ex + dy * ey
            c = dx * dx + dy * dy - r * r
            t[~wall] = -b - np.sqrt(np.maximum(b * b - c, 0.0))
        return np.clip(t, 1e-6 * self.h, self.h)

    def laplacian(self) -> sp.csc_matrix:
        """Matrix of ``-lap`` (1/m^2), symmetric positive definite."""
        h = self.h
        diag = np.zeros(self.n)
        rows, cols = [], []
        for d, (di, dj) in enumerate(_DIRECTIONS):
            interior = self.arm_owner[d] == 0
            diag[interior] += 1.0 / h ** 2
            diag[~interior] += 1.0 / (h * self.arm[d, ~interior])
            rows.append(np.flatnonzero(interior))
            cols.append(self.index[self.I[interior] + di, self.J[interior] + dj])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate([np.full(len(rows), -1.0 / h ** 2), diag])
        idx = np.arange(self.n)
        A = sp.coo_matrix((data, (np.concatenate([rows, idx]), np.concatenate([cols, idx]))),
                          shape=(self.n, self.n))
        return A.tocsc()

    def gradient(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Second-order gradient of a nodal field that vanishes on the boundary."""
        out = []
        for fwd, back, (di, dj) in ((0, 1, (1, 0)), (2, 3, (0, 1))):
            dp, dm = self.arm[fwd], self.arm[back]
            nb_p = self.index[self.I + di, self.J + dj]
            nb_m = self.index[self.I - di, self.J - dj]
            psi_p = np.where(nb_p >= 0, psi[np.maximum(nb_p, 0)], 0.0)
            psi_m = np.where(nb_m >= 0, psi[np.maximum(nb_m, 0)], 0.0)
            psi_p = np.where(self.arm_owner[fwd] == 0, psi_p, 0.0)
            psi_m = np.where(self.arm_owner[back] == 0, psi_m, 0.0)
            out.append((dm ** 2 * (psi_p - psi) + dp ** 2 * (psi - psi_m))
                       / (dm * dp * (dm + dp)))
        return out[0], out[1]

    def full_array(self, values: np.ndarray) -> np.ndarray:
        """Scatter nodal values onto the full lattice (zero outside the domain)."""
        full = np.zeros(self.mask.shape, dtype=values.dtype)
        full[self.mask] = values
        return full

    def boundary(self) -> Boundary:
        """Wall, pillar, floor and lid entries for the nodes of this grid."""
        g = self.geometry
        depth = g.height
        cells, normals, areas, labels, points = [], [], [], [], []
        touching = {}
        for d in range(4):
            for obstacle in np.unique(self.arm_owner[d]):
                if obstacle == 0:
                    continue
                sel = np.flatnonzero(self.arm_owner[d] == obstacle)
                touching.setdefault(int(obstacle), []).append(sel)
        for obstacle in sorted(touching):
            nodes = np.unique(np.concatenate(touching[obstacle]))
            if obstacle == -1:
                cx = cy = 0.0
                radius = g.radius
                label = "wall"
                sign = 1.0
            else:
                p = g.pillars[obstacle - 1]
                cx, cy = p.center
                radius = p.radius
                label = f"pillar_{obstacle - 1}"
                sign = -1.0
            dx, dy = self.x[nodes] - cx, self.y[nodes] - cy
            rr = np.hypot(dx, dy)
            ux, uy = dx / rr, dy / rr
            theta = np.arctan2(uy, ux)
            order = np.argsort(theta, kind="stable")
            ts = theta[order]
            gaps = np.diff(np.concatenate([ts, [ts[0] + 2 * math.pi]]))
            share = np.empty(len(nodes))
            share[order] = 0.5 * (gaps + np.roll(gaps, 1))
            cells.append(nodes)
            normals.append(np.column_stack([sign * ux, sign * uy, np.zeros(len(nodes))]))
            areas.append(share * radius * depth)
            labels.append(np.full(len(nodes), label, dtype=object))
            points.append(np.column_stack([cx + radius * ux, cy + radius * uy,
                                           np.zeros(len(nodes))]))
        all_nodes = np.arange(self.n)
        for label, nz, z in (("floor", -1.0, 0.0), ("lid", 1.0, depth)):
            cells.append(all_nodes)
            normals.append(np.tile([0.0, 0.0, nz], (self.n, 1)))
            areas.append(np.full(self.n, self.h ** 2))
            labels.append(np.full(self.n, label, dtype=object))
            points.append(np.column_stack([self.x, self.y, np.full(self.n, z)]))
        return Boundary(np.concatenate(cells), np.concatenate(normals),
                        np.concatenate(areas), np.concatenate(labels),
                        np.concatenate(points))

    def field_grid(self, ez: np.ndarray, h_xy: tuple[np.ndarray, np.ndarray],
                   boundary: Boundary | None = None) -> FieldGrid:
        n = self.n
        e = np.zeros((n, 3), dtype=complex)
        e[:, 2] = ez
        hf = np.zeros((n, 3), dtype=complex)
        hf[:, 0], hf[:, 1] = h_xy
        return FieldGrid(
            spacing=self.h, dimensionality=2,
            points=np.column_stack([self.x, self.y, np.zeros(n)]),
            e_field=e, h_field=hf, cell_measure=np.full(n, self.h ** 2),
            region_id=np.full(n, REGION, dtype=object),
            region_permittivity={REGION: self.geometry.effective_permittivity},
            boundary=self.boundary() if boundary is None else boundary,
            depth=self.geometry.height)


def _frequency(eigenvalue: float, eps_eff: float) -> float:
    return C_LIGHT * math.sqrt(eigenvalue / eps_eff) / (2 * math.pi)


def _canonical_basis(vectors: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Deterministic basis for a degenerate eigenspace.

    The basis diagonalizes the first low-order moment matrix ``V^T diag(w) V``
    (w running over monomials in x, y) whose eigenvalues are distinct.
    """
    g = vectors.shape[1]
    scale = max(np.max(np.abs(x)), np.max(np.abs(y)))
    u, v = x / scale, y / scale
    for w in (u, v, u * u, u * v, u ** 3, u * u * v, u ** 4, u ** 3 * v):
        M = vectors.T @ (w[:, None] * vectors)
        vals, rot = np.linalg.eigh(0.5 * (M + M.T))
        if g == 1 or np.min(np.diff(vals)) > 1e-8 * max(1.0, np.max(np.abs(vals))):
            return vectors @ rot
    return vectors


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0 else vec


def solve_modes(geometry: CavityGeometry, config: SolverConfig) -> ModeSpectrum:
    """Lowest TM box modes (nearest ``config.shift``) normalized to 1 J."""
    disc = Discretization(geometry, config.grid_spacing)
    eps = geometry.effective_permittivity
    k = config.num_modes
    if k >= disc.n - 1:
        raise ValidationError(f"requested {k} modes from a grid of {disc.n} nodes")
    A = disc.laplacian()
    sigma = (2 * math.pi * config.shift / C_LIGHT) ** 2 * eps
    v0 = np.ones(disc.n) + 1e-3 * np.cos(np.arange(disc.n))
    log.info("solving %d modes on %d nodes (eps_eff=%.4f)", k, disc.n, eps)
    try:
        vals, vecs = spla.eigsh(A, k=k, sigma=sigma, which="LM", v0=v0,
                                tol=config.tolerance, maxiter=config.max_iterations)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"eigensolver converged {len(exc.eigenvalues)} of {k} modes "
            f"within max_iterations={config.max_iterations}") from None
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    if np.any(vals <= 0):
        raise ConvergenceError("non-positive eigenvalue returned")

    groups = []
    start = 0
    group_tol = 10 * config.tolerance
    for i in range(1, k + 1):
        if i == k or (vals[i] - vals[start]) > group_tol * vals[start]:
            groups.append(tuple(range(start, i)))
            start = i
    for grp in groups:
        if len(grp) > 1:
            vecs[:, list(grp)] = _canonical_basis(vecs[:, list(grp)], disc.x, disc.y)

    boundary = disc.boundary()
    modes = []
    group_of = {i: (gi, grp) for gi, grp in enumerate(groups) for i in grp}
    for i in range(k):
        psi = _fix_sign(vecs[:, i])
        f = _frequency(vals[i], eps)
        omega = 2 * math.pi * f
        gx, gy = disc.gradient(psi)
        h_xy = (1j / (omega * MU0) * gy, -1j / (omega * MU0) * gx)
        label = f"TM mode {i + 1}"
        gi, grp = group_of[i]
        if len(grp) > 1:
            label += f" (degenerate group {gi + 1}, {grp.index(i) + 1}/{len(grp)})"
        grid = disc.field_grid(psi, h_xy, boundary)
        modes.append(normalize_energy(ModeSolution(f, grid, None, label), 1.0))
    multi = tuple(g for g in groups if len(g) > 1)
    return ModeSpectrum(tuple(modes), geometry, config, multi)


def tm010_field(geometry: CavityGeometry, spacing: float, energy: float = 1.0) -> ModeSolution:
    """Analytic TM010 pillbox mode sampled on the solver grid (bare disc only)."""
    if geometry.pillars:
        raise ValidationError("the analytic TM010 mode exists only without pillars")
    disc = Discretization(geometry, spacing)
    eps = geometry.effective_permittivity
    kappa = jn_zeros(0, 1)[0] / geometry.radius
    f = C_LIGHT * kappa / (2 * math.pi * math.sqrt(eps))
    omega = 2 * math.pi * f
    r = np.hypot(disc.x, disc.y)
    ez = j0(kappa * r)
    hphi = 1j * kappa / (omega * MU0) * j1(kappa * r)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(r > 0, disc.x / r, 1.0)
        s = np.where(r > 0, disc.y / r, 0.0)
    grid = disc.field_grid(ez, (-hphi * s, hphi * c))
    return normalize_energy(ModeSolution(f, grid, None, "TM010 (analytic)"), energy)


# --- reporting --------------------------------------------------------------

@dataclass(frozen=True)
class Band:
    low: float
    high: float
    label: str


@dataclass(frozen=True)
class ModeRow:
    index: int
    frequency: float
    label: str
    bands: tuple[str, ...] = ()


@dataclass(frozen=True)
class ModeReport:
    rows: tuple[ModeRow, ...]
    bands: tuple[Band, ...]
    collisions: tuple[tuple[int, str], ...]
    fundamental: float
    clearance: float | None
    validity_ceiling: float
    above_ceiling: tuple[int, ...] = field(default=())
    groups: tuple[tuple[int, ...], ...] = ()


def parse_bands(spec: str) -> list[Band]:
    """Parse ``"qubit:4e9-6e9,readout:9.5e9-10.5e9"`` (Hz)."""
    bands = []
    for k, item in enumerate(s for s in spec.split(",") if s.strip()):
        label, sep, rng = item.partition(":")
        if not sep:
            label, rng = f"band{k + 1}", item
        lo, _, hi = rng.partition("-")
        try:
            bands.append(Band(float(lo), float(hi), label.strip()))
        except ValueError:
            raise ValidationError(f"bad band specification {item!r}") from None
    return bands


def mode_report(spectrum: ModeSpectrum, bands: Sequence[Band] = ()) -> ModeReport:
    """Flag modes inside the declared frequency bands."""
    if not spectrum.modes:
        raise QpackError("empty spectrum")
    bands = tuple(Band(*b) if not isinstance(b, Band) else b for b in bands)
    for b in bands:
        if not b.low < b.high:
            raise ValidationError(f"band {b.label!r}: low must be < high")
    ordered = sorted(bands, key=lambda b: b.low)
    for b1, b2 in zip(ordered, ordered[1:]):
        if b2.low < b1.high:
            raise ValidationError(f"bands {b1.label!r} and {b2.label!r} overlap")
    rows, collisions = [], []
    for i, m in enumerate(spectrum.modes):
        hit = tuple(b.label for b in bands if b.low <= m.frequency <= b.high)
        collisions += [(i, lab) for lab in hit]
        rows.append(ModeRow(i, m.frequency, m.label, hit))
    fundamental = spectrum.modes[0].frequency
    clearance = fundamental - max(b.high for b in bands) if bands else None
    ceiling = C_LIGHT / (2 * spectrum.geometry.height)
    above = tuple(i for i, m in enumerate(spectrum.modes) if m.frequency >= ceiling)
    return ModeReport(tuple(rows), bands, tuple(collisions), fundamental,
                      clearance, ceiling, above, spectrum.groups)


def export_mode_field(mode: ModeSolution, path: str | Path) -> None:
    """Write a normalized mode in the field-grid interchange format."""
    if mode.stored_energy is None:
        raise ValidationError(f"{mode.label or 'mode'} is not normalized")
    energy = field_energy(mode.field)
    if not math.isclose(energy, mode.stored_energy, rel_tol=1e-9):
        raise ValidationError(
            f"{mode.label or 'mode'} holds {energy:.6g} J, not the declared "
            f"{mode.stored_energy:.6g} J")
    write_field_grid(mode.field, path)


def spectrum_table(spectrum: ModeSpectrum, bands: Iterable[Band] = ()) -> list[dict]:
    report = mode_report(spectrum, list(bands))
    return [{"index": r.index + 1, "frequency_hz": r.frequency, "label": r.label,
             "bands": ";".join(r.bands)} for r in report.rows]
