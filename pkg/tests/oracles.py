"""Closed-form reference values shared by the loss and acceptance tests."""

import math

import numpy as np

from qpack_lab import loss
from qpack_lab.cavity import tm010_field
from qpack_lab.core.fieldgrid import FieldGrid
from qpack_lab.core.geometry import CavityGeometry
from qpack_lab.units import EPS0, MU0

PILLBOX_RADIUS = 20e-3
PILLBOX_HEIGHT = 2e-3
LAMBDA = 50e-9
OXIDE_T = 3e-9
OXIDE_EPS = 10.0


def pillbox(n: int):
    """Analytic TM010 mode of the vacuum pillbox sampled at spacing a/n."""
    return tm010_field(CavityGeometry(PILLBOX_RADIUS, PILLBOX_HEIGHT), PILLBOX_RADIUS / n)


def conductor_exact(a=PILLBOX_RADIUS, h=PILLBOX_HEIGHT, lam=LAMBDA):
    # all six faces: side wall plus floor and lid
    return 2 * lam * (1 / h + 1 / a)


def floor_oxide_exact(h=PILLBOX_HEIGHT, t=OXIDE_T, eps=OXIDE_EPS):
    return t / (eps * h)


def wall_seam_exact(frequency, a=PILLBOX_RADIUS, h=PILLBOX_HEIGHT):
    return 2 / (2 * math.pi * frequency * MU0 * h * a)


def pillbox_errors(n: int) -> dict[str, float]:
    """Relative error of each participation against its closed form."""
    mode = pillbox(n)
    g = mode.field
    pc = loss.conductor_participation(g, "*", LAMBDA)
    po = loss.surface_dielectric_participation(g, "floor", OXIDE_T, OXIDE_EPS)
    (_, path), = loss.surface_loops(g, "wall")
    y = loss.seam_admittance(g, path, mode.frequency, closed=True)
    return {"conductor": abs(pc / conductor_exact() - 1),
            "surface_oxide": abs(po / floor_oxide_exact() - 1),
            "seam": abs(y / wall_seam_exact(mode.frequency) - 1)}


def slab_grid(n_cells: int, gap: float = 1e-3, fill: float = 0.3, eps: float = 10.0,
              area: float = 1e-4) -> FieldGrid:
    """Parallel-plate gap with a dielectric slab on the floor under uniform D.

    Cells are split between the two regions by their center height, so the
    quadrature is exact when the slab face falls on a cell face.
    """
    dz = gap / n_cells
    z = (np.arange(n_cells) + 0.5) * dz
    in_slab = z < fill * gap
    eps_cell = np.where(in_slab, eps, 1.0)
    e = np.zeros((n_cells, 3), dtype=complex)
    e[:, 2] = 1.0 / (EPS0 * eps_cell)
    return FieldGrid(spacing=dz, dimensionality=3,
                     points=np.column_stack([np.zeros(n_cells), np.zeros(n_cells), z]),
                     e_field=e, h_field=np.zeros((n_cells, 3)),
                     cell_measure=np.full(n_cells, dz * area),
                     region_id=np.where(in_slab, "slab", "vacuum").astype(object),
                     region_permittivity={"slab": eps, "vacuum": 1.0})


def slab_exact(fill: float = 0.3, eps: float = 10.0) -> float:
    return (fill / eps) / (fill / eps + (1 - fill))


def observed_order(errors: list[float], refinement: float = 2.0) -> float:
    return math.log(errors[-2] / errors[-1]) / math.log(refinement)
