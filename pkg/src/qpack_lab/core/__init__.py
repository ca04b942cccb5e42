"""Shared domain types: geometry, materials, sampled fields."""

from .fieldgrid import (Boundary, FieldGrid, ModeSolution, field_energy,
                        normalize_energy, read_field_grid, write_field_grid)
from .geometry import CavityGeometry, Pillar, Point2, load_geometry, pillar_lattice
from .materials import MaterialTable, load_material_table

__all__ = [
    "Boundary", "CavityGeometry", "FieldGrid", "MaterialTable", "ModeSolution",
    "Pillar", "Point2", "field_energy", "load_geometry", "load_material_table",
    "normalize_energy", "pillar_lattice", "read_field_grid", "write_field_grid",
]
