"""Analysis toolkit for wafer-scale superconducting-qubit packages."""

__version__ = "0.1.0"
