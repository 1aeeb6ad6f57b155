"""Figure scripts for the ramimo bound CSVs.

Reads the frozen CSV schema produced by the `ramimo` CLI and renders
paper-style curves (energy-per-bit vs user counts, spectral efficiency vs
antennas) as vector images.  Pure plotting: no bound is ever recomputed.
"""

__version__ = "0.1.0"

from .plot import CurveSpec, load_curve, plot_curves  # noqa: F401
