"""Numerical toolbox for energy-per-bit limits of massive random access over
MIMO quasi-static Rayleigh fading channels.

Achievability and converse bounds for four receiver settings: CSIR,
no-CSI with known number of active users, no-CSI with a random unknown
number of active users, and a pilot-assisted MMSE scheme.  Plus outer
searches for the minimum power / energy-per-bit meeting per-user error
targets.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BoundResult,
    ErrorTargets,
    KnownKa,
    PowerPoint,
    RandomKa,
    SystemParams,
    eb_db,
    p0_power_violation,
    pprime_grid,
)
from .mc import McConfig, McEstimate  # noqa: F401
