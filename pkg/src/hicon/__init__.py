"""hicon: a numerical laboratory for boundary-triple homogenization of a
stiff-soft-stiff period cell.

The package builds quasimomentum fibre operators for a two-dimensional unit
cell with a high-contrast three-component microstructure, realizes the
associated boundary triple (Dirichlet decoupling, harmonic lift,
Dirichlet-to-Neumann family), evaluates resolvents through Krein's formula,
assembles the rank-two homogenized resolvent, and samples the dispersion
functions of the two stiff components.
"""

__version__ = "0.1.0"

from .errors import (
    BlockSingular,
    ConfigError,
    BracketSingular,
    DegenerateEigenvalue,
    DegenerateFit,
    DenominatorVanishes,
    EigSolverFailure,
    GeometryError,
    NotSPD,
    SingularSystem,
)
from .geometry import CellSpec, PeriodCellMesh, build_period_cell, trace_space
from .fem_assembly import FibreContext
