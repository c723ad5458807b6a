"""Exception types shared across the package."""


class GeometryError(Exception):
    """Raised when a cell specification cannot be meshed as requested."""


class SingularSystem(Exception):
    """A linear solve hit a (numerically) singular factorization."""


class NotSPD(Exception):
    """A Gram matrix failed its Cholesky factorization."""


class EigSolverFailure(Exception):
    """The dense eigensolver did not converge."""


class DegenerateEigenvalue(Exception):
    """First Steklov eigenvalue is not numerically separated from the second."""


class BlockSingular(Exception):
    """A block of the decomposed boundary operator is singular."""


class BracketSingular(Exception):
    """The rank-two bracket of the homogenized resolvent is singular."""


class DenominatorVanishes(Exception):
    """A dispersion-function denominator fell below the configured floor."""


class DegenerateFit(Exception):
    """Slope fit requested on degenerate abscissae."""


class ConfigError(Exception):
    """An experiment configuration violates its contract."""
