"""Exception and warning types shared across the package."""


class FracflowError(Exception):
    """Base class for all package errors."""


class ScenarioError(FracflowError):
    """Invalid or malformed scenario input; carries a field/line diagnostic."""


class FractureOnGridLine(FracflowError):
    """A fracture segment lies on a coarse grid face (unsupported limit case)."""


class PathDiscontinuity(FracflowError):
    """The projection-path repair pass could not restore node connectivity."""


class SingularSystem(FracflowError):
    """A pure-Neumann system was assembled without the null-mean constraint."""


class NonConvergence(FracflowError):
    """The linear solver did not reach the target residual."""

    def __init__(self, residual: float, tol: float):
        self.residual = residual
        self.tol = tol
        super().__init__(f"linear solve residual {residual:.3e} exceeds {tol:.3e}")


class ZeroPressureGap(FracflowError):
    """Local-problem extraction hit a vanishing coarse pressure gap."""


class NoPSS(FracflowError):
    """Transient march did not reach a pseudo-steady state within the step cap."""


class MeshTooCoarse(FracflowError):
    """Reference discretization is too coarse relative to the coarse grid."""


class MeshError(FracflowError):
    """Constrained triangulation failed to honor a required edge."""


class DegenerateSegmentWarning(UserWarning):
    """A fracture sub-segment below the length floor was merged into a neighbor."""


class NegativeTransmissibilityWarning(UserWarning):
    """A half-transmissibility came out non-positive (mesh quality problem)."""
