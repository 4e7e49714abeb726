"""Exception types shared across the package."""


class VortexLabError(Exception):
    """Base class for all package errors."""


# --- symplectic path algebra ---

class NondegeneracyViolation(VortexLabError):
    """A path endpoint has eigenvalue 1 (det(A(1) - I) below tolerance)."""


class RefinementDiverged(VortexLabError):
    """Adaptive sample refinement failed to reach agreement."""


class NotALoop(VortexLabError):
    """Endpoints of an alleged loop differ beyond tolerance."""


class DimensionMismatch(VortexLabError):
    """Operands have incompatible dimensions."""


class SymmetryViolation(VortexLabError):
    """A matrix required to be symmetric is not."""


# --- Novikov coefficients ---

class LatticeMismatch(VortexLabError):
    """Operands live over different coefficient lattices or base rings."""


class InvalidTarget(VortexLabError):
    """A toric target failed basic validity checks."""


# --- toric targets / action functional ---

class QuadratureDiverged(VortexLabError):
    """Quadrature refinement failed to stabilize."""


class HypothesisFailed(VortexLabError):
    """A standing hypothesis check failed; the message names the clause."""

    def __init__(self, clause, detail=""):
        self.clause = clause
        super().__init__(f"hypothesis check failed: {clause}" + (f" ({detail})" if detail else ""))


# --- critical loops ---

class SeedNotConverged(VortexLabError):
    """A single Newton seed failed to converge (reported, not fatal)."""


class DegenerateOrbit(VortexLabError):
    """A critical loop has (numerically) degenerate Hessian."""


class ResidualTooLarge(VortexLabError):
    """Input loop does not satisfy the residual tolerance."""


class HardCaseUnsupported(VortexLabError):
    """Perturbed lift construction outside the supported regime."""


class EigensolverFailed(VortexLabError):
    """Sparse eigensolver did not converge."""


# --- cylinder flow ---

class TailTooShort(VortexLabError):
    """Not enough axial samples (or signal) in a cylinder tail to fit decay."""


class EmptyCensus(VortexLabError):
    """A census operation received no usable orbits."""


class BoundMonitorTripped(VortexLabError):
    """A solve left the a-priori compact region."""


# --- chain complexes ---

class CensusIncomplete(VortexLabError):
    """Boundary assembly aborted: an unresolved solve makes counts unreliable."""


class TruncationAmbiguous(VortexLabError):
    """A zero-test is inconclusive because only truncated terms remain."""


# --- Morse oracle ---

class NonConvergentFlow(VortexLabError):
    """A gradient flow line did not settle within the time horizon."""


class DegenerateCritical(VortexLabError):
    """A critical point has a (numerically) singular Hessian."""


# --- CLI ---

class ConfigInvalid(VortexLabError):
    """Scenario configuration failed validation."""


class PipelineFailed(VortexLabError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage, detail=""):
        self.stage = stage
        super().__init__(f"pipeline stage '{stage}' failed" + (f": {detail}" if detail else ""))
