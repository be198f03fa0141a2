"""Exception types raised across the package."""


class MobilisimError(Exception):
    """Base class for every error raised by this package."""


# -- math -------------------------------------------------------------------

class ZeroAxis(MobilisimError):
    """Axis vector has (near-)zero norm."""


class ZeroVector(MobilisimError):
    """Vector argument must be nonzero."""


class NonUnitAxis(MobilisimError):
    """Axis argument must be unit-norm."""


# -- asset ------------------------------------------------------------------

class ParseError(MobilisimError):
    """Input document is not well-formed."""


class ValidationError(MobilisimError):
    """Document parsed but violates a structural invariant."""


class UnsupportedElement(MobilisimError):
    """Document uses a feature outside the supported subset."""


class UnknownJoint(MobilisimError):
    """Named joint does not exist in the articulation."""


class UnknownLink(MobilisimError):
    """Named link does not exist in the articulation."""


class ConflictingLimits(MobilisimError):
    """Lower limit exceeds upper limit."""


class InvalidConfig(MobilisimError):
    """Generator or task configuration is out of range."""


# -- kinematics / dynamics --------------------------------------------------

class DimensionMismatch(MobilisimError):
    """Vector length does not match the articulation's degree-of-freedom count."""


class NoConvergence(MobilisimError):
    """Iterative solver failed to reach tolerance; carries the best residual."""

    def __init__(self, message: str, pos_residual: float = float("nan"),
                 rot_residual: float = float("nan")):
        super().__init__(message)
        self.pos_residual = pos_residual
        self.rot_residual = rot_residual


class SingularInertia(MobilisimError):
    """Articulated-inertia factorization hit a non-physical singularity."""


class WrongMode(MobilisimError):
    """Operation not valid for the articulation's current mode."""


# -- control ----------------------------------------------------------------

class TargetShapeMismatch(MobilisimError):
    """Controller target does not match the controller's mode or joint count."""


class NoTrajectoryLoaded(MobilisimError):
    """Trajectory controller queried before any trajectory was loaded."""


class EmptyTrajectory(MobilisimError):
    """Trajectory must contain at least one point."""


class NonMonotoneTime(MobilisimError):
    """Trajectory point times must strictly increase."""


# -- sensors ----------------------------------------------------------------

class EmptyFrame(MobilisimError):
    """Frame has no foreground pixels to lift."""


# -- metrics ----------------------------------------------------------------

class BatchMismatch(MobilisimError):
    """Prediction and ground-truth batches have different lengths."""


class ZeroRange(MobilisimError):
    """Normalization range is zero."""


# -- server / protocol ------------------------------------------------------

class BindError(MobilisimError):
    """Server could not bind the requested address."""


class FrameTooLarge(MobilisimError):
    """Wire frame exceeds the 64 MiB limit."""


class MalformedFrame(MobilisimError):
    """Wire frame bytes could not be decoded."""


class UnknownType(MobilisimError):
    """Wire message type is not part of the protocol."""


class NoSamples(MobilisimError):
    """Clock-sync estimate requires at least one sample."""
