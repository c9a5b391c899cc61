"""Error types shared across the package.

Every operation that can refuse an input does so with one of these, so CLI
and tests can route on the class name.
"""


class PadicKernelError(Exception):
    """Base class for all package errors."""


class InsufficientPrecision(PadicKernelError):
    """A p-adic element does not carry enough digits for the request."""


class EvenResidualChar(PadicKernelError):
    """p = 2 is outside the scope of every construction here."""


class ZeroDivisor(PadicKernelError):
    """Inversion hit a zero divisor in Q(zeta_M)[sqrt(q)] (sqrt(q) collision)."""


class SingularPoint(PadicKernelError):
    """Evaluation at a singular center (c = +-2 or a declared pole)."""


class DivergentTail(PadicKernelError):
    """A geometric tail violates its summability bound."""


class WindowOverflow(PadicKernelError):
    """Requested data lies outside the certified window of a truncated function."""


class DepthOverflow(PadicKernelError):
    """A character or table is deeper than the available resolution."""


class DepthMismatch(PadicKernelError):
    """Torus functions of different depths cannot be combined."""


class SplitInput(PadicKernelError):
    """Operation defined only for nonsplit quadratic algebras."""


class SplitForV(PadicKernelError):
    """The inverse-volume function needs an elliptic label."""


class NotTauInvariant(PadicKernelError):
    """Torus function is not invariant under the Galois flip."""


class UnramifiedInput(PadicKernelError):
    """Gauss sums need a ramified character."""


class NonGeometricTail(PadicKernelError):
    """Mellin closure needs geometric radial behavior."""


class NonvanishingAtZero(PadicKernelError):
    """LafSec/descent preconditions require the Fourier inversion to vanish at 0."""


class PoleAtOne(PadicKernelError):
    """The s-regularized family has a pole at s = 1 (bug signal for regular input)."""


class CompatibilityViolation(PadicKernelError):
    """Descent data fails the total-transfer compatibility conditions."""


class NotStabilized(PadicKernelError):
    """A stably convergent limit did not settle within the configured range."""


class NonConvexCone(PadicKernelError):
    """Weight data fails the strictly convex cone requirement."""


class ResourceLimit(PadicKernelError):
    """Enumeration exceeds the configured desk-scale caps."""


class BadParams(PadicKernelError):
    """Parameters invalid for the requested basis element or descriptor."""
