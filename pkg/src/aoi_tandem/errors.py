"""Exception hierarchy shared across the package."""


class AoiError(Exception):
    """Base class for all errors raised by this package."""


# --- model construction / validation ---------------------------------------

class InvalidParams(AoiError):
    """System parameters violate their constraints (rates, signs, ...)."""


class NonBinaryReset(AoiError):
    """A reset map contains entries other than 0 and 1, or is not square."""


class RateNotPositive(AoiError):
    """A transition carries a rate <= 0."""


class IndexOutOfRange(AoiError):
    """A transition endpoint or component index is outside the model."""


class ReducibleChain(AoiError):
    """The transition graph has no unique recurrent class (or an absorbing
    state), so no unique stationary distribution exists."""


# --- linear-system engine ----------------------------------------------------

class SingularSystem(AoiError):
    """A dense solve failed or left an unacceptable residual."""


class NegativeSolution(AoiError):
    """The first-moment system has no non-negative solution; the model is
    not admissible for age analysis."""


class DomainExceeded(AoiError):
    """The requested exponent s lies at or beyond the MGF's domain bound."""


# --- closed-form evaluators --------------------------------------------------

class PoleProximity(AoiError):
    """A closed-form denominator is too close to zero to evaluate."""


# --- simulator ----------------------------------------------------------------

class InvalidConfig(AoiError):
    """Simulation configuration violates its constraints."""


class InfeasibleEvent(AoiError):
    """An event was applied in a state where it cannot occur."""


class MismatchedConfig(AoiError):
    """Replication accumulators built from different configurations."""
