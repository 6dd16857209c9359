"""Exception types shared across the package."""


class RegularityError(ValueError):
    """A kernel derivative of the required order is not available."""


class SingularPointError(ValueError):
    """Evaluation point coincides with an atom and the kernel slope at 0 is nonzero."""


class InfeasibleMassError(ValueError):
    """Requested mass cannot be represented on the given cells."""


class ZeroMassError(ValueError):
    """Operation requires a measure with positive total mass."""


class HypothesisError(RuntimeError):
    """A structural hypothesis required by the operation failed its certificate."""


class SearchHorizonError(RuntimeError):
    """A radius search exhausted its horizon without satisfying the defining inequality."""


class ConfigError(ValueError):
    """Experiment configuration is malformed."""
