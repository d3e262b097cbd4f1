"""Exception types shared across the package."""


class LfiError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveDefinite(LfiError):
    """A precision difference needed by a mixture division is not positive definite."""

    def __init__(self, component, message=None):
        self.component = component
        super().__init__(
            message
            or f"component {component}: precision difference is not positive definite; "
            "the proposal is narrower than this component"
        )


class DegenerateSample(LfiError):
    """A weighted sample set cannot support a Gaussian fit."""


class EmFailure(LfiError):
    """Expectation-maximization kept producing empty components."""


class TrainingDiverged(LfiError):
    """A non-finite loss appeared during training."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite objective at epoch {epoch}")


class BudgetExhausted(LfiError):
    """An ABC run hit its simulation cap."""

    def __init__(self, n_accepted, n_simulations):
        self.n_accepted = n_accepted
        self.n_simulations = n_simulations
        super().__init__(
            f"simulation budget exhausted after {n_simulations} calls "
            f"with {n_accepted} acceptances"
        )


class DegenerateChain(LfiError):
    """A chain has a zero-variance dimension."""


class SimulationExploded(LfiError):
    """A jump-process simulation exceeded its event cap."""


class PilotDegenerate(LfiError):
    """Pilot statistics cannot be used for normalization."""


class ConfigError(LfiError):
    """An experiment configuration failed validation."""
