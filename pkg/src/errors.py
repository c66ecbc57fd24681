"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class DegenerateFitError(ValueError):
    """A Gaussian fit whose covariance cannot be inverted."""


class UndefinedCorrelationError(ValueError):
    """Correlation requested on inputs with zero variance or too few pairs."""


class MissingCheckpointError(FileNotFoundError):
    """A required checkpoint is absent and training was not requested."""


class ManifestError(RuntimeError):
    """Run outputs are missing a manifest or fail checksum verification."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Non-finite training loss {loss} at step {step}")
