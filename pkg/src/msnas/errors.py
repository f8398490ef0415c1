"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration document or parameter set violates its schema."""


class GenomeValidationError(ValueError):
    """A genome failed validation against its governing search-space config."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""


class EvolutionError(RuntimeError):
    """The evolutionary search aborted; carries the partial archive."""

    def __init__(self, message, archive=None):
        super().__init__(message)
        self.archive = archive
