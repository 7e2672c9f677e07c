class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``field`` names the offending key path (e.g. ``scenarios[2].L``) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ReplicationError(RuntimeError):
    """A single replication failed inside a parallel run."""

    def __init__(self, replication, seed, cause):
        self.replication = replication
        self.seed = seed
        self.cause = cause
        super().__init__(f"replication j={replication} (seed={seed}) failed: {cause!r}")
