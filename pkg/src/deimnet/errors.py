"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: configuration and IO
problems exit with 2, numerical/training failures with 1.
"""


class DimensionError(ValueError):
    """Incompatible array shapes or an out-of-range dimension request."""


class RankDeficiencyError(ValueError):
    """Requested basis rank exceeds the numerical rank of the data."""

    def __init__(self, requested, achievable):
        self.requested = requested
        self.achievable = achievable
        super().__init__(
            f"requested rank {requested} exceeds numerical rank {achievable} "
            f"of the snapshot matrix"
        )


class DegenerateBasisError(RuntimeError):
    """Greedy index selection hit an identically zero residual."""

    def __init__(self, step):
        self.step = step
        super().__init__(
            f"interpolation residual identically zero at greedy step {step}; "
            f"basis columns are dependent on the selected rows"
        )


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataFormatError(ValueError):
    """External input file is malformed, truncated, or inconsistent."""


class SolverError(RuntimeError):
    """A nonlinear solve failed to converge."""

    def __init__(self, message, residual_history=None):
        self.residual_history = list(residual_history or [])
        super().__init__(message)


class BlowUpError(RuntimeError):
    """Time integration or rollout produced non-finite / diverging values."""

    def __init__(self, message, when=None):
        self.when = when
        super().__init__(message)


class ArtifactError(RuntimeError):
    """Malformed artifact directory or manifest."""


class IntegrityError(ArtifactError):
    """Artifact contents do not match their recorded hashes or provenance."""
