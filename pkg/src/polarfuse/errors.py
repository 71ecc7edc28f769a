"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor/array arguments have incompatible shapes."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class BehindCameraError(ValueError):
    """Point has non-positive depth in the camera frame."""


class GenerationError(RuntimeError):
    """Synthetic scene generation could not satisfy its constraints."""


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite; diagnostics were dumped."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path
