"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad key, K mismatch, ...)."""


class NonManifoldError(ValueError):
    """An undirected mesh edge is not shared by exactly two faces."""


class DegenerateGeometryError(ValueError):
    """A face has (numerically) zero area where a normal is required."""


class BehindCameraError(ValueError):
    """A vertex projects at or behind the camera near plane."""


class UndefinedIoUError(ValueError):
    """Both silhouettes are identically zero; IoU has no value."""


class CheckpointFormatError(ValueError):
    """Checkpoint file is malformed, truncated, or has a bad version."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss was produced during training."""

    def __init__(self, iteration: int, parts: dict):
        self.iteration = iteration
        self.parts = parts
        detail = ", ".join(f"{k}={v}" for k, v in parts.items())
        super().__init__(f"non-finite loss at iteration {iteration}: {detail}")
