class TimeGNNError(Exception):
    """Base class for every error raised by the engine."""


class ShapeError(TimeGNNError, ValueError):
    def __init__(self, op, dim, expected, actual):
        self.op = op
        self.dim = dim
        self.expected = expected
        self.actual = actual
        super().__init__(f'{op}: {dim} expected {expected}, got {actual}')


class DataError(TimeGNNError, ValueError):
    pass


class ConfigError(TimeGNNError, ValueError):
    pass


class TrainingError(TimeGNNError, RuntimeError):
    pass


class CheckpointError(TimeGNNError, ValueError):
    pass
