"""Exception hierarchy. Every error raised by the package derives from QMLPError."""


class QMLPError(Exception):
    pass


class ConfigError(QMLPError, ValueError):
    pass


class CircuitError(QMLPError, ValueError):
    pass


class EncodingError(QMLPError, ValueError):
    pass


class CompilationError(QMLPError, ValueError):
    pass


class ExecutionError(QMLPError, ValueError):
    pass


class DifferentiationError(QMLPError, ValueError):
    pass


class ModelError(QMLPError, ValueError):
    pass


class TrainingError(QMLPError, RuntimeError):
    pass


class DataError(QMLPError, ValueError):
    pass
