"""Exception hierarchy. Each class carries the process exit code the CLI uses."""


class MedflowError(Exception):
    exit_code = 1


class InvalidDomainError(MedflowError):
    exit_code = 10


class IndexMisconfigurationError(MedflowError):
    exit_code = 11


class AdmissibilityError(MedflowError):
    exit_code = 12


class EmptyNeighborhoodError(MedflowError):
    exit_code = 13


class DegenerateWeightsError(MedflowError):
    exit_code = 14


class SolverFailureError(MedflowError):
    exit_code = 15

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedConfigurationError(MedflowError):
    exit_code = 16


class TopologyChangeError(MedflowError):
    exit_code = 17


class NotApplicableError(MedflowError):
    exit_code = 18


class FieldValueError(MedflowError, ValueError):
    exit_code = 19


class ConfigError(MedflowError):
    exit_code = 2

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line
