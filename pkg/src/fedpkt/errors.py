"""Exception hierarchy shared by all fedpkt modules."""


class FedpktError(Exception):
    """Base class for every error raised by fedpkt."""


class ValidationError(FedpktError):
    """Bad configuration or incompatible inputs (CLI exit code 1)."""


class DataError(FedpktError):
    """Malformed or unusable data (CLI exit code 2)."""


class MalformedRecord(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyData(DataError):
    pass


class SingleClass(DataError):
    pass


class TooManyClients(ValidationError):
    pass


class InfeasibleSpec(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class VocabMismatch(ValidationError):
    pass


class ModeMismatch(ValidationError):
    pass


class EmptyUpdateSet(ValidationError):
    pass


class ClientTooSmall(DataError):
    pass


class LengthMismatch(ValidationError):
    pass


class ConfigInvalid(ValidationError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
