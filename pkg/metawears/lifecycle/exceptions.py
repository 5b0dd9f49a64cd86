class MetaWearsException(Exception):
    """
    Base for every error raised by the lifecycle. `exit_code` is the process exit status used by the
    management commands: 1 usage/config, 2 data/format, 3 numerical failure
    """
    exit_code = 1


class ConfigurationError(MetaWearsException):
    exit_code = 1


class InputError(MetaWearsException):
    exit_code = 2


class ShapeError(InputError):
    pass


class DegenerateInputError(InputError):
    pass


class DataFormatError(MetaWearsException):
    exit_code = 2


class UnsupportedVersionError(DataFormatError):
    pass


class SamplingError(MetaWearsException):
    exit_code = 2


class ProtocolError(MetaWearsException):
    exit_code = 2


class NumericalError(MetaWearsException):
    exit_code = 3
