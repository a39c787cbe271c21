"""Exception hierarchy shared across the package."""


class TractShapeError(Exception):
    """Base class for all data and validation errors raised by tractshape."""


class TrackFormatError(TractShapeError, ValueError):
    pass


class MalformedHeaderError(TrackFormatError):
    pass


class UnsupportedFormatError(TrackFormatError):
    pass


class TruncatedDataError(TrackFormatError):
    pass


class CorruptDataError(TrackFormatError):
    pass


class InvalidInputError(TractShapeError, ValueError):
    pass


class AlignmentError(TractShapeError, ValueError):
    """Scalar values do not line up with streamline geometry."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class MissingChannelError(TractShapeError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CsvFormatError(TractShapeError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NormalizationError(TractShapeError, ValueError):
    pass


class DivergenceError(TractShapeError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(TractShapeError, ValueError):
    pass


class StatisticsError(TractShapeError, ValueError):
    pass
