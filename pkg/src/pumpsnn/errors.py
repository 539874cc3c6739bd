"""Exception types shared across the pipeline."""


class PumpError(Exception):
    """Base class for every error raised by this package."""


class EmptyCorpus(PumpError):
    pass


class SingleClassData(PumpError):
    pass


class AmbiguousEvent(PumpError):
    """A session contains more than one distinct released target symbol."""

    def __init__(self, channel_id, symbols):
        self.channel_id = channel_id
        self.symbols = sorted(symbols)
        super().__init__(f"channel {channel_id!r}: ambiguous targets {self.symbols}")


class MalformedRow(PumpError):
    def __init__(self, line, reason):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class NonMonotonicTime(PumpError):
    pass


class MissingData(PumpError):
    pass


class TargetNotListed(PumpError):
    pass


class EmptySplit(PumpError):
    pass


class IdOutOfRange(PumpError):
    pass


class Divergence(PumpError):
    pass


class UnknownSymbol(PumpError, KeyError):
    pass


class InfeasibleConfig(PumpError):
    pass


class LeakageError(PumpError):
    """A history sequence references an event at or after its own sample."""
