"""Exception hierarchy shared by all flashfx modules."""


class FlashFxError(Exception):
    """Base class for every error raised by flashfx."""


class MalformedRecord(FlashFxError):
    """A tape line has the wrong arity or an unparseable field."""


class DomainError(FlashFxError):
    """A tape field parsed but violates its value domain."""


class UnsortedInput(FlashFxError):
    """An input file is not ordered by timestamp."""

    def __init__(self, path, line_no, ts, prev_ts):
        super().__init__(f"{path}:{line_no}: timestamp {ts} precedes {prev_ts}")
        self.path = path
        self.line_no = line_no


class RejectRateExceeded(FlashFxError):
    pass


class StaleQuote(FlashFxError):
    pass


class NoHistory(FlashFxError):
    """No usable NBBO snapshot in the requested window."""


class InsufficientQuoteHistory(FlashFxError):
    pass


class MissingSide(FlashFxError):
    pass


class EmptyWindow(FlashFxError):
    pass


class EmptyInput(FlashFxError):
    pass


class Separation(FlashFxError):
    """Logit likelihood has no finite maximum (separable labels)."""


class Singular(FlashFxError):
    pass


class EmptyBook(FlashFxError):
    pass


class InvalidSpec(FlashFxError):
    pass
