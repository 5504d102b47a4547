"""Exception hierarchy shared by all pipeline stages."""


class CausalPanelError(Exception):
    """Base class for every error raised by this package."""


class ParseError(CausalPanelError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DuplicateKeyError(ParseError):
    pass


class DomainError(ParseError):
    pass


class DegenerateIndicatorError(CausalPanelError):
    def __init__(self, indicator, message=None):
        self.indicator = indicator
        super().__init__(message or f"indicator {indicator!r} has no observed values")


class DegenerateSampleError(CausalPanelError):
    """Sample has zero spread, so the requested statistic is undefined."""


class DegenerateSeriesError(DegenerateSampleError):
    pass


class SampleSizeError(CausalPanelError):
    pass


class CollinearityError(CausalPanelError):
    pass


class UndecidableError(CausalPanelError):
    """A conditional-independence decision could not be made."""


class StabilityError(CausalPanelError):
    pass


class UnknownNodeError(CausalPanelError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class StageMismatchError(CausalPanelError):
    def __init__(self, expected, found, path=None):
        self.expected = expected
        self.found = found
        loc = f" at {path}" if path else ""
        super().__init__(f"expected a {expected!r} artifact{loc}, found {found!r}")
