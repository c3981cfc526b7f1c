"""Exception hierarchy shared by every module."""


class TranslatorError(Exception):
    pass


class InvalidInputError(TranslatorError, ValueError):
    pass


class NotSpacelikeError(TranslatorError):
    """The induced metric failed the positive-definiteness test.

    ``lambda_min`` is the smallest eigenvalue found and ``location`` the
    batch index (or grid node) where it occurred, if known.
    """

    def __init__(self, lambda_min, location=None, message=None):
        self.lambda_min = float(lambda_min)
        self.location = location
        if message is None:
            message = f"induced metric not spacelike: lambda_min={self.lambda_min:.6g}"
            if location is not None:
                message += f" at {location}"
        super().__init__(message)


class DegenerateSolutionError(TranslatorError):
    pass


class BoundaryProximityError(InvalidInputError):
    pass


class ExpressionError(TranslatorError):
    pass


class ParseError(ExpressionError):
    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(ExpressionError):
    def __init__(self, message, subexpression=None):
        self.subexpression = subexpression
        if subexpression is not None:
            message = f"{message} in '{subexpression}'"
        super().__init__(message)


class ConfigError(TranslatorError):
    pass
