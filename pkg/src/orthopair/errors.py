"""Exception hierarchy shared across the package."""


class OrthoPairError(Exception):
    """Base class for all errors raised by orthopair."""


class InvalidTokenError(OrthoPairError, ValueError):
    pass


class EmptyCorpusError(OrthoPairError, ValueError):
    pass


class DegenerateLatticeError(OrthoPairError, ArithmeticError):
    """The lattice assigns zero mass to every path from start to end."""


class CorpusFormatError(OrthoPairError, ValueError):
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


class EmptyFileError(CorpusFormatError):
    pass


class MissingColumnsError(CorpusFormatError):
    pass


class UndecodableError(CorpusFormatError):
    pass


class ModelFileError(OrthoPairError):
    pass


class ModelVersionError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass


class AlphabetMismatchError(ModelFileError):
    pass


class LexiconTooSmallError(OrthoPairError, ValueError):
    def __init__(self, variant, available, requested):
        self.variant = variant
        super().__init__(
            f"lexicon has only {available} eligible candidates for variant "
            f"{variant!r}, {requested} requested"
        )


class NoPositivesError(OrthoPairError, ValueError):
    pass


class TrainingDivergedError(OrthoPairError, ArithmeticError):
    def __init__(self, message, snapshot=None):
        self.snapshot = snapshot or {}
        super().__init__(message)
