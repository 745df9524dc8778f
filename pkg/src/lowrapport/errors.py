"""Exception types raised across the package."""


class RapportError(Exception):
    """Base class for all package errors."""


class CorpusError(RapportError):
    """Problems reading or validating a corpus on disk."""


class MissingFile(CorpusError):
    def __init__(self, paths):
        if isinstance(paths, (str, bytes)) or not hasattr(paths, "__iter__"):
            paths = [paths]
        self.paths = [str(p) for p in paths]
        super().__init__("missing file(s): " + ", ".join(self.paths))


class ParseError(CorpusError):
    def __init__(self, path, line, detail):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {detail}")


class SchemaViolation(CorpusError):
    pass


class MissingModality(CorpusError):
    """A feature set needs a stream the manifest does not provide."""


class UnknownParticipant(RapportError, KeyError):
    pass


class EmptySeries(RapportError, ValueError):
    pass


class Infeasible(RapportError, ValueError):
    pass


class UnknownFeatureSet(RapportError, ValueError):
    pass


class EmptyMatrix(RapportError, ValueError):
    pass


class SingleClass(RapportError, ValueError):
    pass


class NonFinite(RapportError, ValueError):
    pass


class NoPositives(RapportError, ValueError):
    pass


class TooFewSessions(RapportError, ValueError):
    pass


class DegenerateClass(RapportError, ValueError):
    pass


class DegenerateVariance(RapportError, ValueError):
    pass


class InvalidConfig(RapportError, ValueError):
    pass
