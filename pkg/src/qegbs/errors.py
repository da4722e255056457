"""Exception hierarchy shared across the package."""


class QEGBSError(Exception):
    """Base class for all package errors."""


class UnknownWord(QEGBSError, KeyError):
    """A word has no lexicon entry, is not a vocabulary token, and no UNK is set."""

    def __str__(self):
        return Exception.__str__(self)


class DanglingContinuation(QEGBSError, ValueError):
    """A token sequence ends on a continuation-marked piece."""


class LengthMismatch(QEGBSError, ValueError):
    pass


class MalformedTable(QEGBSError, ValueError):
    pass


class EmptyCorpus(QEGBSError, ValueError):
    pass


class EmptyReference(QEGBSError, ValueError):
    pass


class ConstraintsUnsatisfiable(QEGBSError, ValueError):
    """``max_len`` cannot hold every constraint token plus EOS."""


class DecodeIncomplete(QEGBSError, RuntimeError):
    """No top-level hypothesis survived, not even an unfinished one."""


class SpaceTooLarge(QEGBSError, ValueError):
    pass


class ParseError(QEGBSError, ValueError):
    def __init__(self, line, msg):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class SchemaError(QEGBSError, ValueError):
    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field
