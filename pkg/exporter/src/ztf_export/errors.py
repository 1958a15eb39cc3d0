"""Error taxonomy for checkpoint export.

Everything raised on purpose derives from ExportError so callers can catch
one type; the subclasses separate unreadable containers from name-mapping
refusals.
"""


class ExportError(Exception):
    """Base class for all export failures."""


class SourceError(ExportError):
    """The source checkpoint cannot be read or violates its container format."""


class MappingError(ExportError):
    """A 2-D weight tensor has no entry in the family's name table."""
