"""
Exceptions raised while reading descriptor documents.
"""
from typing import Optional


class DescriptorError(ValueError):
    """Base class for descriptor failures."""


class DescriptorSyntaxError(DescriptorError):
    """A document is not well-formed YAML."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None, source: str = "<document>"):
        self.line = line
        self.column = column
        self.source = source
        where = f"{source}:{line}:{column}" if line is not None else source
        super().__init__(f"{where}: {message}")


class SchemaError(DescriptorError):
    """A document parsed but a field is missing, unknown or invalid."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
