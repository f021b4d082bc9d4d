class CliError(Exception):
    """Base exception for command-line errors."""
    pass


class ConfigFileError(CliError):
    """Exception raised for unreadable or malformed key=value config files."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
