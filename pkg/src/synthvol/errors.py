"""Exception taxonomy shared by the library and the CLI.

The CLI maps these onto its exit codes: ConfigError -> 2, InputError -> 3,
ShapeError -> 4, anything else derived from SynthvolError -> 1.
"""


class SynthvolError(Exception):
    """Base class for all errors raised by synthvol."""


class ConfigError(SynthvolError):
    """Invalid configuration value or schema violation (names the field path)."""


class InputError(SynthvolError):
    """Unreadable or malformed input file, or a broken subject directory."""


class FormatError(InputError):
    """Malformed container file; message names the offending field."""


class ShapeError(SynthvolError):
    """Grid or array shape mismatch between volumes that must align."""


class DomainError(SynthvolError):
    """Operation applied outside its mathematical domain (e.g. empty mask)."""
