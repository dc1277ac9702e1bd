"""Exception hierarchy. Everything derives from ValueError so callers that
only care about bad input can catch that."""


class RawForgeError(ValueError):
    pass


class CalibrationError(RawForgeError):
    """Invalid or degenerate camera calibration data."""


class DngError(RawForgeError):
    """Malformed or incomplete TIFF/DNG metadata."""


class ProfileSchemaError(RawForgeError):
    """JSON camera profile does not match the schema."""


class StageError(RawForgeError):
    """An image was handed to a stage that does not accept its color state."""
