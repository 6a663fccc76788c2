"""Exception types shared across the toolkit."""


class SphFsiError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SphFsiError):
    """Invalid configuration: bad JSON schema, unknown names, bad values."""


class MeshError(SphFsiError):
    """Invalid mesh input: degenerate elements, bad file format, bad topology."""


class CouplingProtocolError(SphFsiError):
    """Coupling API called out of order (advance before write, reload without checkpoint, ...)."""


class NumericalFailure(SphFsiError):
    """Non-finite values appeared in the solution state."""
