"""Exception types raised across the decaking simulator."""


class DecakeError(Exception):
    """Base class for all simulator errors."""


class InvalidPolygon(DecakeError):
    """Polygon is degenerate: fewer than 3 vertices, collinear, self-intersecting,
    or wound clockwise."""


class SceneOverflow(DecakeError):
    """The bin cannot hold the requested number of parts, even stacked."""


class NoSuchPart(DecakeError):
    """Part id not present in the scene."""


class SensorBusy(DecakeError):
    """Detection requested while the IR strobe is on (2D capture blocked)."""


class ContactFault(DecakeError):
    """Guarded descent hit a laterally obstructed point (no surface defined)."""


class ContactLost(DecakeError):
    """Force tracking lost contact with the surface for longer than the dwell."""


class InvalidQuery(DecakeError):
    """Planner start or goal is in collision."""


class Unreachable(DecakeError):
    """Planner exhausted its iteration budget without connecting the trees."""


class NotFlippable(DecakeError):
    """Part is too tall relative to its footprint for the passive flipper."""


class ConfigError(DecakeError):
    """Malformed configuration file or unknown configuration key."""
