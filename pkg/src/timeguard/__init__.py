"""Time-based validation of GNSS time against local and network references."""

from .timebase import Rng, SimClock, TimeOffset, TimePoint, advance, gauss

__version__ = "0.1.0"

__all__ = ["Rng", "SimClock", "TimeOffset", "TimePoint", "__version__", "advance", "gauss"]
