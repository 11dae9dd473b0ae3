"""Search-and-rescue trajectory planning for a single UAV over cuboid maps."""

__version__ = "0.1.0"
