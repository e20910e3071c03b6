"""Urban region function recognition from user visit logs and region images."""

__version__ = "0.1.0"
