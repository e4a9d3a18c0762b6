"""Eye blink and gaze editing toolkit built on a procedural eye world."""

__version__ = "0.1.0"
