"""Edge and face finite elements with two-level overlapping Schwarz preconditioners."""

__version__ = "0.1.0"
