"""Through-wall people counting from LOS-crossing inter-event times."""

__version__ = "0.1.0"
