"""solderlab: verification engine for solder-form puzzles on a single chart."""

__version__ = "0.1.0"
