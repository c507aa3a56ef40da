"""Edit-Impact - association-aware ranking of grammatical error correction edits."""

__version__ = "0.1.0"
