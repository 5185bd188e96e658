"""Neural word alignment with contiguity loss, attention optimization and guided training."""

__version__ = "0.1.0"
