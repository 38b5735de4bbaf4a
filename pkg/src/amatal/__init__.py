"""Point-based temporal action localization on chunk features, with evaluation tooling."""

__version__ = "0.1.0"
