"""Power side-channel trace analysis: ingest, featurize, classify, evaluate."""

__version__ = "0.1.0"

UNKNOWN = "UNKNOWN"
