"""Link-level simulator of closed-loop bistatic ISAC with multi-hypothesis sensing feedback."""

__version__ = "0.1.0"
