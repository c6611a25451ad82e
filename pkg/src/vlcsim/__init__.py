"""Link-level simulator of a low-cost visible-light communication stack."""

__version__ = "0.1.0"
