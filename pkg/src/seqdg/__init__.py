"""Multi-level feature alignment for domain-generalizable sequence-to-sequence classification."""

__version__ = "0.1.0"
