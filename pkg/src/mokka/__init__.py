"""Log-less BFT leader election with cryptographic proof-of-voting,
plus a deterministic network simulator for attacking it."""

__version__ = "0.1.0"
