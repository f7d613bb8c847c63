"""Accountable blind-signature coin mixing over a simulated block ledger."""

__version__ = "0.1.0"
