"""Exact finite-space checks of domain-invariant representation bounds, plus a small adversarial training harness."""

__version__ = "0.1.0"
