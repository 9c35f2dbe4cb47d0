"""Bid-ask spread estimation from transaction prices under serial dependence."""

__version__ = "0.1.0"
