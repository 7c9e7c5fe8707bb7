"""Forecasting agents built from auditable prompt chains, with scoring tools."""

__version__ = "0.1.0"
