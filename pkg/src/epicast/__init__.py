"""Epidemic series forecasting with transferred, recursively applied GRU ensembles."""
