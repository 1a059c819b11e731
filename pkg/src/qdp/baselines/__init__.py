"""Exact and sampling baselines for the pricing model."""
