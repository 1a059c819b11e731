"""Exact gradient methods for nonlinear MDPs with a queueing/pricing instance."""
__version__ = "0.1.0"
