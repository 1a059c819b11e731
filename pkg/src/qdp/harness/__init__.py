"""Configs, experiment designs, CSV and figure output, and the command line."""
