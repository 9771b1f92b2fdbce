"""Data generation, experiment runner and command line."""
