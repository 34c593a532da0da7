"""Experiment commands and the command-line front end."""
