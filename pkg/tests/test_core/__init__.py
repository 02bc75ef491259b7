"""Errors, logging and dataset store tests."""
