"""Test suite for gssc."""
