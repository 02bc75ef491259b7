"""Tests for gssc.metrics."""
