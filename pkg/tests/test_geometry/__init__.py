"""Tests for gssc.geometry."""
