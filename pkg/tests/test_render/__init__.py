"""Tests for gssc.render."""
