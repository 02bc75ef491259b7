"""Tests for gssc.pipeline."""
