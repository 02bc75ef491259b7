"""Tests for gssc.tensor."""
