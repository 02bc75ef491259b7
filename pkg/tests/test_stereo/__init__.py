"""Tests for gssc.stereo."""
