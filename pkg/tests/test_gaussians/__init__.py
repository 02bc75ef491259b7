"""Tests for gssc.gaussians."""
