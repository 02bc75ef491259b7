"""Tests for gssc.codec."""
