"""Tests for the semantic auction package."""
