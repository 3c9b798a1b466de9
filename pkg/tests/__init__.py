"""Tests for hyperbolic-plateau package."""
