"""Test package for the source separation toolkit."""
