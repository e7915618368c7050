"""Artifact storage: binary containers and report files."""
