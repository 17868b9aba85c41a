"""Application entry points (CLI)."""
