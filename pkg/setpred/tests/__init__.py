"""Test package for setpred."""
