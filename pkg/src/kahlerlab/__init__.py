"""Numerical laboratory for twisted cscK and extremal continuity paths."""
