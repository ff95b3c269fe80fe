"""Stability analysis of switched systems under mixed switching-signal classes."""
