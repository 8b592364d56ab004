"""Utility modules for dexgrasp."""
