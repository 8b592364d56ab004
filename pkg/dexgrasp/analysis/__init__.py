"""Attention maps, feature visualization and consistency reports."""
