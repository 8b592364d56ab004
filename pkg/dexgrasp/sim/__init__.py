"""
Deterministic 2D tabletop world, scripted expert and demo collection.
"""
