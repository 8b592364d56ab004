"""
dexgrasp - desk-scale hierarchical vision-language-action grasping
"""

__version__ = "0.1.0"
