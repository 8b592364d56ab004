"""
Perception: frozen/trainable patch encoders, bbox→mask segmentation and
mask tracking, each with a deterministic oracle and an HTTP adapter.
"""
