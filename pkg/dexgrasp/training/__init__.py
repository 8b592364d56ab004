"""Imitation-learning pipeline for the grasp controller."""
