"""Prompt-based contrastive video encoder pre-training and temporal gesture
segmentation, at desk scale."""

__version__ = "0.1.0"
