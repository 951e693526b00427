"""Supervised vs. contrastive representation learning on game images, with
silhouette-based measurement of cross-game generalization."""

__version__ = "0.1.0"
