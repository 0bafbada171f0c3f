"""Structure-supervised contextual protein sequence embeddings."""

__version__ = "0.1.0"
