"""Graph embeddings from learned geometric bases and Gromov-Wasserstein coordinates."""

__version__ = "0.1.0"
