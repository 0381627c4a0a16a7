"""Multi-resolution conceptual counterfactual retrieval and explanation."""

__version__ = "0.1.0"
