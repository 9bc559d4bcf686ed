"""fairshift: fair K-shot meta-learning plus mean-shift fairness warnings."""

__version__ = "0.1.0"
