"""Feature-interaction blocks, a miniature multi-task ranking model, synthetic
data with planted interactions, and a constraint-aware benchmark harness."""

__version__ = "0.1.0"
