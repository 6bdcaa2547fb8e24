"""From-scratch aesthetic classifier: LAB preprocessing, dense multi-level CNN, coherent batching."""

__version__ = "0.1.0"
