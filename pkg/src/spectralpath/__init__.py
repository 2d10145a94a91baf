"""Solution paths of one-homogeneous variational regularization."""

__version__ = "0.1.0"
