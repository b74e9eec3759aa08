"""Direct and inverse spectral problems for non-self-adjoint Sturm-Liouville operators."""
__version__ = "0.1.0"
