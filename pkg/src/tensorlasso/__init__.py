"""Certified CP decompositions of polynomial tensors by sparse regression.

Modules
-------
tensor_core
    Exact rational tensors, rank-1 terms, expansion and comparison.
targets
    Determinant and matrix-multiplication tensors, stored reference formulas.
dictionary
    Atom schemes, candidate indexing, sampling, design matrices and cache.
solver
    Coordinate-descent LASSO and group LASSO, lambda paths, refits.
rationalize
    Snapping coefficients to rationals and exact certification.
experiments
    Presets and the end-to-end search pipeline.
kernels
    Compiled sweep kernels with a pure numpy fallback.
"""
from .kernels import BACKEND
from .tensor_core import CPDecomposition, DenseTensor, LinearForm, Rank1Term, Shape

__version__ = "0.1.0"

__all__ = ["BACKEND", "CPDecomposition", "DenseTensor", "LinearForm", "Rank1Term", "Shape", "__version__"]
