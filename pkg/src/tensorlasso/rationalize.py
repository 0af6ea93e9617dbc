"""Snapping floating coefficients to small rationals and exact certification."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .tensor_core import (
    CPDecomposition,
    DenseTensor,
    LinearForm,
    Rank1Term,
    Shape,
    equal_exact,
    expand_sum,
    format_rational,
)

__all__ = [
    "RationalizeConfig",
    "SnapError",
    "RationalizeError",
    "CertificationReport",
    "snap_rational",
    "rationalize_matrix",
    "decomposition_from_solution",
    "verify_exact",
]


@dataclass(frozen=True)
class RationalizeConfig:
    max_denominator: int = 64
    snap_tol: float = 1e-6
    zero_tol: float = 1e-8

    def __post_init__(self):
        if self.max_denominator < 1:
            raise ValueError("max_denominator must be at least 1")
        if not 0 < self.zero_tol <= self.snap_tol:
            raise ValueError("need 0 < zero_tol <= snap_tol")


class SnapError(ValueError):
    """The value has no small-denominator rational within tolerance."""

    def __init__(self, value: float, best: Fraction | None = None):
        self.value = value
        self.best = best
        msg = f"{value!r} is not within tolerance of a rational with small denominator"
        if best is not None:
            msg += f" (closest {best}, error {abs(value - float(best)):.3g})"
        super().__init__(msg)


class RationalizeError(ValueError):
    def __init__(self, failures: list[tuple[tuple[int, ...], float]]):
        self.failures = failures
        shown = ", ".join(f"{idx}={v!r}" for idx, v in failures[:8])
        more = f" and {len(failures) - 8} more" if len(failures) > 8 else ""
        super().__init__(f"{len(failures)} entries could not be snapped: {shown}{more}")


def snap_rational(v: float, config: RationalizeConfig = RationalizeConfig()) -> Fraction:
    """Closest rational with denominator at most ``config.max_denominator``.

    Values within ``zero_tol`` of zero snap to 0.  Raises :class:`SnapError`
    when the closest candidate is farther than ``snap_tol``.
    """
    v = float(v)
    if not math.isfinite(v):
        raise SnapError(v)
    if abs(v) <= config.zero_tol:
        return Fraction(0)
    q = Fraction(v).limit_denominator(config.max_denominator)
    if abs(v - float(q)) > config.snap_tol:
        raise SnapError(v, q)
    return q


def rationalize_matrix(X, config: RationalizeConfig = RationalizeConfig()) -> np.ndarray:
    """Entrywise :func:`snap_rational`; returns an object array of Fractions."""
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape, dtype=object)
    failures = []
    for idx in np.ndindex(X.shape):
        try:
            out[idx] = snap_rational(X[idx], config)
        except SnapError:
            failures.append((tuple(int(i) for i in idx), float(X[idx])))
    if failures:
        raise RationalizeError(failures)
    return out


def decomposition_from_solution(dictionary, X_rational, shape: Shape) -> CPDecomposition:
    """One rank-1 term per nonzero row of ``X_rational``.

    The factors of term ``i`` are the atoms of candidate ``i`` and its output
    vector is row ``i``; the term coefficient is 1.
    """
    X = np.asarray(X_rational, dtype=object)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (dictionary.total_candidates, shape.out_dim):
        raise ValueError(f"X has shape {X.shape}, expected {(dictionary.total_candidates, shape.out_dim)}")
    if tuple(dictionary.dims) != tuple(shape.dims):
        raise ValueError("dictionary does not match the target shape")
    terms = []
    for i in range(X.shape[0]):
        row = tuple(Fraction(v) for v in X[i])
        if any(row):
            terms.append(Rank1Term(Fraction(1), dictionary.factors(i), row))
    if not terms:
        raise ValueError("coefficient matrix is all zero")
    return CPDecomposition(shape, tuple(terms))


@dataclass
class CertificationReport:
    target: str
    term_count: int
    verified: bool
    witness: tuple[int, ...] | None = None
    formula_text: str = ""

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "term_count": self.term_count,
            "verified": self.verified,
            "witness": None if self.witness is None else list(self.witness),
            "formula_text": self.formula_text,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def verify_exact(decomp: CPDecomposition, target: DenseTensor, name: str = "",
                 formula_text: str | None = None) -> CertificationReport:
    """Expand ``decomp`` over the rationals and compare with ``target``.

    ``term_count`` is the number of terms, an upper bound on the rank of the
    target when ``verified`` holds.  On failure ``witness`` is the first
    differing index.
    """
    if formula_text is None:
        from .experiments import render_formula

        formula_text = render_formula(decomp)
    if decomp.shape != target.shape:
        return CertificationReport(name, decomp.term_count, False, None, formula_text)
    res = equal_exact(expand_sum(decomp), target)
    return CertificationReport(name, decomp.term_count, bool(res.equal), None if res.equal else res.index,
                               formula_text)
