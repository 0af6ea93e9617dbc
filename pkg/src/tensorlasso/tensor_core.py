"""Exact-rational tensors, rank-1 terms and CP decompositions.

A tensor with input modes of dimensions ``d_1 .. d_q`` and an output space of
dimension ``out_dim`` is stored as an immutable numpy object array of
:class:`fractions.Fraction` with shape ``(d_1, ..., d_q, out_dim)``.  Flat
entry order is row-major over ``(i_1, ..., i_q, o)`` with the output index
varying fastest.  Scalar-valued tensors use ``out_dim = 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

Rational = Fraction

__all__ = [
    "Rational",
    "ShapeError",
    "Shape",
    "DenseTensor",
    "LinearForm",
    "Rank1Term",
    "CPDecomposition",
    "Mismatch",
    "expand_term",
    "expand_sum",
    "equal_exact",
    "evaluate",
    "evaluate_term_fast",
    "to_rational",
    "format_rational",
    "decomposition_to_json",
    "decomposition_from_json",
    "save_decomposition",
    "load_decomposition",
]


class ShapeError(ValueError):
    """Raised when tensors, terms or inputs do not conform to a shape."""


def to_rational(value) -> Fraction:
    """Convert an int, Fraction or ``"p/q"`` string to a Fraction.

    Floats are rejected: exact objects are never built from floating values
    implicitly (use :func:`tensorlasso.rationalize.snap_rational`).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def format_rational(q: Fraction) -> str:
    """Serialize as ``"p/q"`` (always with an explicit denominator)."""
    return f"{q.numerator}/{q.denominator}"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _rational_vector(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(to_rational(v) for v in values)


@dataclass(frozen=True)
class Shape:
    dims: tuple[int, ...]
    out_dim: int = 1

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "out_dim", int(self.out_dim))
        if not dims:
            raise ShapeError("a tensor needs at least one input mode")
        if any(d < 1 for d in dims) or self.out_dim < 1:
            raise ShapeError(f"dimensions must be positive, got {dims}, out_dim={self.out_dim}")

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def array_shape(self) -> tuple[int, ...]:
        return self.dims + (self.out_dim,)

    @property
    def size(self) -> int:
        return int(np.prod(self.array_shape))

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "out_dim": self.out_dim}

    @classmethod
    def from_json(cls, obj) -> "Shape":
        if isinstance(obj, dict):
            return cls(tuple(obj["dims"]), obj.get("out_dim", 1))
        # bare list of dims
        return cls(tuple(obj), 1)


class DenseTensor:
    """Exact multi-way array; ``entries`` is a read-only object array."""

    __slots__ = ("shape", "entries")

    def __init__(self, shape: Shape, entries):
        arr = np.empty(shape.array_shape, dtype=object)
        flat = list(entries.flat) if isinstance(entries, np.ndarray) else list(entries)
        if len(flat) != shape.size:
            raise ShapeError(f"expected {shape.size} entries for {shape}, got {len(flat)}")
        arr.ravel()[:] = [to_rational(v) for v in flat]
        self.shape = shape
        self.entries = _frozen(arr)

    @classmethod
    def zeros(cls, shape: Shape) -> "DenseTensor":
        return cls(shape, [Fraction(0)] * shape.size)

    @classmethod
    def _wrap(cls, shape: Shape, arr: np.ndarray) -> "DenseTensor":
        # trusted constructor: arr already holds Fractions with the right shape
        obj = cls.__new__(cls)
        obj.shape = shape
        obj.entries = _frozen(arr)
        return obj

    def flat(self) -> list[Fraction]:
        return list(self.entries.ravel())

    def nonzeros(self) -> list[tuple[tuple[int, ...], Fraction]]:
        return [(idx, v) for idx, v in np.ndenumerate(self.entries) if v != 0]

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return DenseTensor._wrap(self.shape, self.entries + other.entries)

    def __neg__(self) -> "DenseTensor":
        return DenseTensor._wrap(self.shape, -self.entries)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        return self + (-other)

    def scale(self, alpha) -> "DenseTensor":
        return DenseTensor._wrap(self.shape, self.entries * to_rational(alpha))

    def with_entry(self, index: Sequence[int], value) -> "DenseTensor":
        arr = self.entries.copy()
        arr[tuple(index)] = to_rational(value)
        return DenseTensor._wrap(self.shape, arr)

    def to_float(self) -> np.ndarray:
        return self.entries.astype(float)

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return equal_exact(self, other).equal

    def __hash__(self):
        return hash((self.shape, tuple(self.entries.ravel())))

    def __repr__(self):
        return f"DenseTensor({self.shape}, nnz={len(self.nonzeros())})"


@dataclass(frozen=True)
class LinearForm:
    """A vector of coefficients on one mode's standard basis (an atom)."""

    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        coeffs = _rational_vector(self.coeffs)
        if not coeffs:
            raise ShapeError("a linear form needs at least one coefficient")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    @classmethod
    def unit(cls, dim: int, index: int) -> "LinearForm":
        c = [0] * dim
        c[index] = 1
        return cls(tuple(c))

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def as_float(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs])

    def __neg__(self):
        return LinearForm(tuple(-c for c in self.coeffs))


@dataclass(frozen=True)
class Rank1Term:
    coefficient: Fraction
    factors: tuple[LinearForm, ...]
    output_vector: tuple[Fraction, ...] = (Fraction(1),)

    def __post_init__(self):
        object.__setattr__(self, "coefficient", to_rational(self.coefficient))
        factors = tuple(f if isinstance(f, LinearForm) else LinearForm(tuple(f)) for f in self.factors)
        if not factors:
            raise ShapeError("a rank-1 term needs at least one factor")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "output_vector", _rational_vector(self.output_vector))

    @property
    def shape(self) -> Shape:
        return Shape(tuple(f.dim for f in self.factors), len(self.output_vector))

    def check_shape(self, shape: Shape) -> None:
        if self.shape != shape:
            raise ShapeError(f"term of shape {self.shape} does not conform to {shape}")

    def is_zero(self) -> bool:
        return (
            self.coefficient == 0
            or all(v == 0 for v in self.output_vector)
            or any(f.is_zero() for f in self.factors)
        )


@dataclass(frozen=True)
class CPDecomposition:
    shape: Shape
    terms: tuple[Rank1Term, ...] = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        for t in terms:
            t.check_shape(self.shape)

    def __len__(self):
        return len(self.terms)

    @property
    def term_count(self) -> int:
        return len(self.terms)

    def __add__(self, other: "CPDecomposition") -> "CPDecomposition":
        if self.shape != other.shape:
            raise ShapeError(f"cannot concatenate {self.shape} and {other.shape}")
        return CPDecomposition(self.shape, self.terms + other.terms)


def expand_term(term: Rank1Term, shape: Shape | None = None) -> DenseTensor:
    """Materialize ``coefficient * f_1 (x) ... (x) f_q (x) output`` exactly."""
    if shape is not None:
        term.check_shape(shape)
    shape = term.shape
    vectors = [np.array(f.coeffs, dtype=object) for f in term.factors]
    vectors.append(np.array(term.output_vector, dtype=object))
    arr = reduce(np.multiply.outer, vectors) * term.coefficient
    return DenseTensor._wrap(shape, arr)


def expand_sum(decomp: CPDecomposition) -> DenseTensor:
    """Entrywise exact sum of all expanded terms."""
    if not decomp.terms:
        raise ShapeError("cannot expand an empty decomposition")
    acc = np.full(decomp.shape.array_shape, Fraction(0), dtype=object)
    for t in decomp.terms:
        acc = acc + expand_term(t, decomp.shape).entries
    return DenseTensor._wrap(decomp.shape, acc)


@dataclass(frozen=True)
class Mismatch:
    """Result of an exact comparison; ``index`` is the first differing entry."""

    equal: bool
    index: tuple[int, ...] | None = None
    left: Fraction | None = None
    right: Fraction | None = None

    def __bool__(self):
        return self.equal


def equal_exact(a: DenseTensor, b: DenseTensor) -> Mismatch:
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare {a.shape} with {b.shape}")
    diff = np.argwhere(a.entries != b.entries)
    if len(diff) == 0:
        return Mismatch(True)
    idx = tuple(int(i) for i in diff[0])
    return Mismatch(False, idx, a.entries[idx], b.entries[idx])


def _check_inputs(shape: Shape, inputs: Sequence) -> None:
    if len(inputs) != shape.order:
        raise ShapeError(f"expected {shape.order} input vectors, got {len(inputs)}")
    for j, (v, d) in enumerate(zip(inputs, shape.dims)):
        if len(v) != d:
            raise ShapeError(f"input {j} has length {len(v)}, mode dimension is {d}")


def evaluate(t: DenseTensor, inputs: Sequence[Sequence]) -> tuple[Fraction, ...]:
    """Contract every input mode with its vector; returns the output vector."""
    _check_inputs(t.shape, inputs)
    acc = t.entries
    for v in inputs:
        vec = np.array([to_rational(x) for x in v], dtype=object)
        acc = np.tensordot(vec, acc, axes=(0, 0))
    return tuple(Fraction(x) for x in np.asarray(acc, dtype=object).ravel())


def evaluate_term_fast(term: Rank1Term, inputs: Sequence[Sequence[float]]) -> np.ndarray:
    """Floating evaluation ``c * prod_j <f_j, x_j> * output`` without expansion."""
    _check_inputs(term.shape, inputs)
    value = float(term.coefficient)
    for f, x in zip(term.factors, inputs):
        value *= float(np.dot(f.as_float(), np.asarray(x, dtype=float)))
    return value * np.array([float(v) for v in term.output_vector])


# -- JSON -------------------------------------------------------------------

def _form_to_json(f: LinearForm):
    if all(c.denominator == 1 for c in f.coeffs):
        return [int(c) for c in f.coeffs]
    return [format_rational(c) for c in f.coeffs]


def decomposition_to_json(decomp: CPDecomposition) -> dict:
    return {
        "shape": decomp.shape.to_json(),
        "terms": [
            {
                "coefficient": format_rational(t.coefficient),
                "factors": [_form_to_json(f) for f in t.factors],
                "output": [format_rational(v) for v in t.output_vector],
            }
            for t in decomp.terms
        ],
    }


def decomposition_from_json(obj) -> CPDecomposition:
    if isinstance(obj, str):
        obj = json.loads(obj)
    shape = Shape.from_json(obj["shape"])
    terms = []
    for t in obj["terms"]:
        terms.append(
            Rank1Term(
                to_rational(t["coefficient"]),
                tuple(LinearForm(tuple(f)) for f in t["factors"]),
                tuple(t.get("output", ["1/1"] * shape.out_dim)),
            )
        )
    return CPDecomposition(shape, tuple(terms))


def save_decomposition(decomp: CPDecomposition, path) -> None:
    with open(path, "w") as fh:
        json.dump(decomposition_to_json(decomp), fh, indent=1)
        fh.write("\n")


def load_decomposition(path) -> CPDecomposition:
    with open(path) as fh:
        return decomposition_from_json(json.load(fh))
