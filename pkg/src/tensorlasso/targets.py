"""Target tensors (determinant, matrix multiplication), reference formulas,
and the Laplace-expansion rank bound for determinants.

Layout conventions
------------------
* ``det_n``: mode ``j`` is column ``j`` of the matrix, its basis index is the
  row.  ``evaluate(det_n, columns)`` is the determinant.
* ``M<n,m,p>``: mode 0 holds ``A`` flattened row-major (``A[i,j]`` at
  ``i*m + j``), mode 1 holds ``B`` row-major, and the output holds ``C = AB``
  flattened column-major (``C[i,k]`` at ``i + n*k``), i.e. ``C11, C21, C12,
  C22`` for 2x2 products.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .tensor_core import (
    CPDecomposition,
    DenseTensor,
    LinearForm,
    Rank1Term,
    Shape,
    ShapeError,
    decomposition_from_json,
    expand_sum,
    format_rational,
    to_rational,
)

MAX_DET_N = 6

__all__ = [
    "MAX_DET_N",
    "TargetKind",
    "TargetSpec",
    "permutation_sign",
    "build_det_tensor",
    "build_matmul_tensor",
    "det_shape",
    "matmul_shape",
    "rank_upper_bound_derksen",
    "reference_decomposition",
    "REFERENCE_NAMES",
    "build_target",
    "load_dense_tensor",
    "save_dense_tensor",
]


def permutation_sign(perm) -> int:
    inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
    return -1 if inversions % 2 else 1


def det_shape(n: int) -> Shape:
    return Shape((n,) * n, 1)


def matmul_shape(n: int, m: int, p: int) -> Shape:
    return Shape((n * m, m * p), n * p)


def build_det_tensor(n: int) -> DenseTensor:
    if n < 1:
        raise ValueError("n must be positive")
    if n > MAX_DET_N:
        raise ValueError(f"det_{n} has {math.factorial(n)} nonzeros; refusing n > {MAX_DET_N}")
    shape = det_shape(n)
    arr = np.full(shape.array_shape, Fraction(0), dtype=object)
    for perm in itertools.permutations(range(n)):
        arr[perm + (0,)] = Fraction(permutation_sign(perm))
    return DenseTensor._wrap(shape, arr)


def build_matmul_tensor(n: int, m: int, p: int) -> DenseTensor:
    if min(n, m, p) < 1:
        raise ValueError("matrix dimensions must be positive")
    if n * m * p > 10**6:
        raise ValueError("matrix multiplication tensor too large to build densely")
    shape = matmul_shape(n, m, p)
    arr = np.full(shape.array_shape, Fraction(0), dtype=object)
    for i, j, k in itertools.product(range(n), range(m), range(p)):
        arr[i * m + j, j * p + k, i + n * k] = Fraction(1)
    return DenseTensor._wrap(shape, arr)


def rank_upper_bound_derksen(n: int) -> int:
    """``(5/6)**floor(n/3) * n!`` computed exactly."""
    if n < 1:
        raise ValueError("n must be positive")
    value = Fraction(5, 6) ** (n // 3) * math.factorial(n)
    if value.denominator != 1:  # pragma: no cover - n!/6**(n//3) is integral
        raise ArithmeticError(f"non-integral bound {value}")
    return int(value)


# -- transcribed formulas ---------------------------------------------------

_TOKEN = re.compile(r"([+-]?)(\d+)")


def _form(text: str, labels: dict[str, int], dim: int) -> LinearForm:
    """Parse ``"1-2"`` / ``"11+22"`` style atoms over a labelled basis."""
    coeffs = [0] * dim
    pos = 0
    for m in _TOKEN.finditer(text.replace(" ", "")):
        if m.start() != pos:
            raise ValueError(f"bad atom {text!r}")
        pos = m.end()
        coeffs[labels[m.group(2)]] += -1 if m.group(1) == "-" else 1
    if pos != len(text.replace(" ", "")):
        raise ValueError(f"bad atom {text!r}")
    return LinearForm(tuple(coeffs))


def _det_decomposition(n: int, rows) -> CPDecomposition:
    labels = {str(i + 1): i for i in range(n)}
    terms = tuple(
        Rank1Term(to_rational(c), tuple(_form(a, labels, n) for a in atoms), (1,))
        for c, *atoms in rows
    )
    return CPDecomposition(det_shape(n), terms)


_MM2_LABELS = {"11": 0, "12": 1, "21": 2, "22": 3}
# output basis e_{ik} lives at column-major position i + 2k
_MM2_OUT_LABELS = {"11": 0, "21": 1, "12": 2, "22": 3}

# Derksen's five-term formula, overall factor 1/2 folded into each term.  The
# printed first summand mixes columns; the only completion consistent with the
# other four is (A21 + A31)(A12 - A22)(A13 + A23).
_DERKSEN_DET3 = [
    ("1/2", "2+3", "1-2", "1+2"),
    ("1/2", "1+2", "2-3", "2+3"),
    ("1", "2", "3-1", "3+1"),
    ("1/2", "3-2", "2+1", "2-1"),
    ("1/2", "1-2", "3+2", "3-2"),
]

# Five-term formula found by sparse regression over the pairs dictionary; the
# third factor of each summand is read in column 3.
_LASSO_DET3 = [
    ("-1", "1", "2+3", "2-3"),
    ("1/2", "1-2", "1-3", "1+3"),
    ("-1/2", "1-3", "1-2", "1+2"),
    ("1/2", "1+2", "1+3", "1-3"),
    ("-1/2", "1+3", "1+2", "1-2"),
]

_DET4_TWELVE = [
    ("1/2", "1-2", "3-4", "3+4", "1+2"),
    ("-1/2", "1-3", "2-4", "2+4", "1+3"),
    ("1/2", "1-4", "2-3", "2+3", "1+4"),
    ("1/2", "2-3", "1-4", "1+4", "2+3"),
    ("-1/2", "2-4", "1-3", "1+3", "2+4"),
    ("1/2", "3-4", "1-2", "1+2", "3+4"),
    ("1/2", "1+2", "3+4", "3-4", "1-2"),
    ("-1/2", "1+3", "2+4", "2-4", "1-3"),
    ("1/2", "1+4", "2+3", "2-3", "1-4"),
    ("1/2", "2+3", "1+4", "1-4", "2-3"),
    ("-1/2", "2+4", "1+3", "1-3", "2-4"),
    ("1/2", "3+4", "1+2", "1-2", "3-4"),
]

# (A factor, B factor, C output) over e_{ij}
_STRASSEN2 = [
    ("11+22", "11+22", "11+22"),
    ("21+22", "11", "21-22"),
    ("11", "12-22", "12+22"),
    ("22", "-11+21", "11+21"),
    ("11+12", "22", "-11+12"),
    ("-11+21", "11+12", "22"),
    ("12-22", "21+22", "11"),
]


def _strassen2() -> CPDecomposition:
    terms = []
    for a, b, c in _STRASSEN2:
        out = _form(c, _MM2_OUT_LABELS, 4)
        terms.append(Rank1Term(Fraction(1), (_form(a, _MM2_LABELS, 4), _form(b, _MM2_LABELS, 4)), out.coeffs))
    return CPDecomposition(matmul_shape(2, 2, 2), tuple(terms))


def _classical(n: int, m: int, p: int) -> CPDecomposition:
    terms = []
    for i, j, k in itertools.product(range(n), range(m), range(p)):
        out = [0] * (n * p)
        out[i + n * k] = 1
        terms.append(
            Rank1Term(
                Fraction(1),
                (LinearForm.unit(n * m, i * m + j), LinearForm.unit(m * p, j * p + k)),
                tuple(out),
            )
        )
    return CPDecomposition(matmul_shape(n, m, p), tuple(terms))


REFERENCE_NAMES = ("Strassen2", "DerksenDet3", "LassoDet3", "Det4Twelve", "ClassicalMM")


def reference_decomposition(name: str, n: int = 2, m: int = 2, p: int = 2) -> CPDecomposition:
    """Literal formulas: ``Strassen2``, ``DerksenDet3``, ``LassoDet3``,
    ``Det4Twelve`` and ``ClassicalMM`` (the latter parametrized by n, m, p)."""
    if name == "Strassen2":
        return _strassen2()
    if name == "DerksenDet3":
        return _det_decomposition(3, _DERKSEN_DET3)
    if name == "LassoDet3":
        return _det_decomposition(3, _LASSO_DET3)
    if name == "Det4Twelve":
        return _det_decomposition(4, _DET4_TWELVE)
    if name == "ClassicalMM":
        return _classical(n, m, p)
    raise KeyError(f"unknown reference decomposition {name!r}; choose from {REFERENCE_NAMES}")


# -- target specifications ----------------------------------------------------

class TargetKind(enum.Enum):
    DETERMINANT = "det"
    MATMUL = "mm"
    FROM_FILE = "file"


@dataclass(frozen=True)
class TargetSpec:
    kind: TargetKind
    params: tuple[int, ...] = ()
    path: str | None = None

    def __post_init__(self):
        if self.kind is TargetKind.DETERMINANT and (len(self.params) != 1 or self.params[0] < 1):
            raise ValueError("determinant target needs one positive size")
        if self.kind is TargetKind.MATMUL and (len(self.params) != 3 or min(self.params) < 1):
            raise ValueError("matmul target needs three positive sizes")
        if self.kind is TargetKind.FROM_FILE and not self.path:
            raise ValueError("file target needs a path")

    @classmethod
    def parse(cls, text: str) -> "TargetSpec":
        """``det:3``, ``mm:2,2,2`` (or ``mm:2``) and ``file:path``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        if kind == "det":
            return cls(TargetKind.DETERMINANT, (int(rest),))
        if kind == "mm":
            sizes = tuple(int(s) for s in rest.split(","))
            if len(sizes) == 1:
                sizes = sizes * 3
            return cls(TargetKind.MATMUL, sizes)
        if kind == "file":
            return cls(TargetKind.FROM_FILE, (), rest)
        raise ValueError(f"cannot parse target {text!r}")

    def __str__(self):
        if self.kind is TargetKind.FROM_FILE:
            return f"file:{self.path}"
        return f"{self.kind.value}:{','.join(map(str, self.params))}"

    @property
    def variable_names(self) -> str:
        """Rendering family: ``det``, ``mm`` or ``generic``."""
        return {TargetKind.DETERMINANT: "det", TargetKind.MATMUL: "mm"}.get(self.kind, "generic")


def build_target(spec: TargetSpec) -> DenseTensor:
    if spec.kind is TargetKind.DETERMINANT:
        return build_det_tensor(spec.params[0])
    if spec.kind is TargetKind.MATMUL:
        return build_matmul_tensor(*spec.params)
    path = Path(spec.path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return expand_sum(decomposition_from_json(json.loads(text)))
    return parse_dense_tensor(text)


# Dense text format:
#   # comments allowed
#   dims 3 3 3
#   out_dim 1
#   <entries, whitespace separated rationals, row-major with output fastest>

def parse_dense_tensor(text: str) -> DenseTensor:
    dims = None
    out_dim = 1
    tokens: list[str] = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "dims":
            dims = tuple(int(x) for x in rest)
        elif head == "out_dim":
            out_dim = int(rest[0])
        else:
            tokens.extend(line.split())
    if dims is None:
        raise ShapeError("dense tensor file lacks a 'dims' header")
    return DenseTensor(Shape(dims, out_dim), [Fraction(t) for t in tokens])


def load_dense_tensor(path) -> DenseTensor:
    return parse_dense_tensor(Path(path).read_text())


def save_dense_tensor(t: DenseTensor, path) -> None:
    lines = ["dims " + " ".join(map(str, t.shape.dims)), f"out_dim {t.shape.out_dim}"]
    flat = t.flat()
    step = t.shape.out_dim * t.shape.dims[-1]
    for i in range(0, len(flat), step):
        lines.append(" ".join(format_rational(v) for v in flat[i:i + step]))
    Path(path).write_text("\n".join(lines) + "\n")
