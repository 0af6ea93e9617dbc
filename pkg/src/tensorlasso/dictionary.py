"""Candidate dictionaries of rank-1 tensors and their sampled design matrices.

A dictionary is the cartesian product of per-mode atom lists.  Candidate
``c`` is addressed by the mixed-radix tuple ``(a_1, ..., a_q)`` with the last
mode varying fastest, so for three modes of nine atoms the column order is
``M11 M12 M13, M11 M12 M23, ...`` as in the pairs dictionary for det_3.
"""
from __future__ import annotations

import enum
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor_core import (
    DenseTensor,
    LinearForm,
    Rank1Term,
    Shape,
    ShapeError,
    format_rational,
)

__all__ = [
    "SchemeKind",
    "AtomScheme",
    "ModeAtoms",
    "CandidateDictionary",
    "Distribution",
    "SampleSet",
    "CacheError",
    "build_atoms",
    "sample_inputs",
    "assemble_design",
    "assemble_target",
    "STRASSEN_A_ATOMS",
    "STRASSEN_B_ATOMS",
    "design_cache_key",
    "load_or_build_design",
    "write_design_cache",
    "read_design_cache",
]


class SchemeKind(enum.Enum):
    ENTRIES = "entries"
    PAIRS = "pairs"
    CUSTOM = "custom"


@dataclass(frozen=True)
class AtomScheme:
    kind: SchemeKind
    forms: tuple[LinearForm, ...] = ()

    @classmethod
    def entries(cls) -> "AtomScheme":
        return cls(SchemeKind.ENTRIES)

    @classmethod
    def pairs(cls) -> "AtomScheme":
        return cls(SchemeKind.PAIRS)

    @classmethod
    def custom(cls, forms: Sequence) -> "AtomScheme":
        return cls(SchemeKind.CUSTOM, tuple(f if isinstance(f, LinearForm) else LinearForm(tuple(f)) for f in forms))

    @classmethod
    def parse(cls, text: str) -> "AtomScheme":
        text = text.strip().lower()
        if text in ("entries", "entries-only"):
            return cls.entries()
        if text in ("pairs", "pair-sums-diffs"):
            return cls.pairs()
        raise ValueError(f"unknown atom scheme {text!r} (use 'entries' or 'pairs')")

    def __str__(self):
        if self.kind is SchemeKind.CUSTOM:
            return "custom[" + ";".join(",".join(format_rational(c) for c in f.coeffs) for f in self.forms) + "]"
        return self.kind.value


@dataclass(frozen=True)
class ModeAtoms:
    mode_index: int
    forms: tuple[LinearForm, ...]

    def __post_init__(self):
        if not self.forms:
            raise ValueError("a mode needs at least one atom")
        if len(set(self.forms)) != len(self.forms):
            raise ValueError(f"duplicate atoms in mode {self.mode_index}")
        dims = {f.dim for f in self.forms}
        if len(dims) != 1:
            raise ShapeError(f"atoms of mode {self.mode_index} have mixed dimensions {sorted(dims)}")

    def __len__(self):
        return len(self.forms)

    @property
    def dim(self) -> int:
        return self.forms[0].dim

    def matrix(self) -> np.ndarray:
        """Atoms as rows of a float matrix (``len(self) x dim``)."""
        return np.array([f.as_float() for f in self.forms])


def build_atoms(dim: int, scheme: AtomScheme, mode_index: int = 0) -> ModeAtoms:
    """Entries; or entries, then ``e_i - e_j``, then ``e_i + e_j`` for i < j."""
    if dim < 1:
        raise ValueError("dim must be positive")
    units = [LinearForm.unit(dim, i) for i in range(dim)]
    if scheme.kind is SchemeKind.ENTRIES:
        forms = units
    elif scheme.kind is SchemeKind.PAIRS:
        forms = list(units)
        for sign in (-1, 1):
            for i, j in itertools.combinations(range(dim), 2):
                c = [0] * dim
                c[i], c[j] = 1, sign
                forms.append(LinearForm(tuple(c)))
    else:
        forms = list(scheme.forms)
        if any(f.dim != dim for f in forms):
            raise ShapeError(f"custom atoms must all have dimension {dim}")
    return ModeAtoms(mode_index, tuple(forms))


def _mm2_atom(spec: dict[int, int]) -> LinearForm:
    c = [0] * 4
    for k, v in spec.items():
        c[k] = v
    return LinearForm(tuple(c))


# A11, A22, A11+A22, A21+A22, A11+A12, A11-A21, A12-A22 over row-major 2x2 entries
_STRASSEN_ATOMS = (
    _mm2_atom({0: 1}),
    _mm2_atom({3: 1}),
    _mm2_atom({0: 1, 3: 1}),
    _mm2_atom({2: 1, 3: 1}),
    _mm2_atom({0: 1, 1: 1}),
    _mm2_atom({0: 1, 2: -1}),
    _mm2_atom({1: 1, 3: -1}),
)
STRASSEN_A_ATOMS = AtomScheme.custom(_STRASSEN_ATOMS)
STRASSEN_B_ATOMS = AtomScheme.custom(_STRASSEN_ATOMS)


class CandidateDictionary:
    """Cartesian product of per-mode atoms, addressed in mixed radix."""

    def __init__(self, modes: Sequence[ModeAtoms]):
        if not modes:
            raise ValueError("a dictionary needs at least one mode")
        self.modes = tuple(modes)
        self.radices = tuple(len(m) for m in self.modes)

    @classmethod
    def build(cls, dims: Sequence[int], schemes) -> "CandidateDictionary":
        if isinstance(schemes, AtomScheme):
            schemes = [schemes] * len(dims)
        if len(schemes) != len(dims):
            raise ValueError("need one atom scheme per mode")
        return cls([build_atoms(d, s, j) for j, (d, s) in enumerate(zip(dims, schemes))])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.dim for m in self.modes)

    @property
    def total_candidates(self) -> int:
        return math.prod(self.radices)

    def __len__(self):
        return self.total_candidates

    def encode_index(self, atoms: Sequence[int]) -> int:
        if len(atoms) != len(self.radices):
            raise IndexError(f"expected {len(self.radices)} atom indices")
        flat = 0
        for a, r in zip(atoms, self.radices):
            if not 0 <= a < r:
                raise IndexError(f"atom index {a} outside radix {r}")
            flat = flat * r + int(a)
        return flat

    def decode_index(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.total_candidates:
            raise IndexError(f"candidate index {flat} outside [0, {self.total_candidates})")
        out = []
        for r in reversed(self.radices):
            flat, a = divmod(flat, r)
            out.append(a)
        return tuple(reversed(out))

    def factors(self, flat: int) -> tuple[LinearForm, ...]:
        return tuple(m.forms[a] for m, a in zip(self.modes, self.decode_index(flat)))

    def candidate(self, flat: int, output=(1,), coefficient=1) -> Rank1Term:
        return Rank1Term(coefficient, self.factors(flat), tuple(output))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for m in self.modes:
            for f in m.forms:
                h.update((",".join(format_rational(c) for c in f.coeffs) + ";").encode())
            h.update(b"|")
        return h.hexdigest()[:16]


class Distribution(enum.Enum):
    STANDARD_NORMAL = "normal"
    UNIFORM_INT = "uniform-int"


@dataclass(frozen=True)
class SampleSet:
    """``inputs[j]`` is an ``N x dims[j]`` array; row ``s`` is sample ``s``."""

    shape: Shape
    count: int
    seed: int
    distribution: Distribution
    inputs: tuple[np.ndarray, ...]
    bounds: tuple[int, int] | None = None

    def sample(self, s: int) -> list[np.ndarray]:
        return [x[s] for x in self.inputs]

    @property
    def description(self) -> str:
        if self.distribution is Distribution.UNIFORM_INT:
            return f"uniform-int({self.bounds[0]},{self.bounds[1]})"
        return self.distribution.value


def sample_inputs(
    shape: Shape,
    count: int,
    distribution: Distribution = Distribution.STANDARD_NORMAL,
    seed: int = 0,
    bounds: tuple[int, int] = (-2, 2),
) -> SampleSet:
    if count < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    inputs = []
    for d in shape.dims:
        if distribution is Distribution.STANDARD_NORMAL:
            x = rng.standard_normal((count, d))
        else:
            x = rng.integers(bounds[0], bounds[1], size=(count, d), endpoint=True).astype(float)
        x.flags.writeable = False
        inputs.append(x)
    return SampleSet(
        shape, count, seed, distribution, tuple(inputs),
        tuple(bounds) if distribution is Distribution.UNIFORM_INT else None,
    )


def _check_compatible(dictionary: CandidateDictionary, samples: SampleSet) -> None:
    if dictionary.dims != samples.shape.dims:
        raise ShapeError(f"dictionary modes {dictionary.dims} vs sample modes {samples.shape.dims}")


def _design_rows(projections: list[np.ndarray], lo: int, hi: int) -> np.ndarray:
    block = projections[0][lo:hi]
    for p in projections[1:]:
        block = (block[:, :, None] * p[lo:hi, None, :]).reshape(hi - lo, -1)
    return block


def assemble_design(
    dictionary: CandidateDictionary, samples: SampleSet, threads: int = 1, chunk: int = 4096
) -> np.ndarray:
    """``D[s, c] = prod_j <atom_j(c), x_j(s)>`` as an ``N x k`` float array."""
    _check_compatible(dictionary, samples)
    projections = [x @ m.matrix().T for x, m in zip(samples.inputs, dictionary.modes)]
    n = samples.count
    out = np.empty((n, dictionary.total_candidates))
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]

    def fill(b):
        out[b[0]:b[1]] = _design_rows(projections, *b)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, bounds))
    else:
        for b in bounds:
            fill(b)
    return out


def assemble_target(target: DenseTensor, samples: SampleSet) -> np.ndarray:
    """``Y[s, :] = evaluate(target, inputs_s)`` as an ``N x out_dim`` array."""
    if target.shape.dims != samples.shape.dims:
        raise ShapeError(f"target modes {target.shape.dims} vs sample modes {samples.shape.dims}")
    q = target.shape.order
    letters = "abcdefghijklmnopqr"
    if q > len(letters):
        raise ShapeError("too many modes")
    subs = ",".join(f"s{letters[j]}" for j in range(q)) + "," + letters[:q] + "z->sz"
    return np.einsum(subs, *samples.inputs, target.to_float(), optimize=True)


# -- disk cache ---------------------------------------------------------------

class CacheError(RuntimeError):
    """A cache file exists but does not match its key or is truncated."""


_MAGIC = b"TLDCACHE"
_LAYOUT_VERSION = 1
_ALIGN = 64


def _tensor_fingerprint(t: DenseTensor) -> str:
    h = hashlib.sha256(json.dumps(t.shape.to_json()).encode())
    for v in t.entries.ravel():
        h.update(format_rational(v).encode() + b",")
    return h.hexdigest()[:16]


def design_cache_key(target: DenseTensor, dictionary: CandidateDictionary, samples: SampleSet) -> dict:
    return {
        "layout_version": _LAYOUT_VERSION,
        "target": _tensor_fingerprint(target),
        "scheme": dictionary.fingerprint(),
        "N": samples.count,
        "distribution": samples.description,
        "seed": samples.seed,
    }


def _key_hash(key: dict) -> str:
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:24]


def write_design_cache(path, key: dict, D: np.ndarray, Y: np.ndarray) -> None:
    header = dict(key, k=int(D.shape[1]), d=int(Y.shape[1]))
    raw = json.dumps(header, sort_keys=True).encode()
    offset = len(_MAGIC) + 8 + len(raw)
    pad = (-offset) % _ALIGN
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(raw).to_bytes(8, "little"))
        fh.write(raw)
        fh.write(b"\0" * pad)
        fh.write(np.ascontiguousarray(D, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(Y, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_design_cache(path, key: dict | None = None, mmap: bool = True) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise CacheError(f"{path}: bad magic")
        size = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(size))
        except ValueError as exc:
            raise CacheError(f"{path}: unreadable header") from exc
    if header.get("layout_version") != _LAYOUT_VERSION:
        raise CacheError(f"{path}: layout version {header.get('layout_version')}")
    if key is not None and any(header.get(k) != v for k, v in key.items()):
        raise CacheError(f"{path}: header does not match requested key")
    n, k, d = header["N"], header["k"], header["d"]
    offset = len(_MAGIC) + 8 + size
    offset += (-offset) % _ALIGN
    if path.stat().st_size != offset + 8 * n * (k + d):
        raise CacheError(f"{path}: truncated payload")
    if mmap:
        D = np.memmap(path, dtype="<f8", mode="r", offset=offset, shape=(n, k))
        Y = np.memmap(path, dtype="<f8", mode="r", offset=offset + 8 * n * k, shape=(n, d))
    else:
        with open(path, "rb") as fh:
            fh.seek(offset)
            D = np.frombuffer(fh.read(8 * n * k), dtype="<f8").reshape(n, k)
            Y = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d)
    return D, Y


def load_or_build_design(
    target: DenseTensor,
    dictionary: CandidateDictionary,
    samples: SampleSet,
    cache_dir=None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble ``(D, Y)``, reading/writing ``cache_dir`` when given."""
    if cache_dir is None:
        return assemble_design(dictionary, samples, threads), assemble_target(target, samples)
    key = design_cache_key(target, dictionary, samples)
    path = Path(cache_dir) / f"design-{_key_hash(key)}.bin"
    if path.exists():
        return read_design_cache(path, key)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    D = assemble_design(dictionary, samples, threads)
    Y = assemble_target(target, samples)
    write_design_cache(path, key, D, Y)
    return D, Y
