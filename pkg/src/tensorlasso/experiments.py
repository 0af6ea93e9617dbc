"""End-to-end experiments: sample, assemble, fit, certify, report.

A search runs, for each seed in order, a chain of weighted group-LASSO
paths.  Every path point's support is refitted by least squares, snapped to
small rationals and verified exactly; the smallest verified support wins.
Between rounds the weights are updated as ``1 / (||X_i|| + eps)`` with a
decreasing ``eps`` (a majorization of the row count), restarts draw random
log-uniform starting weights, and the best support of each restart is
shrunk further by exchange moves before being certified.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dictionary import (
    STRASSEN_A_ATOMS,
    STRASSEN_B_ATOMS,
    AtomScheme,
    CandidateDictionary,
    Distribution,
    load_or_build_design,
    sample_inputs,
)
from .rationalize import (
    CertificationReport,
    RationalizeConfig,
    RationalizeError,
    decomposition_from_solution,
    rationalize_matrix,
    verify_exact,
)
from .solver import (
    GramProblem,
    RankDeficientError,
    SolverConfig,
    lambda_path_fit,
    refine_support,
    refit_least_squares,
)
from .targets import (
    TargetKind,
    TargetSpec,
    build_target,
    reference_decomposition,
)
from .tensor_core import (
    CPDecomposition,
    DenseTensor,
    LinearForm,
    Shape,
    decomposition_to_json,
    expand_sum,
    format_rational,
)

__all__ = [
    "SearchConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "ResourceEstimate",
    "HeavyConfigError",
    "PRESETS",
    "preset",
    "parse_scheme",
    "run_experiment",
    "run_verification_suite",
    "search_problem",
    "planted_instance",
    "run_planted_trials",
    "render_formula",
    "estimate_resources",
]


class HeavyConfigError(RuntimeError):
    """The configuration exceeds the memory budget and ``heavy`` is not set."""


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 1
    rounds: int = 1
    eps_schedule: tuple[float, ...] = (1.0, 0.3, 0.1, 0.03, 0.01)
    weight_spread: float = 1.0
    refine_depth: int = 2
    refine_max_support: int = 16
    target_terms: int | None = None
    span_rtol: float = 1e-9

    def __post_init__(self):
        if self.restarts < 1 or self.rounds < 1:
            raise ValueError("restarts and rounds must be positive")
        if not self.eps_schedule or min(self.eps_schedule) <= 0:
            raise ValueError("eps schedule must be nonempty and positive")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    target: TargetSpec
    schemes: tuple[AtomScheme, ...]
    samples: int
    seeds: tuple[int, ...] = (0,)
    distribution: Distribution = Distribution.STANDARD_NORMAL
    bounds: tuple[int, int] = (-2, 2)
    solver: SolverConfig = SolverConfig()
    rationalize: RationalizeConfig = RationalizeConfig()
    search: SearchConfig = SearchConfig()
    cache_dir: str | None = None
    threads: int = 1
    heavy: bool = False
    memory_budget: int = 8 * 10**9
    references: tuple[str, ...] = ()

    @property
    def is_verification(self) -> bool:
        return bool(self.references)

    def dictionary(self) -> CandidateDictionary:
        return CandidateDictionary.build(build_target(self.target).shape.dims, list(self.schemes))


@dataclass
class ExperimentReport:
    name: str
    target: str
    candidate_count: int
    sample_count: int
    verified: bool
    term_count: int | None
    penalty_count: int | None
    residual: float | None
    lambda_selected: float | None
    formula_text: str
    seed_verified: int | None = None
    seeds_tried: tuple[int, ...] = ()
    refined: bool = False
    converged: bool = True
    decomposition: dict | None = None
    certifications: list = field(default_factory=list)
    timing: float | None = None

    def to_json(self, with_timing: bool = False) -> dict:
        out = {
            "name": self.name,
            "target": self.target,
            "candidate_count": self.candidate_count,
            "sample_count": self.sample_count,
            "verified": self.verified,
            "term_count": self.term_count,
            "penalty_count": self.penalty_count,
            "residual": self.residual,
            "lambda": self.lambda_selected,
            "formula_text": self.formula_text,
            "seed_verified": self.seed_verified,
            "seeds_tried": list(self.seeds_tried),
            "refined": self.refined,
            "converged": self.converged,
            "decomposition": self.decomposition,
            "certifications": [c.to_json() for c in self.certifications],
        }
        if with_timing:
            out["timing_seconds"] = self.timing
        return out

    def dumps(self, with_timing: bool = False) -> str:
        return json.dumps(self.to_json(with_timing), indent=2, sort_keys=True)


# -- presets ------------------------------------------------------------------

def parse_scheme(text: str, modes: int) -> tuple[AtomScheme, ...]:
    """``entries``, ``pairs``, ``strassen`` or a comma list, one per mode."""
    parts = [p.strip().lower() for p in text.split(",")]
    if parts == ["strassen"]:
        if modes != 2:
            raise ValueError("the strassen atoms apply to 2x2 matrix multiplication")
        return (STRASSEN_A_ATOMS, STRASSEN_B_ATOMS)
    if len(parts) == 1:
        parts = parts * modes
    if len(parts) != modes:
        raise ValueError(f"need 1 or {modes} schemes, got {len(parts)}")
    return tuple(AtomScheme.parse(p) for p in parts)


_DET3_SEARCH = SearchConfig(restarts=12, rounds=10, target_terms=5)

PRESETS: dict[str, ExperimentConfig] = {
    "mm2-classical": ExperimentConfig(
        "mm2-classical", TargetSpec.parse("mm:2,2,2"), (AtomScheme.entries(),) * 2, 200, (0,),
    ),
    "mm2-strassen": ExperimentConfig(
        "mm2-strassen", TargetSpec.parse("mm:2,2,2"), (STRASSEN_A_ATOMS, STRASSEN_B_ATOMS), 400,
        (0, 1, 2, 3, 4), search=SearchConfig(restarts=4, rounds=5, target_terms=7),
    ),
    "det3-verify": ExperimentConfig(
        "det3-verify", TargetSpec.parse("det:3"), (AtomScheme.pairs(),) * 3, 3000,
        references=("DerksenDet3", "LassoDet3"),
    ),
    "det3-search": ExperimentConfig(
        "det3-search", TargetSpec.parse("det:3"), (AtomScheme.pairs(),) * 3, 3000, (0, 1, 2, 3, 4),
        search=_DET3_SEARCH,
    ),
    "det4-verify": ExperimentConfig(
        "det4-verify", TargetSpec.parse("det:4"), (AtomScheme.pairs(),) * 4, 70000,
        references=("Det4Twelve",),
    ),
    "det4-search": ExperimentConfig(
        "det4-search", TargetSpec.parse("det:4"), (AtomScheme.pairs(),) * 4, 70000, (0,),
        search=SearchConfig(restarts=4, rounds=10, target_terms=12),
    ),
    "planted-demo": ExperimentConfig(
        "planted-demo", TargetSpec.parse("det:3"), (AtomScheme.pairs(),) * 3, 3000, (0,),
        search=replace(_DET3_SEARCH, restarts=4),
    ),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# -- rendering ----------------------------------------------------------------

def _naming(shape: Shape):
    """Variable names per mode and for the output, inferred from the shape."""
    dims, q = shape.dims, shape.order
    if shape.out_dim == 1 and all(d == q for d in dims) and q > 1:
        return [[f"A_{{{i + 1},{j + 1}}}" for i in range(q)] for j in range(q)], None
    if q == 2:
        a, b, c = dims[0], dims[1], shape.out_dim
        n2 = a * c / b
        n = round(math.sqrt(n2)) if n2 > 0 else 0
        if n >= 1 and n * n == a * c // b and a % n == 0 and c % n == 0 and (a * c) % b == 0:
            m, p = a // n, c // n
            if m * p == b:
                A = [f"A_{{{i + 1},{j + 1}}}" for i in range(n) for j in range(m)]
                B = [f"B_{{{j + 1},{k + 1}}}" for j in range(m) for k in range(p)]
                C = [None] * (n * p)
                for i in range(n):
                    for k in range(p):
                        C[i + n * k] = f"C_{{{i + 1},{k + 1}}}"
                return [A, B], (C if shape.out_dim > 1 else None)
    modes = [[f"x{j + 1}_{{{i + 1}}}" for i in range(d)] for j, d in enumerate(dims)]
    out = None if shape.out_dim == 1 else [f"e_{{{c + 1}}}" for c in range(shape.out_dim)]
    return modes, out


def _render_form(coeffs, names) -> tuple[str, bool]:
    parts = []
    for c, name in zip(coeffs, names):
        if c == 0:
            continue
        mag = abs(c)
        body = name if mag == 1 else f"{format_rational(Fraction(mag)).removesuffix('/1')}*{name}"
        parts.append(("-" if c < 0 else "+") + body)
    if not parts:
        return "0", True
    text = "".join(parts)
    text = text[1:] if text[0] == "+" else text
    return text, len(parts) == 1 and abs(next(c for c in coeffs if c != 0)) == 1


def _coefficient_prefix(c: Fraction) -> str:
    sign = "-" if c < 0 else "+"
    mag = abs(c)
    return sign if mag == 1 else f"{sign}{format_rational(mag).removesuffix('/1')} "


def render_formula(decomp: CPDecomposition) -> str:
    """One line per nonzero term, e.g. ``+1/2 (A_{1,1}-A_{2,1})A_{3,2}...``."""
    mode_names, out_names = _naming(decomp.shape)
    lines = []
    for term in decomp.terms:
        if term.is_zero():
            continue
        body = ""
        for f, names in zip(term.factors, mode_names):
            text, bare = _render_form(f.coeffs, names)
            if bare and not text.startswith("-"):
                body += text
            else:
                body += f"({text})"
        if out_names is None:
            lines.append(_coefficient_prefix(term.coefficient * term.output_vector[0]) + body)
        else:
            out_text, _ = _render_form(term.output_vector, out_names)
            lines.append(_coefficient_prefix(term.coefficient) + body + " -> " + out_text)
    return "\n".join(lines)


# -- resources ----------------------------------------------------------------

@dataclass(frozen=True)
class ResourceEstimate:
    candidate_count: int
    sample_count: int
    design_matrix_bytes: int
    warning: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _human_bytes(n: int) -> str:
    for unit, size in (("GB", 10**9), ("MB", 10**6), ("KB", 10**3)):
        if n >= size:
            return f"{n / size:.1f} {unit}"
    return f"{n} B"


def estimate_resources(config: ExperimentConfig) -> ResourceEstimate:
    """Dense design size ``N * k * 8`` bytes, with a warning over budget."""
    shape = build_target(config.target).shape if config.target.kind is TargetKind.FROM_FILE else None
    dims = shape.dims if shape else _spec_dims(config.target)
    k = math.prod(_scheme_size(s, d) for s, d in zip(config.schemes, dims))
    nbytes = config.samples * k * 8
    warning = None
    if nbytes > config.memory_budget:
        warning = (f"design matrix needs {_human_bytes(nbytes)}, above the budget of "
                   f"{_human_bytes(config.memory_budget)}; heavy mode required")
    return ResourceEstimate(k, config.samples, nbytes, warning)


def _spec_dims(spec: TargetSpec) -> tuple[int, ...]:
    if spec.kind is TargetKind.DETERMINANT:
        n = spec.params[0]
        return (n,) * n
    n, m, p = spec.params
    return (n * m, m * p)


def _scheme_size(scheme: AtomScheme, dim: int) -> int:
    if scheme.kind.value == "entries":
        return dim
    if scheme.kind.value == "pairs":
        return dim * dim
    return len(scheme.forms)


# -- search -------------------------------------------------------------------

@dataclass
class Candidate:
    support: tuple[int, ...]
    decomposition: CPDecomposition
    lam: float | None
    residual: float
    refined: bool = False

    @property
    def size(self) -> int:
        return len(self.support)


class _Certifier:
    """Refit, snap and exactly verify supports, memoized per support."""

    def __init__(self, problem: GramProblem, dictionary: CandidateDictionary, target: DenseTensor,
                 rcfg: RationalizeConfig, span_rtol: float):
        self.problem = problem
        self.dictionary = dictionary
        self.target = target
        self.rcfg = rcfg
        self.span_rtol = span_rtol
        self.memo: dict[tuple[int, ...], Candidate | None] = {}
        self.calls = 0

    def __call__(self, support, lam=None, refined=False) -> Candidate | None:
        S = tuple(sorted(int(i) for i in support))
        if S in self.memo:
            return self.memo[S]
        self.calls += 1
        out = None
        if S and self.problem.represents(S, self.span_rtol):
            try:
                X = refit_least_squares(self.problem.D, self.problem.Y, S)
                Xq = np.full(X.shape, Fraction(0), dtype=object)
                Xq[list(S)] = rationalize_matrix(X[list(S)], self.rcfg)
                decomp = decomposition_from_solution(self.dictionary, Xq, self.target.shape)
            except (RankDeficientError, RationalizeError, ValueError):
                decomp = None
            if decomp is not None and expand_sum(decomp) == self.target:
                out = Candidate(S, decomp, lam, self.problem.residual(X), refined)
        self.memo[S] = out
        return out


def _independent_support(problem: GramProblem, support, scores) -> list[int]:
    """Greedy linearly independent subset, largest scores first."""
    Bn, _, _ = problem.basis()
    chosen: list[int] = []
    Q = np.zeros((Bn.shape[0], 0))
    for i in sorted(support, key=lambda i: (-scores[i], i)):
        v = Bn[:, i] - Q @ (Q.T @ Bn[:, i])
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            chosen.append(int(i))
            Q = np.column_stack([Q, v / nv])
    return sorted(chosen)


@dataclass
class SearchOutcome:
    best: Candidate | None
    fallback_residual: float | None
    fallback_penalty: int | None
    converged: bool
    certified_supports: int


def search_problem(problem: GramProblem, dictionary: CandidateDictionary, target: DenseTensor,
                   solver: SolverConfig, rcfg: RationalizeConfig, search: SearchConfig,
                   rng: np.random.Generator) -> SearchOutcome:
    """Reweighted path search with restarts and exchange refinement."""
    certify = _Certifier(problem, dictionary, target, rcfg, search.span_rtol)
    best: Candidate | None = None
    converged = True
    fallback = None
    k = problem.k

    def better(c: Candidate | None) -> bool:
        return c is not None and (best is None or c.size < best.size)

    def done() -> bool:
        return best is not None and search.target_terms is not None and best.size <= search.target_terms

    for restart in range(search.restarts):
        if restart == 0:
            w = np.ones(k)
        else:
            w = np.exp(rng.uniform(-search.weight_spread, search.weight_spread, k))
        local: Candidate | None = None
        for rnd in range(search.rounds):
            path = lambda_path_fit(problem.D, problem.Y, solver, weights=w, problem=problem)
            converged &= all(s.converged for s in path)
            selected = None
            path_best: Candidate | None = None
            for sol in path:
                if not sol.row_support:
                    continue
                S = _independent_support(problem, sol.row_support, np.linalg.norm(sol.scaled, axis=1))
                if not problem.represents(S, search.span_rtol):
                    continue
                if selected is None:
                    selected = sol
                if path_best is not None and len(S) > path_best.size:
                    continue
                cand = certify(S, sol.lam)
                if cand is not None and (path_best is None or cand.size < path_best.size
                                         or (cand.size == path_best.size and sol.lam < path_best.lam)):
                    path_best = cand
            last = path[-1]
            if fallback is None or last.residual_fro < fallback.residual_fro:
                fallback = last
            if path_best is not None and (local is None or path_best.size < local.size):
                local = path_best
            if better(path_best):
                best = path_best
            if done():
                break
            src = selected if selected is not None else last
            eps = search.eps_schedule[min(rnd, len(search.eps_schedule) - 1)]
            mags = np.linalg.norm(src.X, axis=1)
            w = 1.0 / (problem.scale * (mags + eps * max(mags.max(), 1e-300)))
            w /= w.min()
        if done():
            break
        if local is not None and search.refine_depth > 0:
            S = refine_support(problem, local.support, search.refine_depth, search.span_rtol,
                               search.refine_max_support)
            if len(S) < local.size:
                cand = certify(S, local.lam, refined=True)
                if better(cand):
                    best = cand
        if done():
            break
    return SearchOutcome(
        best,
        None if fallback is None else fallback.residual_fro,
        None if fallback is None else fallback.penalty_count,
        converged,
        certify.calls,
    )


def _check_budget(config: ExperimentConfig) -> None:
    est = estimate_resources(config)
    if est.warning and not config.heavy:
        raise HeavyConfigError(est.warning + " (pass --heavy to run anyway)")


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run a preset or custom configuration; deterministic given the config."""
    start = time.perf_counter()
    target = build_target(config.target)
    if config.is_verification:
        certs = [verify_exact(reference_decomposition(name), target, name) for name in config.references]
        ok = all(c.verified for c in certs)
        first = reference_decomposition(config.references[0])
        rep = ExperimentReport(
            config.name, str(config.target), 0, 0, ok, min(c.term_count for c in certs), None, None, None,
            "\n\n".join(c.formula_text for c in certs), certifications=certs,
            decomposition=decomposition_to_json(first) if ok else None,
        )
        rep.timing = time.perf_counter() - start
        return rep
    _check_budget(config)
    dictionary = CandidateDictionary.build(target.shape.dims, list(config.schemes))
    k = dictionary.total_candidates
    if config.samples <= k:
        raise ValueError(f"need more samples than candidates (N={config.samples}, k={k})")
    best = None
    best_seed = None
    tried = []
    fallback = (None, None)
    converged = True
    for seed in config.seeds:
        tried.append(seed)
        samples = sample_inputs(target.shape, config.samples, config.distribution, seed, config.bounds)
        D, Y = load_or_build_design(target, dictionary, samples, config.cache_dir, config.threads)
        problem = GramProblem(D, Y, config.solver.normalize_columns)
        rng = np.random.default_rng([seed, 0x7E57])
        out = search_problem(problem, dictionary, target, config.solver, config.rationalize, config.search, rng)
        converged &= out.converged
        if out.best is not None and (best is None or out.best.size < best.size):
            best, best_seed = out.best, seed
        if fallback[0] is None and out.fallback_residual is not None:
            fallback = (out.fallback_residual, out.fallback_penalty)
        if best is not None and config.search.target_terms is not None and best.size <= config.search.target_terms:
            break
    if best is None:
        rep = ExperimentReport(config.name, str(config.target), k, config.samples, False, None, fallback[1],
                               fallback[0], None, "", None, tuple(tried), converged=converged)
    else:
        rep = ExperimentReport(
            config.name, str(config.target), k, config.samples, True, best.decomposition.term_count,
            best.size, best.residual, best.lam, render_formula(best.decomposition), best_seed, tuple(tried),
            best.refined, converged, decomposition_to_json(best.decomposition),
        )
    rep.timing = time.perf_counter() - start
    return rep


def run_verification_suite() -> list[CertificationReport]:
    """Certify every stored reference decomposition against its target."""
    cases = [
        ("Strassen2", "mm:2,2,2"),
        ("ClassicalMM", "mm:2,2,2"),
        ("DerksenDet3", "det:3"),
        ("LassoDet3", "det:3"),
        ("Det4Twelve", "det:4"),
    ]
    return [verify_exact(reference_decomposition(name), build_target(TargetSpec.parse(t)), name)
            for name, t in cases]


# -- planted instances --------------------------------------------------------

PLANTED_VALUES = (Fraction(-1), Fraction(-1, 2), Fraction(1, 2), Fraction(1))


def _candidate_vectors(dictionary: CandidateDictionary) -> np.ndarray:
    """Flattened float tensors of all candidates, one per column."""
    mats = [m.matrix() for m in dictionary.modes]
    out = mats[0]
    for M in mats[1:]:
        out = np.einsum("ai,bj->abij", out.reshape(out.shape[0], -1), M).reshape(
            out.shape[0] * M.shape[0], -1)
    return out.T


def planted_instance(dictionary: CandidateDictionary, rng: np.random.Generator, size: int = 5,
                     values=PLANTED_VALUES, vectors: np.ndarray | None = None):
    """Random ``size``-term combination of linearly independent candidates.

    Returns ``(target, support, coefficients)`` with a scalar output.
    """
    vectors = _candidate_vectors(dictionary) if vectors is None else vectors
    k = dictionary.total_candidates
    while True:
        support = np.sort(rng.choice(k, size, replace=False))
        if np.linalg.matrix_rank(vectors[:, support]) == size:
            break
    coeffs = [values[int(i)] for i in rng.integers(0, len(values), size)]
    shape = Shape(dictionary.dims, 1)
    terms = [dictionary.candidate(int(i), (c,)) for i, c in zip(support, coeffs)]
    target = expand_sum(CPDecomposition(shape, tuple(terms)))
    return target, tuple(int(i) for i in support), tuple(coeffs)


@dataclass
class PlantedResult:
    support: tuple[int, ...]
    coefficients: tuple[Fraction, ...]
    verified: bool
    term_count: int | None
    support_recovered: bool


def run_planted_trials(count: int = 50, seed: int = 0, size: int = 5,
                       config: ExperimentConfig | None = None) -> list[PlantedResult]:
    """Planted recovery on a shared design: one sample set, many targets."""
    config = config or replace(PRESETS["planted-demo"], search=replace(PRESETS["planted-demo"].search,
                                                                       target_terms=size))
    base = build_target(config.target)
    dictionary = CandidateDictionary.build(base.shape.dims, list(config.schemes))
    samples = sample_inputs(base.shape, config.samples, config.distribution, config.seeds[0], config.bounds)
    D, Y = load_or_build_design(base, dictionary, samples, config.cache_dir, config.threads)
    problem = GramProblem(D, Y, config.solver.normalize_columns)
    vectors = _candidate_vectors(dictionary)
    rng = np.random.default_rng(seed)
    results = []
    from .dictionary import assemble_target

    for _ in range(count):
        target, support, coeffs = planted_instance(dictionary, rng, size, vectors=vectors)
        sub = problem.retarget(assemble_target(target, samples))
        out = search_problem(sub, dictionary, target, config.solver, config.rationalize, config.search,
                             np.random.default_rng(rng.integers(2**63)))
        got = out.best
        results.append(PlantedResult(
            support, coeffs, got is not None and got.size <= size,
            None if got is None else got.size, got is not None and got.support == support,
        ))
    return results
