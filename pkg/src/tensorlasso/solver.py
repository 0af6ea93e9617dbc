"""Sparse regression engines for selecting rank-1 candidates.

All fits minimize the squared-loss form

    1/2 ||Y - D X||_F^2 + lam * sum_i w_i ||X_i||_2

by block coordinate descent on the Gram matrix (cyclic, ascending index).
With ``normalize_columns`` the problem is solved for ``Z = diag(||D_i||) X``
and mapped back, so fitted values and supports do not depend on the column
scaling of ``D``.  Row supports are read from the RMS-scaled coefficients
``||D_i|| / sqrt(N) * X_i`` at threshold ``support_threshold`` and rows
outside the support are set to zero.

Scalar targets (``d = 1``) reduce the block update to soft thresholding;
:func:`lasso_cd` is that case with a vector interface.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

__all__ = [
    "SolverConfig",
    "LassoSolution",
    "GroupSolution",
    "RankDeficientError",
    "GramProblem",
    "soft_threshold",
    "lasso_cd",
    "group_lasso_bcd",
    "lambda_max",
    "lambda_path_fit",
    "refit_least_squares",
    "group_penalty_F",
    "kkt_residual",
    "reweighted",
    "refine_support",
    "write_trace_csv",
]


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.0
    tol: float = 1e-8
    max_iter: int | None = None
    normalize_columns: bool = True
    support_threshold: float = 1e-6
    n_lambdas: int = 30
    min_ratio: float = 1e-4

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.min_ratio < 1:
            raise ValueError("min_ratio must lie in (0, 1)")
        if self.n_lambdas < 1:
            raise ValueError("n_lambdas must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def sweeps_for(self, k: int) -> int:
        return self.max_iter if self.max_iter is not None else 10 * k

    def with_lambda(self, lam: float) -> "SolverConfig":
        return replace(self, lam=float(lam))


@dataclass
class LassoSolution:
    x: np.ndarray
    sweeps_used: int
    objective_value: float
    kkt_residual: float
    converged: bool
    trace: np.ndarray | None = None


@dataclass
class GroupSolution:
    """``X`` is zero off ``row_support``; ``X_fit`` is the iterate before
    thresholding and ``scaled`` is ``X_fit`` times the RMS column norms.
    ``kkt_residual`` and ``objective_value`` refer to the problem actually
    solved (normalized columns, weighted penalty)."""

    X: np.ndarray
    row_support: tuple[int, ...]
    penalty_count: int
    residual_fro: float
    lam: float = 0.0
    converged: bool = True
    sweeps_used: int = 0
    kkt_residual: float = 0.0
    objective_value: float = 0.0
    scaled: np.ndarray | None = field(default=None, repr=False)
    trace: np.ndarray | None = field(default=None, repr=False)
    X_fit: np.ndarray | None = field(default=None, repr=False)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message, condition: float):
        super().__init__(message)
        self.condition = condition


def soft_threshold(z: float, t: float) -> float:
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    return math.copysign(max(abs(z) - t, 0.0), z) if z != 0 else 0.0


def _as_2d(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs contain non-finite values")


class GramProblem:
    """Precomputed Gram quantities for repeated fits on one ``(D, Y)``."""

    def __init__(self, D, Y, normalize_columns: bool = True):
        D = np.asarray(D, dtype=float)
        Y = _as_2d(Y)
        if D.ndim != 2 or D.shape[0] != Y.shape[0]:
            raise ValueError(f"shape mismatch: D {D.shape}, Y {Y.shape}")
        _check_finite(D, Y)
        self.D = D
        self.Y = Y
        self.N, self.k = D.shape
        self.d = Y.shape[1]
        G = D.T @ D
        if normalize_columns:
            norms = np.sqrt(np.diag(G).copy())
            scale = np.where(norms > 0, norms, 1.0)
        else:
            scale = np.ones(self.k)
        self.scale = scale
        self.rms = scale / math.sqrt(self.N) if normalize_columns else np.ones(self.k)
        self.H = np.ascontiguousarray(G / np.outer(scale, scale))
        self.C = np.ascontiguousarray((D.T @ Y) / scale[:, None])
        self.yy = float(np.sum(Y * Y))
        self.normalize = normalize_columns
        self._basis = None
        self._span = None

    def lambda_max(self, weights=None) -> float:
        norms = np.linalg.norm(self.C, axis=1)
        if weights is None:
            return float(norms.max()) if self.k else 0.0
        w = np.asarray(weights, dtype=float)
        pos = w > 0
        return float((norms[pos] / w[pos]).max()) if pos.any() else 0.0

    def fit(self, lam, *, tol=1e-8, max_sweeps=None, weights=None, start=None,
            support_threshold=1e-6, trace=False) -> GroupSolution:
        k, d = self.k, self.d
        w = np.ones(k) if weights is None else np.ascontiguousarray(weights, dtype=float)
        Z = np.zeros((k, d)) if start is None else np.array(start, dtype=float, order="C")
        R = np.ascontiguousarray(self.C - self.H @ Z) if start is not None else self.C.copy()
        max_sweeps = 10 * k if max_sweeps is None else int(max_sweeps)
        buf = np.empty(max_sweeps if trace else 0)
        sweeps, converged, kkt = kernels.group_bcd(self.H, self.C, Z, R, w, float(lam), max_sweeps, float(tol), buf)
        objective = 0.5 * self.yy - 0.5 * float(np.sum(Z * (self.C + R))) + lam * float(w @ np.linalg.norm(Z, axis=1))
        return self._solution(Z, float(lam), bool(converged), int(sweeps), float(kkt), objective,
                              support_threshold, (0.5 * self.yy + buf[:sweeps]) if trace else None)

    def _solution(self, Z, lam, converged, sweeps, kkt, objective, tau, trace=None) -> GroupSolution:
        X = Z / self.scale[:, None]
        scaled = Z * (self.rms / self.scale)[:, None]
        support = tuple(int(i) for i in np.flatnonzero(np.abs(scaled).sum(axis=1) > tau))
        X_out = np.zeros_like(X)
        X_out[list(support)] = X[list(support)]
        return GroupSolution(
            X=X_out,
            row_support=support,
            penalty_count=len(support),
            residual_fro=self.residual(X_out),
            lam=lam,
            converged=converged,
            sweeps_used=sweeps,
            kkt_residual=kkt,
            objective_value=objective,
            scaled=scaled,
            trace=trace,
            X_fit=X,
        )

    def residual(self, X) -> float:
        rows = np.flatnonzero(np.any(X != 0, axis=1))
        fit = self.D[:, rows] @ X[rows] if len(rows) else 0.0
        return float(np.linalg.norm(self.Y - fit))

    def retarget(self, Y) -> "GramProblem":
        """Same design, new target; reuses the Gram matrix and its eigenbasis."""
        Y = _as_2d(Y)
        if Y.shape[0] != self.N:
            raise ValueError(f"target has {Y.shape[0]} rows, design has {self.N}")
        _check_finite(Y)
        self._eig()
        other = object.__new__(GramProblem)
        other.__dict__.update(self.__dict__)
        other.Y = Y
        other.d = Y.shape[1]
        other.C = np.ascontiguousarray((self.D.T @ Y) / self.scale[:, None])
        other.yy = float(np.sum(Y * Y))
        other._span = None
        return other

    # -- span structure, for exchange moves ---------------------------------

    def _eig(self, rel=1e-10):
        if self._basis is None:
            evals, evecs = np.linalg.eigh(self.H)
            keep = evals > rel * max(evals.max(), 1e-300)
            V, root = evecs[:, keep], np.sqrt(evals[keep])
            B = (V * root).T
            norms = np.linalg.norm(B, axis=0)
            Bn = B / np.where(norms > 0, norms, 1.0)
            self._basis = (V, root, Bn, Bn.T @ Bn)
        return self._basis

    def basis(self):
        """``(B, Yc, out_of_span)`` with ``B^T B = H`` and ``B^T Yc = C``.

        ``out_of_span`` estimates the norm of the part of ``Y`` outside the
        column space of ``D``; it is computed by cancellation and is only
        accurate to about ``1e-7 ||Y||``.
        """
        if getattr(self, "_span", None) is None:
            V, root, Bn, _ = self._eig()
            Yc = (V.T @ self.C) / root[:, None]
            out = max(self.yy - float(np.sum(Yc * Yc)), 0.0)
            self._span = (Bn, Yc, math.sqrt(out))
        return self._span

    def represents(self, support, rtol: float = 1e-9) -> bool:
        """Whether ``Y`` lies (numerically) in the span of the given
        linearly independent columns."""
        Bn, Yc, outside = self.basis()
        scale = max(math.sqrt(self.yy), 1e-300)
        if outside > max(rtol, _OUTSIDE_RTOL) * scale:
            return False
        return _in_span(Bn, Yc, sorted(support), rtol * scale)


def lambda_max(D, Y) -> float:
    """Smallest lambda whose solution is zero: max row norm of ``D^T Y``."""
    G = np.asarray(D, dtype=float).T @ _as_2d(Y)
    return float(np.linalg.norm(G, axis=1).max()) if G.size else 0.0


def group_lasso_bcd(D, Y, config: SolverConfig, weights=None, start=None,
                    problem: GramProblem | None = None, trace=False) -> GroupSolution:
    """Block coordinate descent for the l2,1-penalized fit at ``config.lam``."""
    problem = problem or GramProblem(D, Y, config.normalize_columns)
    Z0 = None if start is None else np.asarray(start, dtype=float) * problem.scale[:, None]
    return problem.fit(config.lam, tol=config.tol, max_sweeps=config.sweeps_for(problem.k),
                       weights=weights, start=Z0, support_threshold=config.support_threshold, trace=trace)


def lasso_cd(D, y, config: SolverConfig, trace=False) -> LassoSolution:
    """Cyclic coordinate descent for ``1/2 ||y - Dx||^2 + lam ||x||_1``.

    Non-convergence is reported through ``converged``; the best iterate is
    still returned.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("lasso_cd expects a vector target")
    sol = group_lasso_bcd(D, y[:, None], config, trace=trace)
    return LassoSolution(sol.X[:, 0].copy(), sol.sweeps_used, sol.objective_value,
                         sol.kkt_residual, sol.converged, sol.trace)


def lambda_path_fit(D, Y, config: SolverConfig, weights=None,
                    problem: GramProblem | None = None) -> list[GroupSolution]:
    """Geometric lambda grid from the all-zero point down to ``min_ratio``,
    warm-starting each fit from the previous one."""
    problem = problem or GramProblem(D, Y, config.normalize_columns)
    lmax = problem.lambda_max(weights)
    if lmax == 0.0:
        return [problem._solution(np.zeros((problem.k, problem.d)), 0.0, True, 0, 0.0, 0.5 * problem.yy,
                                  config.support_threshold)]
    grid = lmax * np.geomspace(1.0, config.min_ratio, config.n_lambdas)
    grid[0] = lmax * (1 + 1e-12)
    out = []
    Z = None
    sweeps = config.sweeps_for(problem.k)
    for lam in grid:
        sol = problem.fit(lam, tol=config.tol, max_sweeps=sweeps, weights=weights, start=Z,
                          support_threshold=config.support_threshold)
        Z = sol.scaled * (problem.scale / problem.rms)[:, None]
        out.append(sol)
    return out


def refit_least_squares(D, Y, support, cond_limit: float = 1e10) -> np.ndarray:
    """Ordinary least squares on the supported columns, zeros elsewhere."""
    D = np.asarray(D, dtype=float)
    Y = _as_2d(Y)
    support = sorted(int(i) for i in support)
    if not support:
        raise ValueError("support is empty")
    A = D[:, support]
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("support contains an all-zero column", math.inf)
    sv = np.linalg.svd(A / norms, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else math.inf
    if len(support) > A.shape[0] or cond > cond_limit:
        raise RankDeficientError(f"restricted design is rank deficient (condition {cond:.3g})", cond)
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    X = np.zeros((D.shape[1], Y.shape[1]))
    X[support] = coef
    return X


def group_penalty_F(X, tau: float = 0.0) -> int:
    """Number of rows whose absolute sum exceeds ``tau``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    X = _as_2d(X)
    return int(np.count_nonzero(np.abs(X).sum(axis=1) > tau))


def kkt_residual(D, Y, X, lam: float, weights=None) -> float:
    """Optimality residual of ``X`` for the unnormalized weighted problem."""
    D = np.asarray(D, dtype=float)
    Y = _as_2d(Y)
    X = _as_2d(X)
    R = np.ascontiguousarray(D.T @ (Y - D @ X))
    w = np.ones(D.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    return kernels.kkt(np.ascontiguousarray(X), R, np.ascontiguousarray(w), float(lam))


def reweighted(sol: GroupSolution, eps: float) -> np.ndarray:
    """Majorization weights ``1 / (||scaled row|| + eps)`` for the row count."""
    return 1.0 / (np.linalg.norm(sol.scaled, axis=1) + eps)


# -- exchange refinement ------------------------------------------------------

_OUTSIDE_RTOL = 1e-6


def _in_span(B, Yc, S, tol) -> bool:
    if not S:
        return float(np.linalg.norm(Yc)) <= tol
    Q, Rm = np.linalg.qr(B[:, S])
    if np.min(np.abs(np.diag(Rm))) <= 1e-9 * max(np.abs(np.diag(Rm)).max(), 1e-300):
        return False
    res = Yc - Q @ (Q.T @ Yc)
    return float(np.linalg.norm(res)) <= tol


def _projected(B, Yc, BtB, keep):
    """Residual of Yc and Gram of unit columns after projecting out ``keep``."""
    if keep:
        Q, _ = np.linalg.qr(B[:, keep])
        QB = Q.T @ B
        R = Yc - Q @ (Q.T @ Yc)
        G = BtB - QB.T @ QB
    else:
        R = Yc
        G = BtB
    n2 = np.clip(np.diag(G).copy(), 0.0, None)
    ok = n2 > 1e-12
    inv = np.zeros_like(n2)
    inv[ok] = 1.0 / np.sqrt(n2[ok])
    U = G * np.outer(inv, inv)
    A = (B.T @ R) - (0 if not keep else (QB.T @ (Q.T @ R)))
    A = A * inv[:, None]
    return R, U, A, ok


def _single_add(R, A, ok, rtol, tol):
    """Columns ``j`` with the projected residual in their span."""
    rr = float(np.sum(R * R))
    if rr <= tol * tol:
        return "done", None
    aa = np.sum(A * A, axis=1)
    hit = np.flatnonzero(ok & (aa >= rr * (1 - rtol)))
    return "cols", hit


def _pair_add(R, U, A, ok, rtol):
    rr = float(np.sum(R * R))
    aa = np.sum(A * A, axis=1)
    AA = A @ A.T
    r1 = rr - aa                               # ||R - u_i u_i^T R||^2
    vn = 1.0 - U * U                           # ||u_j - U_ij u_i||^2
    dot2 = aa[None, :] - 2 * U * AA + (U * U) * aa[:, None]
    good = (dot2 >= r1[:, None] * vn * (1 - rtol)) & (vn > 1e-9) & ok[:, None] & ok[None, :]
    np.fill_diagonal(good, False)
    return np.argwhere(good)


def refine_support(problem: GramProblem, support, depth: int = 2, tol: float = 1e-9,
                   max_support: int = 16) -> list[int]:
    """Shrink a support that represents ``Y`` exactly by exchange moves.

    Repeatedly tries to drop ``m`` rows and add ``m - 1`` others (``m`` up to
    ``depth + 1``) while ``Y`` stays in the span; a floating-point span test
    with relative tolerance ``tol`` decides.  Returns the support unchanged
    when ``Y`` is not represented to begin with.
    """
    Bn, Yc, outside = problem.basis()
    if outside > max(tol, _OUTSIDE_RTOL) * max(math.sqrt(problem.yy), 1e-300):
        return sorted(support)
    BtB = problem._eig()[3]
    abs_tol = tol * max(math.sqrt(problem.yy), 1e-300)
    S = sorted(int(i) for i in support)
    if not _in_span(Bn, Yc, S, abs_tol) or len(S) > max_support:
        return S
    rtol = 1e-10
    improved = True
    while improved and S:
        improved = False
        for m in range(1, depth + 2):
            if m > len(S):
                break
            for drop in itertools.combinations(range(len(S)), m):
                keep = [S[t] for t in range(len(S)) if t not in drop]
                R, U, A, ok = _projected(Bn, Yc, BtB, keep)
                trials = []
                if m == 1:
                    if float(np.linalg.norm(R)) <= abs_tol:
                        trials.append(keep)
                elif m == 2:
                    status, cols = _single_add(R, A, ok, rtol, abs_tol)
                    if status == "done":
                        trials.append(keep)
                    else:
                        trials.extend(keep + [int(j)] for j in cols if int(j) not in keep)
                else:
                    status, cols = _single_add(R, A, ok, rtol, abs_tol)
                    if status == "done":
                        trials.append(keep)
                    else:
                        trials.extend(keep + [int(j)] for j in cols if int(j) not in keep)
                        trials.extend(
                            keep + [int(i), int(j)] for i, j in _pair_add(R, U, A, ok, rtol)
                            if i < j and int(i) not in keep and int(j) not in keep
                        )
                for T in trials:
                    T = sorted(set(T))
                    if len(T) < len(S) and _in_span(Bn, Yc, T, abs_tol):
                        S = T
                        improved = True
                        break
                if improved:
                    break
            if improved:
                break
    return S


def write_trace_csv(path, solution: GroupSolution | LassoSolution) -> None:
    """Per-sweep objective values as CSV (``sweep,objective``)."""
    if solution.trace is None:
        raise ValueError("solution was fitted without trace=True")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep", "objective"])
        for i, v in enumerate(solution.trace, 1):
            writer.writerow([i, repr(float(v))])
