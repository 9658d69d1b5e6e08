"""Approximate-Hessian builders, sample-size rules, and the sandwich checker.

Every builder returns a symmetric d x d surrogate H for the true Hessian,
symmetrized as (M + M^T)/2 after assembly.  The quality certificate used
throughout is the two-sided spectral sandwich

    (1 - eps0) H <= hess F(x) <= (1 + eps0) H

which `check_spectral_sandwich` evaluates exactly through the generalized
eigenvalues of (hess F, H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import rng
from .errors import DomainError, NotPositiveDefinite, ShapeError
from .problems import FiniteSumObjective
from .sketch import SketchOperator, apply_sketch

EXACT = "exact"
SKETCHED = "sketched"
SUBSAMPLED = "subsampled"
REGULARIZED = "regularized_subsampled"
NEWSAMP = "newsamp"


@dataclass
class ApproxHessian:
    """A symmetric surrogate Hessian plus construction metadata."""

    matrix: np.ndarray
    method: str
    meta: dict

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SandwichReport:
    """Largest one-sided violations of the spectral sandwich at level eps0."""

    eps_lower: float
    eps_upper: float
    holds: bool
    target: float

    @property
    def max_eps(self) -> float:
        return max(self.eps_lower, self.eps_upper)


def _symmetrized(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def sketched_hessian(B: np.ndarray, S: SketchOperator) -> ApproxHessian:
    """H = (S B)^T (S B) for a Hessian factor B with B^T B = hess F."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != S.m:
        raise ShapeError(f"operator expects {S.m} rows, factor has shape {B.shape}")
    SB = apply_sketch(S, B)
    M = _symmetrized(SB.T @ SB)
    meta = {"sketch_kind": S.kind, "size": S.s, "seed": S.seed}
    return ApproxHessian(M, SKETCHED, meta)


def _draw_pool(obj: FiniteSumObjective, x, size: int, seed: int, exhaustive: bool):
    pool = obj.hessian_sample_pool(x)
    if exhaustive:
        return pool
    if size < 1:
        raise ShapeError(f"sample size must be >= 1, got {size}")
    if pool.size == 0:
        return pool
    gen = rng.generator(seed)
    return pool[gen.integers(0, pool.size, size=size)]


def subsampled_hessian(
    obj: FiniteSumObjective,
    x: np.ndarray,
    size: int,
    seed: int,
    exhaustive: bool = False,
) -> ApproxHessian:
    """Mean of `size` per-sample loss Hessians (uniform, with replacement)
    plus the objective's split-out regularizer Hessian.

    With exhaustive=True every pool index is used exactly once, which
    reproduces the full Hessian; this mode exists for testing only.
    """
    x = np.asarray(x, dtype=float)
    idx = _draw_pool(obj, x, size, seed, exhaustive)
    if idx.size:
        root = obj.hessian_term_root(idx, x)
        M = root.T @ root / idx.size
    else:
        M = np.zeros((obj.d, obj.d))
    M = _symmetrized(M + obj.regularizer_hessian())
    meta = {"size": int(idx.size), "seed": seed, "exhaustive": exhaustive}
    return ApproxHessian(M, SUBSAMPLED, meta)


def regularized_subsampled_hessian(
    obj: FiniteSumObjective,
    x: np.ndarray,
    size: int,
    alpha: float,
    seed: int,
    exhaustive: bool = False,
) -> ApproxHessian:
    """Subsampled Hessian plus alpha * I, so lambda_min >= alpha is guaranteed."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    base = subsampled_hessian(obj, x, size, seed, exhaustive=exhaustive)
    M = base.matrix + alpha * np.eye(obj.d)
    meta = dict(base.meta, alpha=float(alpha))
    return ApproxHessian(M, REGULARIZED, meta)


def newsamp_hessian(
    obj: FiniteSumObjective,
    x: np.ndarray,
    size: int,
    r: int,
    seed: int,
    exhaustive: bool = False,
) -> ApproxHessian:
    """Subsampled Hessian with its eigenvalue tail floored.

    The subsampled matrix is eigendecomposed; every eigenvalue beyond the
    r largest is replaced by the (r+1)-th largest, so the top-r curvature is
    kept and the tail is lifted to a common floor.
    """
    if not 0 <= r < obj.d:
        raise DomainError(f"need 0 <= r < d={obj.d}, got r={r}")
    base = subsampled_hessian(obj, x, size, seed, exhaustive=exhaustive)
    w, V = np.linalg.eigh(base.matrix)  # ascending
    floor = w[obj.d - r - 1]  # (r+1)-th largest
    w_new = w.copy()
    w_new[: obj.d - r] = floor
    M = _symmetrized((V * w_new) @ V.T)
    meta = dict(base.meta, rank=int(r), eigenvalue_floor=float(floor))
    return ApproxHessian(M, NEWSAMP, meta)


def subsampled_gradient(
    obj: FiniteSumObjective, x: np.ndarray, size: int, seed: int
) -> np.ndarray:
    """Mean of `size` uniformly sampled per-sample loss gradients plus the
    regularizer gradient."""
    if size < 1:
        raise ShapeError(f"sample size must be >= 1, got {size}")
    x = np.asarray(x, dtype=float)
    gen = rng.generator(seed)
    idx = gen.integers(0, obj.n, size=size)
    return obj.loss_gradient_mean(idx, x) + obj.regularizer_gradient(x)


def uniform_sample_size(
    K: float, sigma_or_beta: float, d: int, delta: float, eps0: float
) -> int:
    """Uniform-sampling size ceil(16 K^2 log(2d/delta) / (c^2 eps0^2)).

    `sigma_or_beta` is the strong-convexity floor in the plain rule; for the
    deviation-target form pass beta there and eps0 = 1.
    """
    if K <= 0 or sigma_or_beta <= 0 or d < 1:
        raise DomainError("K, sigma_or_beta must be positive and d >= 1")
    if not 0.0 < delta < 1.0 or not 0.0 < eps0 <= 1.0:
        raise DomainError(f"need delta in (0,1) and eps0 in (0,1], got {delta}, {eps0}")
    raw = 16.0 * K**2 * math.log(2.0 * d / delta) / (sigma_or_beta**2 * eps0**2)
    return int(math.ceil(raw))


def _require_spd(M: np.ndarray, label: str) -> None:
    if not np.allclose(M, M.T, atol=1e-8 * max(1.0, abs(M).max())):
        raise NotPositiveDefinite(f"{label} is not symmetric")
    try:
        np.linalg.cholesky(_symmetrized(M))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{label} is not positive definite") from exc


def check_spectral_sandwich(
    H: ApproxHessian | np.ndarray, trueH: np.ndarray, eps0: float
) -> SandwichReport:
    """Exact eigenvalue check of (1-eps) H <= trueH <= (1+eps) H.

    eps_lower / eps_upper are the violations of the two sides (clamped at
    zero); the report holds when their maximum is within eps0.
    """
    M = H.matrix if isinstance(H, ApproxHessian) else np.asarray(H, dtype=float)
    trueH = np.asarray(trueH, dtype=float)
    if M.shape != trueH.shape:
        raise ShapeError(f"shape mismatch {M.shape} vs {trueH.shape}")
    _require_spd(M, "H")
    _require_spd(trueH, "trueH")
    mus = scipy.linalg.eigh(_symmetrized(trueH), _symmetrized(M), eigvals_only=True)
    eps_lower = float(max(0.0, 1.0 - mus[0]))
    eps_upper = float(max(0.0, mus[-1] - 1.0))
    return SandwichReport(
        eps_lower=eps_lower,
        eps_upper=eps_upper,
        holds=max(eps_lower, eps_upper) <= eps0,
        target=eps0,
    )


# Closed-form sandwich levels predicted for the regularized and tail-floored
# subsampled constructions, as functions of the sampling deviation bound beta
# (||hess F - H_sub|| <= beta), the regularizer alpha or the (r+1)-th
# eigenvalue, and the strong-convexity floor sigma.


def epsilon0_regularized_branches(
    alpha: float, beta: float, sigma: float
) -> tuple[float, float]:
    if alpha <= 0 or beta <= 0 or sigma <= 0:
        raise DomainError("alpha, beta, sigma must be positive")
    if beta >= sigma + alpha:
        raise DomainError(
            f"formula needs beta < sigma + alpha, got beta={beta}, "
            f"sigma+alpha={sigma + alpha}"
        )
    upper = (beta - alpha) / (sigma + alpha - beta)
    lower = (alpha + beta) / (sigma + alpha + beta)
    return upper, lower


def epsilon0_regularized(alpha: float, beta: float, sigma: float) -> float:
    return max(epsilon0_regularized_branches(alpha, beta, sigma))


def epsilon0_newsamp_branches(
    beta: float, lam_r1: float, sigma: float
) -> tuple[float, float]:
    if beta <= 0 or lam_r1 <= 0 or sigma <= 0:
        raise DomainError("beta, lam_r1, sigma must be positive")
    if beta >= lam_r1:
        raise DomainError(f"formula needs beta < lam_r1, got {beta} >= {lam_r1}")
    upper = beta / (lam_r1 - beta)
    lower = (2.0 * beta + lam_r1) / (sigma + 2.0 * beta + lam_r1)
    return upper, lower


def epsilon0_newsamp(beta: float, lam_r1: float, sigma: float) -> float:
    return max(epsilon0_newsamp_branches(beta, lam_r1, sigma))
