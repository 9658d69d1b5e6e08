"""Approximate-Newton driver with pluggable Hessian builders and inner solves.

The driver iterates x <- x - p with unit step, where p approximately solves
H p = g for the configured Hessian surrogate H and (full or subsampled)
gradient g.  The inner solve must reach the relative residual
||g - H p|| <= (eps1 / kappa) ||g||; the exact mode uses a Cholesky
factorization with iterative refinement, the cg mode runs conjugate
gradients until the target (capped at 10 d iterations, stalls are reported
in the trace rather than raised).

Randomness is drawn from per-iteration child seeds of the run seed, so a
run is bit-reproducible and iterations are independent.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import rng
from .errors import DomainError, NotPositiveDefinite, ShapeError
from .hessian_approx import (
    EXACT,
    NEWSAMP,
    REGULARIZED,
    SKETCHED,
    SUBSAMPLED,
    ApproxHessian,
    newsamp_hessian,
    sketched_hessian,
    subsampled_gradient,
    subsampled_hessian,
)
from .problems import FiniteSumObjective
from .sketch import (
    LEVERAGE_SCORE,
    make_leverage_sketch,
    make_oblivious_sketch,
    recommended_sketch_size,
    tracking_sketch_size,
)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
DIVERGED = "diverged"

GRADIENT_FULL = "full"
GRADIENT_SUBSAMPLED = "subsampled"

INNER_EXACT = "exact"
INNER_CG = "cg"

SCHEDULE_CONSTANT = "constant"
SCHEDULE_LOG_DECAY = "log_decay"

_CG_FLOOR = 1e-12  # relative residual floor when eps1 = 0
_REFINEMENT_PASSES = 2


@dataclass
class SolverConfig:
    """Configuration of one approximate-Newton run.

    `hessian_method` picks the surrogate builder; the sketch_*/sample_*/
    alpha/rank fields parameterize it.  `sample_fraction` resizes the draw to
    a fraction of the current sampling pool (used for the sample-a-share-of-
    support-vectors protocol).  When `sketch_size` is None the sketch size is
    derived from the accuracy target eps0 of the active schedule.
    """

    hessian_method: str = EXACT
    sketch_kind: str | None = None
    sketch_size: int | None = None
    sample_size: int | None = None
    sample_fraction: float | None = None
    alpha: float = 0.0
    rank: int | None = None
    eps0: float = 0.5
    eps0_schedule: str = SCHEDULE_CONSTANT
    gradient_mode: str = GRADIENT_FULL
    gradient_sample_size: int | None = None
    inner: str = INNER_EXACT
    eps1: float = 0.0
    kappa_source: str = "objective_bounds"
    max_iters: int = 100
    grad_tol: float = 1e-8
    divergence_guard: float = 1e8
    seed: int = 0
    store_snapshots: bool = True

    def __post_init__(self):
        if not 0.0 <= self.eps1 < 1.0:
            raise DomainError(f"eps1 must be in [0,1), got {self.eps1}")
        if self.grad_tol <= 0 or self.max_iters < 1:
            raise DomainError("grad_tol must be positive and max_iters >= 1")


@dataclass
class InnerSolveResult:
    p: np.ndarray
    rel_residual: float
    iterations: int
    stalled: bool


@dataclass
class IterationTrace:
    """Per-iteration records of one run.

    `grad_norms[t]` is the full-gradient norm at iterate t (t = 0..T, so one
    more entry than steps taken).  Step arrays are indexed by the step they
    describe.  `grad_mstar_norms` is filled post hoc by the metrics module.
    """

    status: str = MAX_ITERS
    grad_norms: list[float] = field(default_factory=list)
    gradients: list[np.ndarray] = field(default_factory=list)
    xs: list[np.ndarray] = field(default_factory=list)
    steps: list[np.ndarray] = field(default_factory=list)
    inner_residuals: list[float] = field(default_factory=list)
    inner_stalled: list[bool] = field(default_factory=list)
    hessian_infos: list[dict] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    grad_mstar_norms: list[float] | None = None
    x_final: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.inner_residuals)

    @property
    def has_snapshots(self) -> bool:
        return len(self.xs) == len(self.grad_norms)


def condition_bound(
    obj: FiniteSumObjective,
    x0: np.ndarray,
    source: str = "objective_bounds",
    seed: int = 0,
) -> float:
    """Upper bound kappa >= L / mu used for the inner-solve tolerance."""
    if source == "objective_bounds":
        return max(1.0, obj.L / obj.sigma)
    if source == "power_iteration":
        lam = power_iteration(obj.full_hessian(np.asarray(x0, float)), seed=seed)
        return max(1.0, lam / obj.sigma)
    raise DomainError(f"unknown kappa source {source!r}")


def power_iteration(M: np.ndarray, seed: int = 0, iters: int = 200) -> float:
    """Largest-eigenvalue estimate of a symmetric PSD matrix."""
    gen = rng.generator(seed)
    v = gen.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_lam = float(v @ (M @ v))
        if abs(new_lam - lam) <= 1e-12 * max(1.0, abs(new_lam)):
            lam = new_lam
            break
        lam = new_lam
    return lam


def superlinear_schedule(t: int) -> float:
    """Iteration-dependent accuracy target 1 / log(1 + t), clamped to (0, 0.9]."""
    if t < 1:
        return 0.9
    return min(1.0 / math.log(1.0 + t), 0.9)


def solve_inner(
    H: ApproxHessian | np.ndarray,
    g: np.ndarray,
    eps1: float,
    kappa: float,
    mode: str = INNER_EXACT,
) -> InnerSolveResult:
    """Approximately minimize 0.5 p^T H p - p^T g.

    Exact mode factorizes H (Cholesky + iterative refinement).  CG mode
    iterates until ||g - H p|| <= (eps1 / kappa) ||g|| with a floor of
    1e-12 ||g||, capped at 10 d iterations; if the cap is hit the best
    iterate is returned with `stalled` set instead of raising.
    """
    if kappa < 1.0:
        raise DomainError(f"kappa must be >= 1, got {kappa}")
    M = H.matrix if isinstance(H, ApproxHessian) else np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    if M.shape[0] != M.shape[1] or M.shape[0] != g.shape[0]:
        raise ShapeError(f"H has shape {M.shape}, g has shape {g.shape}")
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return InnerSolveResult(np.zeros_like(g), 0.0, 0, False)

    if mode == INNER_EXACT:
        try:
            factor = scipy.linalg.cho_factor(M)
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            raise NotPositiveDefinite("H is not positive definite") from exc
        p = scipy.linalg.cho_solve(factor, g)
        for _ in range(_REFINEMENT_PASSES):
            resid = g - M @ p
            p = p + scipy.linalg.cho_solve(factor, resid)
        rel = float(np.linalg.norm(g - M @ p)) / gnorm
        return InnerSolveResult(p, rel, 1, False)

    if mode != INNER_CG:
        raise DomainError(f"unknown inner mode {mode!r}")

    target = max(eps1 / kappa, _CG_FLOOR) * gnorm
    cap = 10 * M.shape[0]
    p = np.zeros_like(g)
    r = g.copy()
    q = r.copy()
    rs = float(r @ r)
    best_p, best_res = p.copy(), math.sqrt(rs)
    iterations = 0
    while math.sqrt(rs) > target and iterations < cap:
        Hq = M @ q
        curvature = float(q @ Hq)
        if curvature <= 0.0:
            raise NotPositiveDefinite("CG met non-positive curvature")
        a = rs / curvature
        p = p + a * q
        r = r - a * Hq
        rs_new = float(r @ r)
        iterations += 1
        if math.sqrt(rs_new) < best_res:
            best_p, best_res = p.copy(), math.sqrt(rs_new)
        q = r + (rs_new / rs) * q
        rs = rs_new
    rel = float(np.linalg.norm(g - M @ best_p)) / gnorm
    stalled = rel * gnorm > target * (1.0 + 1e-12)
    return InnerSolveResult(best_p, rel, iterations, stalled)


def _resolve_sample_size(cfg: SolverConfig, obj, x) -> int:
    if cfg.sample_fraction is not None:
        pool = obj.hessian_sample_pool(x)
        return max(1, int(math.ceil(cfg.sample_fraction * pool.size)))
    if cfg.sample_size is None:
        raise DomainError("sample_size or sample_fraction required for this method")
    return cfg.sample_size


def _build_hessian(obj, x, cfg: SolverConfig, t: int, eps0_t: float) -> ApproxHessian:
    seed_t = rng.child_seed(cfg.seed, 1, t)
    method = cfg.hessian_method
    if method == EXACT:
        return ApproxHessian(obj.full_hessian(x), EXACT, {"t": t})
    if method == SKETCHED:
        B = obj.hessian_factor(x)
        if B is None:
            raise DomainError("objective exposes no Hessian factor to sketch")
        if cfg.sketch_kind is None:
            raise DomainError("sketch_kind required for the sketched method")
        size = cfg.sketch_size
        if size is None:
            # A decaying schedule wants the achieved accuracy to track
            # eps0(t); a constant target wants it certified below eps0.
            if cfg.eps0_schedule == SCHEDULE_LOG_DECAY:
                size = tracking_sketch_size(cfg.sketch_kind, obj.d, eps0_t)
            else:
                size = recommended_sketch_size(cfg.sketch_kind, obj.d, eps0_t)
        if cfg.sketch_kind == LEVERAGE_SCORE:
            S = make_leverage_sketch(B, size, seed_t)
        else:
            S = make_oblivious_sketch(cfg.sketch_kind, size, B.shape[0], seed_t)
        H = sketched_hessian(B, S)
        H.meta["eps0_target"] = eps0_t
        return H
    size = _resolve_sample_size(cfg, obj, x)
    if method == SUBSAMPLED:
        return subsampled_hessian(obj, x, size, seed_t)
    if method == REGULARIZED:
        base = subsampled_hessian(obj, x, size, seed_t)
        if cfg.alpha == 0.0:  # reduces exactly to the plain subsampled path
            return base
        M = base.matrix + cfg.alpha * np.eye(obj.d)
        return ApproxHessian(M, REGULARIZED, dict(base.meta, alpha=cfg.alpha))
    if method == NEWSAMP:
        if cfg.rank is None:
            raise DomainError("rank required for the newsamp method")
        return newsamp_hessian(obj, x, size, cfg.rank, seed_t)
    raise DomainError(f"unknown hessian method {method!r}")


def approximate_newton_run(
    obj: FiniteSumObjective, cfg: SolverConfig, x0: np.ndarray
) -> IterationTrace:
    """Run the approximate-Newton loop from x0 until convergence, the
    iteration budget, or the divergence guard.

    The stopping test always uses the full gradient, also when stepping with
    subsampled gradients.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not np.isfinite(x).all():
        raise DomainError("x0 must be finite")
    kappa = condition_bound(obj, x, cfg.kappa_source, seed=cfg.seed)
    trace = IterationTrace()
    while True:
        g_full = obj.gradient(x)
        gnorm = float(np.linalg.norm(g_full))
        if not math.isfinite(gnorm):
            trace.status = DIVERGED
            break
        trace.grad_norms.append(gnorm)
        trace.gradients.append(g_full)
        if cfg.store_snapshots:
            trace.xs.append(x.copy())
        if gnorm > cfg.divergence_guard:
            trace.status = DIVERGED
            break
        if gnorm <= cfg.grad_tol:
            trace.status = CONVERGED
            break
        if trace.n_steps >= cfg.max_iters:
            trace.status = MAX_ITERS
            break

        t = trace.n_steps
        tic = time.perf_counter()
        if cfg.eps0_schedule == SCHEDULE_LOG_DECAY:
            eps0_t = superlinear_schedule(t)
        else:
            eps0_t = cfg.eps0
        H = _build_hessian(obj, x, cfg, t, eps0_t)
        if cfg.gradient_mode == GRADIENT_SUBSAMPLED:
            if cfg.gradient_sample_size is None:
                raise DomainError("gradient_sample_size required")
            g_step = subsampled_gradient(
                obj, x, cfg.gradient_sample_size, rng.child_seed(cfg.seed, 2, t)
            )
        else:
            g_step = g_full
        inner = solve_inner(H, g_step, cfg.eps1, kappa, cfg.inner)
        x = x - inner.p

        trace.inner_residuals.append(inner.rel_residual)
        trace.inner_stalled.append(inner.stalled)
        info = {"method": H.method, "eps0": eps0_t, "t": t}
        info.update({k: v for k, v in H.meta.items() if np.isscalar(v)})
        trace.hessian_infos.append(info)
        trace.wall_ms.append((time.perf_counter() - tic) * 1e3)
        if cfg.store_snapshots:
            trace.steps.append(inner.p.copy())
    trace.x_final = x
    return trace


def baseline_run(
    obj: FiniteSumObjective,
    kind: str,
    x0: np.ndarray,
    max_iters: int = 100,
    grad_tol: float = 1e-8,
    eps1: float = 0.0,
    seed: int = 0,
    store_snapshots: bool = True,
) -> IterationTrace:
    """Reference solvers: gradient_descent (step 1/L), full_newton, newton_cg."""
    if kind == "full_newton":
        cfg = SolverConfig(
            hessian_method=EXACT,
            inner=INNER_EXACT,
            max_iters=max_iters,
            grad_tol=grad_tol,
            seed=seed,
            store_snapshots=store_snapshots,
        )
        return approximate_newton_run(obj, cfg, x0)
    if kind == "newton_cg":
        cfg = SolverConfig(
            hessian_method=EXACT,
            inner=INNER_CG,
            eps1=eps1,
            max_iters=max_iters,
            grad_tol=grad_tol,
            seed=seed,
            store_snapshots=store_snapshots,
        )
        return approximate_newton_run(obj, cfg, x0)
    if kind != "gradient_descent":
        raise DomainError(f"unknown baseline {kind!r}")

    x = np.asarray(x0, dtype=float).copy()
    L = float(np.linalg.eigvalsh(obj.full_hessian(x))[-1])
    step = 1.0 / L
    trace = IterationTrace()
    while True:
        g = obj.gradient(x)
        gnorm = float(np.linalg.norm(g))
        if not math.isfinite(gnorm):
            trace.status = DIVERGED
            break
        trace.grad_norms.append(gnorm)
        trace.gradients.append(g)
        if store_snapshots:
            trace.xs.append(x.copy())
        if gnorm > 1e8:
            trace.status = DIVERGED
            break
        if gnorm <= grad_tol:
            trace.status = CONVERGED
            break
        if trace.n_steps >= max_iters:
            trace.status = MAX_ITERS
            break
        tic = time.perf_counter()
        p = step * g
        x = x - p
        trace.inner_residuals.append(0.0)
        trace.inner_stalled.append(False)
        trace.hessian_infos.append({"method": "gradient_descent", "step": step})
        trace.wall_ms.append((time.perf_counter() - tic) * 1e3)
        if store_snapshots:
            trace.steps.append(p)
    trace.x_final = x
    return trace
