"""Reference-norm machinery, rate classification, and contraction diagnostics.

All convergence rates are measured in the norm ||v|| weighted by the inverse
Hessian at the optimum: r_t = ||grad F(x_t)|| in that norm.  A trace is
classified from the tail of its r_t sequence:

* quadratic -- log r_{t+1} regresses on log r_t with slope in [1.8, 2.5]
  and R^2 >= 0.98,
* superlinear -- successive ratios r_{t+1}/r_t decrease across the window
  and the final ratio is below half the initial one; because stochastic
  Hessians make single ratios noisy, both conditions are evaluated on
  geometric-mean smoothed blocks of the ratio sequence,
* linear -- ratios are approximately constant: geometric mean in (0, 1)
  with bounded max log-deviation.

Precedence is quadratic > superlinear > linear; anything else is
inconclusive.  Window and thresholds are calibration constants (see README).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientData,
    ReferenceNotConverged,
    ShapeError,
    SnapshotsRequired,
)
from .problems import FiniteSumObjective
from .solvers import DIVERGED, IterationTrace, SolverConfig, approximate_newton_run

RESIDUAL_FLOOR = 1e-13  # window ends before r_t first reaches this
WINDOW_SKIP = 2  # transient iterations excluded up front
WINDOW_FRACTION = 1.0  # share of the post-transient tail that is classified
QUAD_SLOPE_RANGE = (1.8, 2.5)
QUAD_MIN_R2 = 0.98
LINEAR_MAX_LOG_DEV = 0.8
SUPERLINEAR_FINAL_FACTOR = 0.5
SUPERLINEAR_SMOOTH = 3  # ratios pooled per endpoint when smoothing

LINEAR = "linear"
SUPERLINEAR = "superlinear"
QUADRATIC = "quadratic"
INCONCLUSIVE = "inconclusive"
DIVERGED_CLASS = "diverged"


@dataclass
class MstarReference:
    """The optimum, the Hessian there, its inverse, and the inverse's
    symmetric square root."""

    x_star: np.ndarray
    hessian_at_star: np.ndarray
    mstar: np.ndarray
    mstar_half: np.ndarray


@dataclass
class RateReport:
    classification: str
    rho: float | None
    fit_residual: float
    window: tuple[int, int]


def compute_mstar_reference(
    obj: FiniteSumObjective, x0: np.ndarray, max_iters: int = 200
) -> MstarReference:
    """Locate x* by exact Newton and factorize the Hessian there.

    The reference gradient tolerance is 1e-13 scaled by max(1, ||grad F(x0)||).
    """
    x0 = np.asarray(x0, dtype=float)
    g0 = float(np.linalg.norm(obj.gradient(x0)))
    tol = 1e-13 * max(1.0, g0)
    cfg = SolverConfig(
        hessian_method="exact",
        inner="exact",
        max_iters=max_iters,
        grad_tol=tol,
        store_snapshots=False,
        seed=0,
    )
    trace = approximate_newton_run(obj, cfg, x0)
    if trace.status != "converged":
        raise ReferenceNotConverged(
            f"exact Newton stopped with status {trace.status!r} at "
            f"||grad|| = {trace.grad_norms[-1]:.3e} (tol {tol:.3e})"
        )
    x_star = trace.x_final
    hess = obj.full_hessian(x_star)
    w, V = np.linalg.eigh(hess)
    mstar = (V / w) @ V.T
    mstar_half = (V / np.sqrt(w)) @ V.T
    return MstarReference(x_star, hess, mstar, mstar_half)


def mstar_norm(ref: MstarReference, v: np.ndarray) -> float:
    """Norm of v weighted by the inverse Hessian at the optimum."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != ref.mstar_half.shape[0]:
        raise ShapeError(
            f"vector has dimension {v.shape[0]}, reference {ref.mstar_half.shape[0]}"
        )
    return float(np.linalg.norm(ref.mstar_half @ v))


def fill_mstar_norms(trace: IterationTrace, ref: MstarReference) -> list[float]:
    """Compute r_t for every recorded iterate and store it on the trace."""
    if not trace.gradients:
        raise SnapshotsRequired("trace carries no gradient records")
    vals = [float(np.linalg.norm(ref.mstar_half @ g)) for g in trace.gradients]
    trace.grad_mstar_norms = vals
    return vals


def _classification_window(r: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    floored = np.flatnonzero(r <= RESIDUAL_FLOOR)
    end = int(floored[0]) if floored.size else len(r)
    if np.count_nonzero(r[:end] > 1e-14) < 5:
        raise InsufficientData(
            f"need at least 5 iterations above 1e-14, have {np.count_nonzero(r[:end] > 1e-14)}"
        )
    seq_start = WINDOW_SKIP
    seq = r[seq_start:end]
    if seq.size < 3:
        raise InsufficientData("window too short after transient removal")
    keep = int(math.ceil(WINDOW_FRACTION * seq.size))
    keep = max(keep, 3)
    start = seq_start + (seq.size - keep)
    return r[start:end], (start, end)


def _geomean(vals: np.ndarray) -> float:
    return float(np.exp(np.log(vals).mean()))


def _superlinear_trend(ratios: np.ndarray) -> bool:
    """Decreasing-contraction test on smoothed ratio blocks.

    The ratio sequence is split into three consecutive blocks whose
    geometric means must decrease strictly, and the geometric mean of the
    last few ratios must be below half that of the first few.
    """
    if ratios.size < 3:
        return False
    third = ratios.size // 3
    blocks = [ratios[:third], ratios[third : 2 * third], ratios[2 * third :]]
    g = [_geomean(b) for b in blocks]
    if not g[0] > g[1] > g[2]:
        return False
    k = max(2, min(SUPERLINEAR_SMOOTH, ratios.size // 3))
    head = _geomean(ratios[:k])
    tail = _geomean(ratios[-k:])
    return tail < SUPERLINEAR_FINAL_FACTOR * head


def classify_rate(trace: IterationTrace, ref: MstarReference) -> RateReport:
    """Classify the convergence rate of a trace (filling r_t if needed)."""
    if trace.status == DIVERGED:
        return RateReport(DIVERGED_CLASS, None, math.inf, (0, len(trace.grad_norms)))
    if trace.grad_mstar_norms is None:
        fill_mstar_norms(trace, ref)
    r = np.asarray(trace.grad_mstar_norms, dtype=float)
    window, span = _classification_window(r)
    ratios = window[1:] / window[:-1]
    logs = np.log(window)

    if window.size >= 4:
        x, y = logs[:-1], logs[1:]
        slope, intercept = np.polyfit(x, y, 1)
        pred = slope * x + intercept
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot > 0.0:
            r2 = 1.0 - ss_res / ss_tot
            if QUAD_SLOPE_RANGE[0] <= slope <= QUAD_SLOPE_RANGE[1] and r2 >= QUAD_MIN_R2:
                return RateReport(QUADRATIC, float(math.exp(intercept)), 1.0 - r2, span)

    if _superlinear_trend(ratios):
        return RateReport(SUPERLINEAR, None, float(ratios[-1] / ratios[0]), span)

    log_ratios = np.log(ratios)
    rho = float(math.exp(log_ratios.mean()))
    dev = float(np.abs(log_ratios - log_ratios.mean()).max())
    if 0.0 < rho < 1.0 and dev <= LINEAR_MAX_LOG_DEV:
        return RateReport(LINEAR, rho, dev, span)
    return RateReport(INCONCLUSIVE, None, dev, span)


@dataclass
class ContractionRow:
    """One iteration of the measured-contraction check."""

    t: int
    ratio: float
    eta_measured: float
    nu_measured: float
    bound_rhs: float
    within_bound: bool
    nu_flagged: bool


def contraction_diagnostics(
    obj: FiniteSumObjective,
    trace: IterationTrace,
    ref: MstarReference,
    eps0: float,
    eps1: float,
) -> list[ContractionRow]:
    """Per-iteration comparison of r_{t+1}/r_t against the contraction bound

        (eps0 + eps1/(1-eps0) + 2 eta_t/(1-eps0)) * (1+nu_t) / (1-nu_t)

    with eta_t and nu_t measured from the Hessian distance (respectively
    inverse-Hessian distance) between iterate t and the optimum, rescaled by
    the objective's curvature bounds.  Rows with nu_t >= 1 are flagged: the
    conversion between the local and reference norms is vacuous there.
    """
    if not trace.has_snapshots:
        raise SnapshotsRequired("contraction diagnostics need per-iteration x")
    if trace.grad_mstar_norms is None:
        fill_mstar_norms(trace, ref)
    mu = obj.sigma
    L = obj.L
    kappa = max(1.0, L / mu)
    hess_star = ref.hessian_at_star
    inv_star = ref.mstar
    rows = []
    r = trace.grad_mstar_norms
    for t in range(trace.n_steps):
        hess_t = obj.full_hessian(trace.xs[t])
        eta = spectral_norm(hess_t - hess_star) * math.sqrt(kappa) / mu
        w_t, V_t = np.linalg.eigh(hess_t)
        inv_t = (V_t / w_t) @ V_t.T
        nu = L * spectral_norm(inv_star - inv_t)
        ratio = r[t + 1] / r[t] if r[t] > 0 else 0.0
        nu_flagged = nu >= 1.0
        if nu_flagged:
            bound = math.inf
        else:
            bound = (
                (eps0 + eps1 / (1.0 - eps0) + 2.0 * eta / (1.0 - eps0))
                * (1.0 + nu)
                / (1.0 - nu)
            )
        rows.append(
            ContractionRow(
                t=t,
                ratio=float(ratio),
                eta_measured=float(eta),
                nu_measured=float(nu),
                bound_rhs=float(bound),
                within_bound=bool(ratio <= bound),
                nu_flagged=nu_flagged,
            )
        )
    return rows


def spectral_norm(M: np.ndarray) -> float:
    """Exact spectral norm of a symmetric matrix."""
    return float(np.abs(np.linalg.eigvalsh(M)).max()) if M.size else 0.0


def distance_bound_from_gradient(
    ref: MstarReference, grad_mstar: float, L: float, mu: float
) -> float:
    """Bound sqrt(L)/mu * r_t on the distance ||x_t - x*||."""
    if L <= 0 or mu <= 0 or grad_mstar < 0:
        raise ShapeError("L, mu must be positive and grad_mstar nonnegative")
    return math.sqrt(L) / mu * grad_mstar
