"""Finite-sum objectives: least squares, hinge-2 SVM, and dataset utilities.

Objectives expose the average form F(x) = (1/n) * sum_i f_i(x) together with
per-sample derivatives, so that uniform subsampling of the f_i is unbiased.
All objectives are immutable after construction and safe to evaluate
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (
    DomainError,
    LabelDomain,
    ParseError,
    RankDeficient,
    ShapeError,
    UnsupportedLabels,
)

_RANK_TOL = 1e-12
_SYNTH_NOISE_STD = 1e-3


@dataclass
class DatasetMatrix:
    """A dense data matrix with one sample vector per row plus targets."""

    rows: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.rows.ndim != 2 or self.rows.shape[0] < 1 or self.rows.shape[1] < 1:
            raise ShapeError(f"need a 2-d matrix with n,d >= 1, got {self.rows.shape}")
        if self.labels.shape[0] != self.rows.shape[0]:
            raise ShapeError(
                f"{self.labels.shape[0]} labels for {self.rows.shape[0]} rows"
            )
        if not np.isfinite(self.rows).all() or not np.isfinite(self.labels).all():
            raise DomainError("dataset contains NaN or Inf entries")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


class FiniteSumObjective:
    """Base interface for F(x) = (1/n) * sum_i f_i(x) (+ optional regularizer).

    Concrete objectives provide the full derivatives, per-sample derivatives
    of the loss part, and the sampling hooks used by the subsampled Hessian
    and gradient builders.  `K` bounds max_i ||hess f_i(x)||, `sigma` lower
    bounds the smallest eigenvalue of the full Hessian, and `L` upper bounds
    its largest eigenvalue.
    """

    n: int
    d: int
    K: float
    sigma: float
    L: float
    name: str = ""

    # -- full derivatives ---------------------------------------------------
    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def full_hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_factor(self, x: np.ndarray):
        """Matrix B with B.T @ B equal to the full Hessian, or None."""
        return None

    # -- per-sample loss derivatives ----------------------------------------
    def per_sample_hessian(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def per_sample_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- split-out regularizer ----------------------------------------------
    def regularizer_hessian(self) -> np.ndarray:
        return np.zeros((self.d, self.d))

    def regularizer_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.d)

    # -- sampling hooks ------------------------------------------------------
    def hessian_sample_pool(self, x: np.ndarray) -> np.ndarray:
        """Indices the subsampled-Hessian builder draws from at this x."""
        return np.arange(self.n)

    def hessian_term_root(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Rows R such that R.T @ R / len(indices) is the unbiased sampled
        estimate of the loss part of the Hessian, for indices drawn uniformly
        from `hessian_sample_pool`."""
        raise NotImplementedError

    def loss_gradient_mean(self, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Mean of per-sample loss gradients over `indices` (vectorized)."""
        raise NotImplementedError

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.d:
            raise ShapeError(f"x has dimension {x.shape[0]}, objective has d={self.d}")
        return x


class LeastSquaresObjective(FiniteSumObjective):
    """F(x) = 0.5 * ||A x - b||^2 with f_i(x) = (n/2) * (a_i.x - b_i)^2.

    The Hessian A.T @ A is constant in x and factors exactly as B = A.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, name: str = "least-squares"):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).ravel()
        if A.ndim != 2:
            raise ShapeError("A must be a 2-d matrix")
        if b.shape[0] != A.shape[0]:
            raise ShapeError(f"{b.shape[0]} targets for {A.shape[0]} rows")
        self.n, self.d = A.shape
        svals = np.linalg.svd(A, compute_uv=False)
        if svals[-1] <= _RANK_TOL:
            raise RankDeficient(
                f"smallest singular value {svals[-1]:.3e} <= {_RANK_TOL:.0e}"
            )
        self._A = A
        self._b = b
        self._hessian = A.T @ A
        self._row_sq = np.einsum("ij,ij->i", A, A)
        self.sigma = float(svals[-1] ** 2)
        self.L = float(svals[0] ** 2)
        self.K = float(self.n * self._row_sq.max())
        self.name = name

    def value(self, x):
        x = self._check_x(x)
        r = self._A @ x - self._b
        return 0.5 * float(r @ r)

    def gradient(self, x):
        x = self._check_x(x)
        return self._A.T @ (self._A @ x - self._b)

    def full_hessian(self, x):
        return self._hessian.copy()

    def hessian_factor(self, x):
        return self._A

    def per_sample_hessian(self, i, x):
        a = self._A[i]
        return self.n * np.outer(a, a)

    def per_sample_gradient(self, i, x):
        x = self._check_x(x)
        a = self._A[i]
        return self.n * a * (a @ x - self._b[i])

    def hessian_term_root(self, indices, x):
        return np.sqrt(self.n) * self._A[indices]

    def loss_gradient_mean(self, indices, x):
        x = self._check_x(x)
        sub = self._A[indices]
        resid = sub @ x - self._b[indices]
        return self.n * (sub.T @ resid) / len(indices)


class SvmHinge2Objective(FiniteSumObjective):
    """Primal linear SVM with squared hinge loss.

    F(x) = 0.5 * ||x||^2 + (C / 2n) * sum_i max(0, 1 - b_i <x, a_i>)^2.

    The loss Hessian only involves the support vectors SV(x) = {i : b_i
    <x, a_i> < 1}, so the full Hessian I + (C/n) * sum_{SV} a_i a_i^T is
    piecewise constant in x and not Lipschitz continuous.  The identity block
    from the ridge term is treated as a split-out regularizer: per-sample
    quantities cover the loss part only, and subsampling draws from the
    support-vector set.
    """

    def __init__(self, data: DatasetMatrix, C: float = 1.0):
        if C <= 0:
            raise DomainError(f"C must be positive, got {C}")
        labels = data.labels
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise LabelDomain("labels must all be -1 or +1")
        self._A = data.rows
        self._b = labels
        self.C = float(C)
        self.n, self.d = data.rows.shape
        row_sq = np.einsum("ij,ij->i", self._A, self._A)
        self.sigma = 1.0
        self.K = float(1.0 + self.C * row_sq.max())
        smax = np.linalg.svd(self._A, compute_uv=False)[0]
        self.L = float(1.0 + self.C * smax**2 / self.n)
        self.name = data.name or "svm-hinge2"

    def _margins(self, x):
        return self._b * (self._A @ x)

    def support_indices(self, x) -> np.ndarray:
        """Indices of the support vectors at x (margin strictly below 1)."""
        x = self._check_x(x)
        return np.flatnonzero(self._margins(x) < 1.0)

    def min_kink_distance(self, x) -> float:
        """Smallest |1 - margin_i|; zero means x sits on a hinge kink."""
        x = self._check_x(x)
        return float(np.abs(1.0 - self._margins(x)).min())

    def value(self, x):
        x = self._check_x(x)
        slack = np.maximum(0.0, 1.0 - self._margins(x))
        return 0.5 * float(x @ x) + self.C / (2 * self.n) * float(slack @ slack)

    def gradient(self, x):
        x = self._check_x(x)
        slack = np.maximum(0.0, 1.0 - self._margins(x))
        return x - (self.C / self.n) * (self._A.T @ (self._b * slack))

    def full_hessian(self, x):
        x = self._check_x(x)
        sv = self._A[self.support_indices(x)]
        return np.eye(self.d) + (self.C / self.n) * (sv.T @ sv)

    def hessian_factor(self, x):
        sv = self._A[self.support_indices(x)]
        return np.vstack([np.sqrt(self.C / self.n) * sv, np.eye(self.d)])

    def per_sample_hessian(self, i, x):
        x = self._check_x(x)
        if self._margins(x)[i] < 1.0:
            a = self._A[i]
            return self.C * np.outer(a, a)
        return np.zeros((self.d, self.d))

    def per_sample_gradient(self, i, x):
        x = self._check_x(x)
        slack = max(0.0, 1.0 - self._margins(x)[i])
        return -self.C * slack * self._b[i] * self._A[i]

    def regularizer_hessian(self):
        return np.eye(self.d)

    def regularizer_gradient(self, x):
        return self._check_x(x).copy()

    def hessian_sample_pool(self, x):
        return self.support_indices(x)

    def hessian_term_root(self, indices, x):
        n_sv = self.support_indices(x).shape[0]
        return np.sqrt(self.C * n_sv / self.n) * self._A[indices]

    def loss_gradient_mean(self, indices, x):
        x = self._check_x(x)
        sub = self._A[indices]
        slack = np.maximum(0.0, 1.0 - self._b[indices] * (sub @ x))
        return -(self.C / len(indices)) * (sub.T @ (self._b[indices] * slack))


def least_squares_objective(A: np.ndarray, b: np.ndarray) -> LeastSquaresObjective:
    """Least-squares objective 0.5 * ||A x - b||^2 (A must have full column rank)."""
    return LeastSquaresObjective(A, b)


def svm_hinge2_objective(data: DatasetMatrix, C: float = 1.0) -> SvmHinge2Objective:
    """Squared-hinge SVM objective on a {-1,+1}-labeled dataset."""
    return SvmHinge2Objective(data, C)


def synthetic_spectrum_matrix(n: int, d: int, decay: float, seed: int) -> DatasetMatrix:
    """Random n x d matrix with singular values decay^-1, ..., decay^-d.

    U and V are seeded random orthonormal bases, so the spectrum is exact by
    construction and the condition number is decay^(d-1).  Targets are
    A @ x_true plus Gaussian noise of standard deviation 1e-3 for a seeded
    x_true, keeping the least-squares optimum close to x_true.
    """
    if d < 1:
        raise ShapeError(f"d must be >= 1, got {d}")
    if n < d:
        raise ShapeError(f"need n >= d, got n={n}, d={d}")
    if decay <= 1.0:
        raise DomainError(f"decay must exceed 1, got {decay}")
    gen = rng.generator(seed)
    U, _ = np.linalg.qr(gen.standard_normal((n, d)))
    V, _ = np.linalg.qr(gen.standard_normal((d, d)))
    svals = decay ** -np.arange(1.0, d + 1.0)
    A = (U * svals) @ V.T
    x_true = gen.standard_normal(d)
    b = A @ x_true + _SYNTH_NOISE_STD * gen.standard_normal(n)
    return DatasetMatrix(A, b, name=f"synthetic-n{n}-d{d}-decay{decay:g}")


def synthetic_spiked_matrix(
    n: int,
    d: int,
    seed: int,
    n_heavy: int | None = None,
    heavy_scale: float = 0.3,
) -> DatasetMatrix:
    """Regression matrix whose top curvature direction is carried by a small
    group of heavy rows.

    The bulk rows are isotropic Gaussian; `n_heavy` rows (default n/20) are
    near-copies of one shared direction.  Uniform row subsampling then only
    observes the top direction when it happens to draw heavy rows, which
    makes the workable regularizer floor shrink as the sample size grows --
    the regime the regularized-subsampled sweep measures.
    """
    if d < 1 or n < d:
        raise ShapeError(f"need n >= d >= 1, got n={n}, d={d}")
    if n_heavy is None:
        n_heavy = max(1, n // 20)
    if not 0 < n_heavy < n:
        raise DomainError(f"need 0 < n_heavy < n, got {n_heavy}")
    gen = rng.generator(seed)
    bulk = 0.8 * gen.standard_normal((n - n_heavy, d)) / np.sqrt(d)
    shared = gen.standard_normal(d)
    shared /= np.linalg.norm(shared)
    heavy = heavy_scale * (
        shared[None, :] + 0.15 * gen.standard_normal((n_heavy, d)) / np.sqrt(d)
    )
    A = np.vstack([bulk, heavy])
    x_true = gen.standard_normal(d)
    b = A @ x_true + _SYNTH_NOISE_STD * gen.standard_normal(n)
    return DatasetMatrix(A, b, name=f"spiked-n{n}-d{d}")


def synthetic_two_class(
    n: int, d: int, seed: int, separation: float = 2.0
) -> DatasetMatrix:
    """Seeded two-class Gaussian dataset with labels in {-1, +1}.

    Samples are unit-scale Gaussian vectors shifted by +-separation/2 along a
    random direction, which yields a healthy mix of support and non-support
    vectors for the squared-hinge SVM.
    """
    if n < 2 or d < 1:
        raise ShapeError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    gen = rng.generator(seed)
    labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    direction = gen.standard_normal(d)
    direction /= np.linalg.norm(direction)
    rows = gen.standard_normal((n, d)) / np.sqrt(d)
    rows += np.outer(labels * (separation / 2.0), direction)
    return DatasetMatrix(rows, labels, name=f"two-class-n{n}-d{d}")


def load_libsvm(path: str, binarize_class: float | None = None) -> DatasetMatrix:
    """Read a whitespace-separated LIBSVM text file into a dense DatasetMatrix.

    Feature indices are 1-based; the dimension is the largest index present.
    Two-class label sets are mapped to {-1, +1} (smaller value to -1).  Files
    with more than two classes need `binarize_class`, which maps that class
    to +1 and everything else to -1.
    """
    raw_labels: list[float] = []
    entries: list[list[tuple[int, float]]] = []
    d = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                label = float(parts[0])
            except ValueError as exc:
                raise ParseError(f"bad label {parts[0]!r}", lineno) from exc
            feats = []
            for tok in parts[1:]:
                idx_s, _, val_s = tok.partition(":")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as exc:
                    raise ParseError(f"bad feature token {tok!r}", lineno) from exc
                if idx < 1:
                    raise ParseError(f"feature index {idx} is not 1-based", lineno)
                feats.append((idx, val))
                d = max(d, idx)
            raw_labels.append(label)
            entries.append(feats)
    if not entries:
        raise ParseError("file contains no samples", 1)
    if d == 0:
        raise ParseError("no features anywhere in file", 1)

    rows = np.zeros((len(entries), d))
    for i, feats in enumerate(entries):
        for idx, val in feats:
            rows[i, idx - 1] = val

    labels = np.asarray(raw_labels)
    if binarize_class is not None:
        labels = np.where(labels == binarize_class, 1.0, -1.0)
    else:
        classes = np.unique(labels)
        if classes.size > 2:
            raise UnsupportedLabels(
                f"{classes.size} classes present; pass binarize_class to pick one"
            )
        if classes.size == 2 and not np.array_equal(classes, [-1.0, 1.0]):
            labels = np.where(labels == classes[0], -1.0, 1.0)
        elif classes.size == 1 and classes[0] not in (-1.0, 1.0):
            raise UnsupportedLabels(f"single class {classes[0]} is not -1 or +1")
    return DatasetMatrix(rows, labels, name=path)
