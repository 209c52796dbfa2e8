"""Projection methods: exact PCA, exact t-SNE, axis pairs, external import.

All methods are deterministic: PCA fixes component signs, t-SNE derives its
init from an explicit seed, and the gradient loops are plain vectorized
reductions with a fixed evaluation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from csn.model import normalize_projection

P_FLOOR = 1e-12  # affinity floor, keeps KL logs finite


class ZeroVarianceError(ValueError):
    """Input rows are all identical: zero variance, nothing to project."""


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance matrix with an exactly zero diagonal."""
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


# --- PCA ------------------------------------------------------------------

@dataclass(frozen=True)
class PcaResult:
    coords: np.ndarray  # (N, k) projections onto the top-k components
    explained_variance: np.ndarray  # (k,) eigenvalues, descending
    components: np.ndarray  # (k, D) orthonormal rows


def pca(X: np.ndarray, k: int = 2) -> PcaResult:
    """Top-k principal components of the sample covariance of centered X.

    Sign convention: each component's largest-magnitude entry is positive.
    Uses the D-by-D covariance when D <= N, otherwise the N-by-N Gram matrix.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected an N x D matrix")
    n, d = X.shape
    if not 2 <= k <= min(n, d):
        raise ValueError(f"k must be between 2 and min(N, D) = {min(n, d)}, got {k}")
    Xc = X - X.mean(axis=0)
    total_var = float(np.sum(Xc * Xc)) / (n - 1)
    if total_var <= 0.0:
        raise ZeroVarianceError("all rows identical: zero variance")

    if d <= n:
        cov = (Xc.T @ Xc) / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:k]
        variances = evals[order]
        components = evecs[:, order].T
    else:
        gram = (Xc @ Xc.T) / (n - 1)
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:k]
        variances = evals[order]
        # centered data has rank < N, so trailing Gram eigenvalues are zero
        # and yield no usable direction
        if variances[-1] <= max(variances[0], 0.0) * 1e-10:
            rank = int(np.sum(evals > evals.max() * 1e-10))
            raise ZeroVarianceError(
                f"requested {k} components but centered data has rank {rank}"
            )
        components = (Xc.T @ evecs[:, order]) / np.sqrt(variances * (n - 1))
        components = components.T

    variances = np.maximum(variances, 0.0)
    flips = np.where(components[np.arange(k), np.argmax(np.abs(components), axis=1)] < 0, -1.0, 1.0)
    components = components * flips[:, None]
    coords = Xc @ components.T
    return PcaResult(coords=coords, explained_variance=variances, components=components)


# --- perplexity calibration -------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    sigma: float
    clamped: bool  # target perplexity unattainable within the iteration budget
    iterations: int
    p: np.ndarray  # conditional distribution over the other points


def _perp_at(sq_dists: np.ndarray, sigma: float) -> tuple[float, np.ndarray]:
    beta = 1.0 / (2.0 * sigma * sigma)
    w = np.exp(-(sq_dists - sq_dists.min()) * beta)
    p = w / w.sum()
    nz = p[p > 0.0]
    entropy = -float(np.sum(nz * np.log(nz)))
    return float(np.exp(entropy)), p


def perplexity_calibration(
    sq_dists: Sequence[float],
    target_perplexity: float,
    tol: float = 1e-5,
    max_iter: int = 50,
) -> CalibrationResult:
    """Binary search for the Gaussian bandwidth whose perplexity hits the target.

    Perplexity (exp of the entropy of the conditional distribution) increases
    with sigma, so a doubling/halving pass brackets the target and bisection
    closes in. When the target is unattainable (all distances equal, say)
    the bracket midpoint is returned with clamped set.
    """
    d2 = np.asarray(sq_dists, dtype=np.float64)
    if d2.size < 1:
        raise ValueError("perplexity calibration needs at least 2 points")
    if target_perplexity < 1.0:
        raise ValueError("target perplexity must be at least 1")

    sigma = 1.0
    iterations = 0
    perp, p = _perp_at(d2, sigma)
    if abs(perp - target_perplexity) <= tol:
        return CalibrationResult(sigma, False, iterations, p)

    lo = hi = sigma
    if perp < target_perplexity:
        for _ in range(max_iter):
            lo, hi = hi, hi * 2.0
            iterations += 1
            perp, p = _perp_at(d2, hi)
            if abs(perp - target_perplexity) <= tol:
                return CalibrationResult(hi, False, iterations, p)
            if perp > target_perplexity:
                break
    else:
        for _ in range(max_iter):
            hi, lo = lo, lo / 2.0
            iterations += 1
            perp, p = _perp_at(d2, lo)
            if abs(perp - target_perplexity) <= tol:
                return CalibrationResult(lo, False, iterations, p)
            if perp < target_perplexity:
                break

    for _ in range(max_iter):
        sigma = 0.5 * (lo + hi)
        iterations += 1
        perp, p = _perp_at(d2, sigma)
        if abs(perp - target_perplexity) <= tol:
            return CalibrationResult(sigma, False, iterations, p)
        if perp < target_perplexity:
            lo = sigma
        else:
            hi = sigma

    sigma = 0.5 * (lo + hi)
    _, p = _perp_at(d2, sigma)
    return CalibrationResult(sigma, True, iterations, p)


# --- t-SNE ------------------------------------------------------------


@dataclass(frozen=True)
class TsneParams:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    early_exaggeration: float = 12.0
    exaggeration_until: int = 250
    init_scale: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.perplexity <= 0:
            raise ValueError("perplexity must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass(frozen=True)
class TsneResult:
    coords: np.ndarray  # (N, 2)
    kl_initial: float
    kl_final: float
    kl_trace: tuple[float, ...]  # KL sampled every 50 iterations
    clamped_points: int  # rows whose perplexity target was unattainable


def joint_probabilities(
    X: np.ndarray, perplexity: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """Symmetrized, floored t-SNE affinities P plus per-point sigmas."""
    d2 = pairwise_sq_dists(X)
    n = d2.shape[0]
    cond = np.zeros((n, n), dtype=np.float64)
    sigmas = np.zeros(n, dtype=np.float64)
    clamped = 0
    others = np.arange(n)
    for i in range(n):
        idx = others[others != i]
        res = perplexity_calibration(d2[i, idx], perplexity)
        cond[i, idx] = res.p
        sigmas[i] = res.sigma
        clamped += int(res.clamped)
    P = (cond + cond.T) / (2.0 * n)
    np.maximum(P, P_FLOOR, out=P)
    return P, sigmas, clamped


def low_dim_affinities(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Student-t affinities Q (exactly normalized) and the raw kernel matrix."""
    num = 1.0 / (1.0 + pairwise_sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    return Q, num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    Q, _ = low_dim_affinities(Y)
    return float(np.sum(P * (np.log(P) - np.log(np.maximum(Q, P_FLOOR)))))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    Q, num = low_dim_affinities(Y)
    W = (P - Q) * num
    return 4.0 * (Y * W.sum(axis=1)[:, None] - W @ Y)


def tsne(X: np.ndarray, params: TsneParams | None = None) -> TsneResult:
    """Standard exact t-SNE to 2 dimensions; deterministic for a fixed seed.

    Gradient descent uses the reference algorithm's adaptive per-coordinate
    gains (grow by 0.2 while descending consistently, shrink by 0.8 on sign
    flips, floored at 0.01): without them the early-exaggeration phase
    overshoots from the tiny Gaussian init and clusters shatter.
    """
    params = params or TsneParams()
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points")
    if params.perplexity >= n:
        raise ValueError("perplexity must be less than the number of points")
    if np.all(X == X[0]):
        raise ZeroVarianceError("all rows identical: zero variance")

    P, _, clamped = joint_probabilities(X, params.perplexity)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    Y = rng.normal(0.0, params.init_scale, size=(n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    min_gain = 0.01

    kl_initial = kl_divergence(P, Y)
    trace = [kl_initial]
    for t in range(params.iterations):
        P_eff = P * params.early_exaggeration if t < params.exaggeration_until else P
        grad = kl_gradient(P_eff, Y)
        m = params.momentum_early if t < params.momentum_switch else params.momentum_late
        gains = np.where((grad > 0.0) != (velocity > 0.0), gains + 0.2, gains * 0.8)
        np.maximum(gains, min_gain, out=gains)
        velocity = m * velocity - params.learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if (t + 1) % 50 == 0:
            trace.append(kl_divergence(P, Y))

    kl_final = kl_divergence(P, Y)
    if params.iterations % 50 != 0:
        trace.append(kl_final)
    return TsneResult(
        coords=Y,
        kl_initial=kl_initial,
        kl_final=kl_final,
        kl_trace=tuple(trace),
        clamped_points=clamped,
    )


# --- axis pairs and import ----------------------------------------------


@dataclass(frozen=True)
class AxisProjection:
    coords: np.ndarray  # (N, 2) float32, normalized
    missing_x: tuple[int, ...]  # objects whose x value was missing
    missing_y: tuple[int, ...]


def _axis_values(col, axis: str) -> np.ndarray:
    values = np.asarray(getattr(col, "values", col), dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"{axis} column must be one-dimensional")
    if values.size and not np.any(np.isfinite(values)):
        raise ValueError(f"{axis} column has no numeric values")
    return values


def axis_projection(col_x, col_y) -> AxisProjection:
    """Pair two numeric columns as x/y; missing values sit at the domain minimum."""
    x = _axis_values(col_x, "x")
    y = _axis_values(col_y, "y")
    if x.shape != y.shape:
        raise ValueError(f"column lengths differ: {x.size} vs {y.size}")
    fin_x = np.isfinite(x)
    fin_y = np.isfinite(y)
    missing_x = np.flatnonzero(~fin_x)
    missing_y = np.flatnonzero(~fin_y)
    if x.size:
        x = np.where(fin_x, x, x[fin_x].min())
        y = np.where(fin_y, y, y[fin_y].min())
    coords = normalize_projection(np.column_stack([x, y]))
    return AxisProjection(
        coords=coords,
        missing_x=tuple(int(i) for i in missing_x),
        missing_y=tuple(int(i) for i in missing_y),
    )


def load_projection_rows(path: str | Path, dims: int | None = None) -> np.ndarray:
    """Raw N x 2 or N x 3 coordinates from a CSV of reals, or from raw
    little-endian float32 when ``dims`` is given. No normalization."""
    path = Path(path)
    if dims is not None:
        if dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        raw = np.fromfile(path, dtype="<f4").astype(np.float64)
        if raw.size % dims != 0:
            raise ValueError(f"file size is not a multiple of {dims} float32 values")
        return raw.reshape(-1, dims)
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            rows.append([float(cell) for cell in row])
    coords = np.asarray(rows, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] not in (2, 3):
        raise ValueError("expected 2 or 3 columns of coordinates")
    return coords


def import_projection(
    path: str | Path,
    expected_n: int,
    dims: int | None = None,
) -> np.ndarray:
    """Load coordinates via load_projection_rows and normalize them."""
    coords = load_projection_rows(path, dims=dims)
    if coords.shape[0] != expected_n:
        raise ValueError(
            f"row count mismatch: file has {coords.shape[0]} rows, bundle has {expected_n} objects"
        )
    return normalize_projection(coords)
