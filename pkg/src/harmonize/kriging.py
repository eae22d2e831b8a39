"""
Ordinary point and block kriging.

The system solved is

    [[C, 1], [1^T, 0]] [weights; multiplier] = [c; 1]

so ``C weights + multiplier 1 = c`` and the prediction error variance is
``C(V,V) - weights^T c - multiplier``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spl
from scipy.spatial.distance import cdist

from .errors import EmptyInputError, NumericalFailureError, SingularSystemError
from .geomcore import AreaUnit, GridFieldSnapshot, discretize_block
from .variogram import VariogramSpec, covariance

NEG_VARIANCE_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-10
JITTER = 1e-10


@dataclass(frozen=True)
class KrigingSystem:
    C: np.ndarray
    c_target: np.ndarray
    weights: np.ndarray
    multiplier: float


@dataclass(frozen=True)
class BlockPrediction:
    area_id: str
    mean: float
    variance: float
    n_used: int
    family: str
    nmax: int
    cv_rmse: float = float("nan")
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def point_to_block_cov(spec: VariogramSpec, s, block_points) -> float:
    """Mean covariance between ``s`` and the block discretization points."""
    bp = np.asarray(block_points, dtype=float).reshape(-1, 2)
    if len(bp) == 0:
        raise EmptyInputError("block has no discretization points")
    d = np.hypot(bp[:, 0] - s[0], bp[:, 1] - s[1])
    return float(np.mean(covariance(spec, d)))


def block_to_block_cov(spec: VariogramSpec, block_points, other_points=None) -> float:
    """Mean covariance over all ordered pairs of discretization points."""
    bp = np.asarray(block_points, dtype=float).reshape(-1, 2)
    op = bp if other_points is None else np.asarray(other_points, dtype=float).reshape(-1, 2)
    if len(bp) == 0 or len(op) == 0:
        raise EmptyInputError("block has no discretization points")
    return float(np.mean(covariance(spec, cdist(bp, op))))


def _augment(C: np.ndarray) -> np.ndarray:
    n = C.shape[-1]
    A = np.zeros(C.shape[:-2] + (n + 1, n + 1))
    A[..., :n, :n] = C
    A[..., :n, n] = 1.0
    A[..., n, :n] = 1.0
    return A


def solve_ordinary_kriging(C, c_target) -> tuple[np.ndarray, float]:
    """Solve the augmented ordinary kriging system by pivoted LU.

    Returns ``(weights, multiplier)``. Raises SingularSystemError when the augmented
    matrix is singular or the weights do not sum to one.
    """
    C = np.asarray(C, dtype=float)
    c = np.asarray(c_target, dtype=float).ravel()
    n = len(c)
    if C.shape != (n, n) or n == 0:
        raise ValueError("covariance matrix and target vector disagree in size")
    A = _augment(C)
    b = np.append(c, 1.0)
    try:
        # singularity is reported below as an error, so the warning is redundant
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", spl.LinAlgWarning)
            lu, piv = spl.lu_factor(A, check_finite=True)
        if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * max(1.0, np.abs(A).max()) * (n + 1)):
            raise SingularSystemError("augmented kriging matrix is singular")
        x = spl.lu_solve((lu, piv), b)
    except (spl.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    weights, multiplier = x[:n], float(x[n])
    if not np.all(np.isfinite(x)) or abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise SingularSystemError("kriging weights do not satisfy the unbiasedness constraint")
    return weights, multiplier


def _solve_with_retry(C, c, sill) -> tuple[np.ndarray, float]:
    try:
        return solve_ordinary_kriging(C, c)
    except SingularSystemError:
        jitter = JITTER * sill
        if jitter <= 0:
            raise
        return solve_ordinary_kriging(C + jitter * np.eye(len(c)), c)


def _clamp_variance(v: float, scale: float) -> float:
    if v >= 0:
        return v
    if v > -NEG_VARIANCE_TOL * max(1.0, scale):
        return 0.0
    raise NumericalFailureError(f"negative kriging variance {v:.3e}")


def _weighted_mean(weights: np.ndarray, vals: np.ndarray) -> float:
    """Weighted sum of ``vals`` for weights summing to one.

    Offsetting by the nearest value keeps the result exact on constant
    neighbourhoods and limits cancellation when values share a large offset.
    """
    base = vals[0]
    return float(base + weights @ (vals - base))


def krige_blocks(spec: VariogramSpec, coords, values, blocks, nmax: int):
    """Local ordinary kriging of many blocks sharing one discretization size.

    ``blocks`` has shape ``(m, p, 2)``: ``m`` targets with ``p``
    discretization points each (``p = 1`` is point kriging). Each target
    uses the ``nmax`` samples nearest to the centroid of its points; ties go
    to the lower sample index.

    Returns ``(means, variances, n_used)``.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float).ravel()
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim == 2:
        blocks = blocks[:, None, :]
    if len(values) == 0:
        raise EmptyInputError("no samples to krige from")
    if blocks.shape[1] == 0:
        raise EmptyInputError("block has no discretization points")
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    m, p, _ = blocks.shape
    k = min(nmax, len(values))
    anchors = blocks.mean(axis=1)
    nb = np.argsort(cdist(anchors, coords, "sqeuclidean"), axis=1, kind="stable")[:, :k]
    if spec.sill == 0.0:
        # zero-sill model: every unbiased combination is equivalent
        base = values[nb[:, 0]]
        return base + (values[nb] - base[:, None]).mean(axis=1), np.zeros(m), k
    nbxy = coords[nb]                                            # (m, k, 2)
    diff = nbxy[:, :, None, :] - nbxy[:, None, :, :]
    C = covariance(spec, np.sqrt((diff ** 2).sum(-1)))           # (m, k, k)
    dtb = nbxy[:, :, None, :] - blocks[:, None, :, :]            # (m, k, p, 2)
    c = covariance(spec, np.sqrt((dtb ** 2).sum(-1))).mean(axis=2)  # (m, k)
    if p == 1:
        cvv = np.full(m, spec.sill)
    else:
        dbb = blocks[:, :, None, :] - blocks[:, None, :, :]
        cvv = covariance(spec, np.sqrt((dbb ** 2).sum(-1))).mean(axis=(1, 2))
    A = _augment(C)
    b = np.concatenate([c, np.ones((m, 1))], axis=1)
    try:
        sol = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        sol = None
    means = np.empty(m)
    variances = np.empty(m)
    for i in range(m):
        x = None if sol is None else sol[i]
        if x is None or not np.all(np.isfinite(x)) or abs(x[:k].sum() - 1.0) > WEIGHT_SUM_TOL:
            weights, multiplier = _solve_with_retry(C[i], c[i], spec.sill)
        else:
            weights, multiplier = x[:k], float(x[k])
        means[i] = _weighted_mean(weights, values[nb[i]])
        variances[i] = _clamp_variance(cvv[i] - float(weights @ c[i]) - multiplier, spec.sill)
    return means, variances, k


def krige_block_points(spec: VariogramSpec, coords, values, block_points, nmax: int):
    """Local ordinary block kriging of one discretized block.

    Returns ``(mean, variance, n_used, system)``; ``system`` exposes the
    covariance matrix, target vector, weights and multiplier.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float).ravel()
    bp = np.asarray(block_points, dtype=float).reshape(-1, 2)
    if len(values) == 0:
        raise EmptyInputError("no samples to krige from")
    if len(bp) == 0:
        raise EmptyInputError("block has no discretization points")
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    anchor = bp.mean(axis=0)
    d2 = (coords[:, 0] - anchor[0]) ** 2 + (coords[:, 1] - anchor[1]) ** 2
    idx = np.argsort(d2, kind="stable")[: min(nmax, len(values))]
    nb = coords[idx]
    C = covariance(spec, cdist(nb, nb))
    c = covariance(spec, cdist(nb, bp)).mean(axis=1)
    if spec.sill == 0.0:
        weights = np.full(len(idx), 1.0 / len(idx))
        return _weighted_mean(weights, values[idx]), 0.0, len(idx), KrigingSystem(C, c, weights, 0.0)
    cvv = float(np.mean(covariance(spec, cdist(bp, bp))))
    weights, multiplier = _solve_with_retry(C, c, spec.sill)
    mean = _weighted_mean(weights, values[idx])
    var = _clamp_variance(cvv - float(weights @ c) - multiplier, spec.sill)
    return mean, var, len(idx), KrigingSystem(C, c, weights, multiplier)


def predict_block(field: GridFieldSnapshot, area: AreaUnit, spec: VariogramSpec,
                  nmax: int, spacing: float | None = None, block_points=None) -> BlockPrediction:
    """Block-kriging prediction of the area mean and its error variance.

    Neighbours are the ``nmax`` samples closest to the centroid of the
    block discretization. Coincident samples are averaged first.
    """
    if block_points is None:
        if spacing is None:
            spacing = default_spacing(area)
        block_points = discretize_block(area, spacing)
    f = field.deduplicated()
    mean, var, n_used, _ = krige_block_points(spec, f.coords, f.values, block_points, nmax)
    return BlockPrediction(area.id, mean, var, n_used, spec.label, nmax)


def default_spacing(area: AreaUnit) -> float:
    """About 16 discretization points for a compact area."""
    return float(np.sqrt(area.area)) / 4.0


def krige_points(spec: VariogramSpec, coords, values, targets, nmax: int):
    """Local ordinary point kriging at many targets. Returns ``(means, variances)``."""
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    means, variances, _ = krige_blocks(spec, coords, values, targets[:, None, :], nmax)
    return means, variances
