"""Dense symmetric linear algebra for activation-space analysis.

Covariance of flattened activations is accumulated in streaming form
(per-column sums plus an unnormalized Gram matrix), so arbitrarily many
capture batches never have to be held in memory at once.  The centered
Gram is eigendecomposed with a cyclic Jacobi sweep, which is exact enough
for the filter counts that occur in practice (M <= ~512), deterministic,
and easy to verify against an independent solver.

Eigenvalue *ratios* are what matter downstream: no 1/(d-1) normalization
is applied to the Gram because it cancels out of every ratio.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DimensionError,
    InsufficientDataError,
    NumericalError,
    SymmetryError,
)

# Eigenvalues below this fraction of the largest one are treated as exact
# zeros when building the explained-variance curve: they are converged
# rounding noise, and counting them would report phantom rank.
RATIO_FLOOR = 1e-12

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-10


class CovAccumulator:
    """Streaming accumulator for a column-centered Gram matrix.

    Feed row batches with :func:`accumulate`; :func:`finalize` returns the
    centered Gram.  Single writer; independent accumulators may run in
    parallel for different layers.
    """

    def __init__(self, m: int):
        if m < 1:
            raise DimensionError(f"need at least one column, got m={m}")
        self.m = m
        self.d = 0
        self.batches = 0
        self.sum = np.zeros(m, dtype=np.float64)
        self.gram = np.zeros((m, m), dtype=np.float64)


def accumulate(acc: CovAccumulator, rows: np.ndarray) -> CovAccumulator:
    """Fold a (k, m) batch of row samples into the accumulator.

    Batch order does not affect the finalized covariance beyond
    floating-point reassociation.  Returns `acc` for chaining.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != acc.m:
        raise DimensionError(
            f"batch {acc.batches} has shape {rows.shape}, expected (*, {acc.m})"
        )
    if not np.isfinite(rows).all():
        raise DataError(f"batch {acc.batches} contains non-finite values")
    acc.d += rows.shape[0]
    acc.sum += rows.sum(axis=0)
    acc.gram += rows.T @ rows
    acc.batches += 1
    return acc


def finalize(acc: CovAccumulator) -> np.ndarray:
    """Return the column-centered Gram  C = X'X - d*mu*mu'  (symmetric).

    C shares eigenvalue ratios with the sample covariance, which is all the
    explained-variance analysis needs.
    """
    if acc.d < 2:
        raise InsufficientDataError(f"need at least 2 samples, have {acc.d}")
    mu = acc.sum / acc.d
    c = acc.gram - acc.d * np.outer(mu, mu)
    return (c + c.T) / 2.0


@dataclass(frozen=True)
class PcaSpectrum:
    """Eigendecomposition of a centered Gram, ordered by descending eigenvalue.

    `cumulative[i]` is the fraction of total variance explained by the
    first i+1 components; eigenvalues below RATIO_FLOOR of the largest
    (including tiny negatives from rounding) count as zero there.  For a
    zero matrix the curve is all zeros and the spectrum is "dead".
    """

    eigenvalues: np.ndarray   # (m,) non-increasing
    eigenvectors: np.ndarray  # (m, m), column i pairs with eigenvalue i
    total_variance: float
    cumulative: np.ndarray    # (m,) non-decreasing, last entry 1.0 unless dead

    @property
    def m(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def dead(self) -> bool:
        return bool(self.cumulative[-1] == 0.0)


def _check_symmetric(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {c.shape}")
    norm = np.linalg.norm(c)
    skew = np.linalg.norm(c - c.T)
    if skew > 1e-9 * max(norm, 1e-300):
        raise SymmetryError(
            f"matrix is not symmetric: |C - C'|_F = {skew:.3e} vs |C|_F = {norm:.3e}"
        )
    return (c + c.T) / 2.0


def _off_norm(a: np.ndarray) -> float:
    mask = ~np.eye(a.shape[0], dtype=bool)
    return float(np.sqrt(np.sum(a[mask] ** 2)))


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations; returns (diagonal, accumulated rotations)."""
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 1 or norm == 0.0:
        return np.diag(a).copy(), v
    target = JACOBI_TOL * norm
    for _ in range(JACOBI_MAX_SWEEPS):
        off = _off_norm(a)
        if off <= target:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 if theta >= 0.0 else -1.0
                    t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                cs = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * cs
                # Two-sided rotation on columns/rows p and q.
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = cs * ap - sn * aq
                a[:, q] = sn * ap + cs * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = cs * ap - sn * aq
                a[q, :] = sn * ap + cs * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
    off = _off_norm(a)
    if off <= target:
        return np.diag(a).copy(), v
    raise NumericalError(
        f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps "
        f"(off-diagonal residual {off:.3e}, target {target:.3e})"
    )


def eigendecompose(c: np.ndarray) -> PcaSpectrum:
    """Full eigendecomposition of a symmetric matrix via cyclic Jacobi.

    Output is deterministic: eigenpairs sorted by descending eigenvalue,
    ties broken by the pre-sort diagonal index, and each eigenvector's
    largest-magnitude entry made positive.
    """
    a = _check_symmetric(c)
    vals, vecs = _jacobi(a)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    flip = vecs[np.abs(vecs).argmax(axis=0), np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0

    positive = np.clip(vals, 0.0, None)
    if positive.max(initial=0.0) > 0.0:
        positive = np.where(positive < RATIO_FLOOR * positive.max(), 0.0, positive)
    raw = np.cumsum(positive)
    total_pos = raw[-1]
    cumulative = raw / total_pos if total_pos > 0.0 else raw
    return PcaSpectrum(
        eigenvalues=vals,
        eigenvectors=vecs,
        total_variance=float(vals.sum()),
        cumulative=cumulative,
    )


def significant_dimensions(spectrum: PcaSpectrum, threshold: float) -> int:
    """Smallest count of top components whose cumulative ratio reaches `threshold`.

    The threshold is read as ">=": exact equality is a measure-zero event.
    A dead spectrum (zero total variance) yields 0 and a warning.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if spectrum.dead:
        warnings.warn("dead layer: zero total variance, 0 significant dimensions")
        return 0
    return int(np.searchsorted(spectrum.cumulative, threshold, side="left")) + 1


def project_filters(filters: np.ndarray, spectrum: PcaSpectrum) -> np.ndarray:
    """Mix a filter bank into eigenfilters, ranked by explained variance.

    `filters` is (m, ...); output row k is sum_i V[i, k] * filters[i].
    The map is orthogonal in filter-index space, so the bank's Frobenius
    norm is preserved.
    """
    filters = np.asarray(filters, dtype=np.float64)
    if filters.shape[0] != spectrum.m:
        raise DimensionError(
            f"bank has {filters.shape[0]} filters, spectrum has {spectrum.m}"
        )
    flat = filters.reshape(filters.shape[0], -1)
    return (spectrum.eigenvectors.T @ flat).reshape(filters.shape)
