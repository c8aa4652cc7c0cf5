"""Covariance estimators for data confounded by latent factors.

All estimators start from the column-centred data ``Xc = U diag(lam) V^T``
(``n + 1`` rows, ``n`` effective samples). RSVP replaces every nonzero
singular value by one and returns the projection ``V V^T``; it is only
defined up to a positive scale. PC-removal zeroes the top ``ell`` squared
singular values instead.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    EllOutOfRange,
    InvalidSpectrumMap,
    InvalidSubsampleCount,
    KmaxOutOfRange,
    SubsampleNotHighDimensional,
    SubsampleTooSmall,
)
from .linalg import center_columns, row_space_projection, symmetrize, thin_svd

METHODS = ("rsvp", "rsvp-split", "rsvp-sub", "pca-removal", "empirical", "spectral")
SCALE_FREE = frozenset({"rsvp", "rsvp-split", "rsvp-sub"})


@dataclass(frozen=True)
class CovEstimate:
    matrix: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    @property
    def scale_free(self):
        return self.method in SCALE_FREE


@dataclass(frozen=True)
class SubsampleConfig:
    """Row-subsampling setup for :func:`rsvp_split` and :func:`rsvp_sub`.

    In ``"split"`` mode the number of blocks is derived from the row count,
    so ``b`` must be left as ``None``.
    """

    m: int
    seed: int = 0
    mode: str = "split"
    b: int | None = None

    def __post_init__(self):
        if self.mode not in ("split", "sub"):
            raise ValueError(f"mode must be 'split' or 'sub', got {self.mode!r}")
        if self.mode == "split" and self.b is not None:
            raise ValueError("b is derived in split mode and must not be supplied")
        if self.mode == "sub" and self.b is None:
            raise InvalidSubsampleCount("b is required in sub mode")

    @classmethod
    def split(cls, m, seed=0):
        return cls(m=m, seed=seed, mode="split")

    @classmethod
    def sub(cls, m, b, seed=0):
        return cls(m=m, seed=seed, mode="sub", b=b)

    def n_blocks(self, n_rows):
        """Number of subsamples used on data with ``n_rows`` rows."""
        if self.mode == "sub":
            return self.b
        return len(split_blocks(n_rows, self.m))


def child_rng(seed, *key):
    """Generator for stream ``key`` under ``seed``, independent of call order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def split_blocks(n_rows, m):
    """Sizes of the consecutive blocks used by sample splitting.

    ``ceil(n_rows / m)`` blocks of size ``m``; a trailing block with fewer
    than 3 rows is merged into its predecessor.
    """
    sizes = [m] * (n_rows // m)
    rem = n_rows - m * len(sizes)
    if rem:
        if rem < 3 and sizes:
            sizes[-1] += rem
        else:
            sizes.append(rem)
    return sizes


def _check_subsample(x, m):
    if m < 3:
        raise SubsampleTooSmall(f"subsample size must be >= 3, got {m}")
    n_rows, p = x.shape
    if m - 1 >= p:
        raise SubsampleNotHighDimensional(f"need m - 1 < p, got m={m}, p={p}")
    if m > n_rows:
        raise SubsampleTooSmall(f"subsample size {m} exceeds the {n_rows} available rows")


def _average_projections(x, index_sets, workers):
    def one(rows):
        return row_space_projection(center_columns(x[rows]))

    if workers and workers > 1 and len(index_sets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            projections = list(pool.map(one, index_sets))
    else:
        projections = map(one, index_sets)
    # index-ordered reduction keeps the sum independent of the worker count
    total = None
    for proj in projections:
        total = proj if total is None else total + proj
    return symmetrize(total / len(index_sets))


def rsvp(x):
    """Right singular vector projection of the column-centred data.

    Raises
    ------
    DegenerateRank
        If all rows of ``x`` are identical.
    """
    x = np.asarray(x, dtype=float)
    return CovEstimate(row_space_projection(center_columns(x)), "rsvp")


def rsvp_split(x, cfg, workers=1):
    """Sample-splitting RSVP.

    Rows are shuffled with ``cfg.seed`` and cut into consecutive disjoint
    blocks (see :func:`split_blocks`); each block is centred on its own and
    the block projections are averaged with equal weights.
    """
    if cfg.mode != "split":
        raise ValueError("rsvp_split needs a split-mode SubsampleConfig")
    x = np.asarray(x, dtype=float)
    _check_subsample(x, cfg.m)
    perm = child_rng(cfg.seed, 0).permutation(x.shape[0])
    blocks, start = [], 0
    for size in split_blocks(x.shape[0], cfg.m):
        blocks.append(np.sort(perm[start : start + size]))
        start += size
    mat = _average_projections(x, blocks, workers)
    return CovEstimate(mat, "rsvp-split", {"m": cfg.m, "B": len(blocks), "seed": cfg.seed})


def rsvp_sub(x, cfg, workers=1):
    """Subsampling RSVP: average over ``cfg.b`` independent draws of ``cfg.m`` rows."""
    if cfg.mode != "sub":
        raise ValueError("rsvp_sub needs a sub-mode SubsampleConfig")
    if cfg.b is None or cfg.b < 1:
        raise InvalidSubsampleCount(f"need at least one subsample, got b={cfg.b}")
    x = np.asarray(x, dtype=float)
    _check_subsample(x, cfg.m)
    n_rows = x.shape[0]
    draws = [
        np.sort(child_rng(cfg.seed, 1, b).choice(n_rows, size=cfg.m, replace=False))
        for b in range(cfg.b)
    ]
    mat = _average_projections(x, draws, workers)
    return CovEstimate(mat, "rsvp-sub", {"m": cfg.m, "B": cfg.b, "seed": cfg.seed})


def _centered_spectrum(x):
    x = np.asarray(x, dtype=float)
    svd = thin_svd(center_columns(x))
    r = svd.rank
    return svd.v[:, :r], svd.sigma[:r] ** 2, x.shape[0] - 1


def spectral_estimate(x, h: Callable[[np.ndarray], np.ndarray], *, method="spectral", params=None):
    """``(1/n) V diag(h(lam^2)) V^T`` over the nonzero singular directions.

    ``h`` receives the descending squared singular values of the centred data
    and must return a non-negative vector of the same length.
    """
    v, lam2, n = _centered_spectrum(x)
    weights = np.asarray(h(lam2.copy()), dtype=float)
    if weights.shape != lam2.shape:
        raise InvalidSpectrumMap(f"spectrum map returned shape {weights.shape}, expected {lam2.shape}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise InvalidSpectrumMap("spectrum map returned negative or non-finite values")
    mat = symmetrize((v * (weights / n)) @ v.T)
    return CovEstimate(mat, method, dict(params or {}))


def pca_removal(x, ell):
    """Empirical covariance with the top ``ell`` principal components removed."""
    v, lam2, n = _centered_spectrum(x)
    rank = lam2.size
    if not 0 <= ell <= rank:
        raise EllOutOfRange(f"ell must lie in [0, {rank}], got {ell}")
    w = lam2[ell:] / n
    vv = v[:, ell:]
    return CovEstimate(symmetrize((vv * w) @ vv.T), "pca-removal", {"ell": int(ell)})


def empirical_covariance(x):
    """``Xc^T Xc / n`` computed directly from the centred data."""
    xc = center_columns(x)
    n = xc.shape[0] - 1
    return CovEstimate(symmetrize(xc.T @ xc / n), "empirical")


def bai_ng_criterion(lam2, n, p, kmax):
    """IC_p1 values for k = 0..kmax given squared singular values ``lam2``."""
    lam2 = np.asarray(lam2, dtype=float)
    tails = np.concatenate([np.cumsum(lam2[::-1])[::-1], [0.0]])
    v = tails[: kmax + 1] / (n * p)
    penalty = (n + p) / (n * p) * math.log(n * p / (n + p))
    with np.errstate(divide="ignore"):
        return np.log(v) + np.arange(kmax + 1) * penalty


def bai_ng_select(x, kmax):
    """Number of factors chosen by the first Bai-Ng information criterion.

    Ties go to the smaller ``k``. ``kmax = 0`` trivially returns 0.
    """
    x = np.asarray(x, dtype=float)
    _, lam2, n = _centered_spectrum(x)
    rank = lam2.size
    if kmax == 0:
        return 0
    if not 1 <= kmax <= rank - 1:
        raise KmaxOutOfRange(f"kmax must lie in [1, {rank - 1}], got {kmax}")
    ic = bai_ng_criterion(lam2, n, x.shape[1], kmax)
    return int(np.argmin(ic))  # argmin returns the first minimiser


def default_subsample_size(p):
    """Rule-of-thumb subsample size ``round(2 sqrt(p))``, at least 3."""
    return max(3, int(round(2.0 * math.sqrt(p))))
