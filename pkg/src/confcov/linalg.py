"""Dense linear-algebra kernel shared by the estimators.

Data matrices are plain 2-D ``numpy`` arrays with observations in rows and
variables in columns. LAPACK (via ``numpy.linalg``) does the heavy lifting;
this module fixes the conventions on top of it: descending order, the
numerical-rank cutoff, and exact symmetry of returned projections.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DegenerateRank, NumericalFailure, RowCountTooSmall

EPS = np.finfo(float).eps


class SvdResult(NamedTuple):
    """Thin SVD ``m = u @ diag(sigma) @ v.T``.

    ``u`` and ``v`` keep all ``min(rows, cols)`` columns; ``rank`` counts the
    singular values above ``max(rows, cols) * eps * sigma[0]``.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank: int


def symmetrize(a):
    """Return ``(a + a.T) / 2``, which is exactly symmetric in floating point."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def center_columns(x):
    """Subtract column means.

    Parameters
    ----------
    x : array_like, shape (n + 1, p)
        Observations in rows.

    Returns
    -------
    numpy.ndarray
        Column-centred copy of ``x``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise RowCountTooSmall(f"need at least 2 rows to centre, got {x.shape[0]}")
    return x - x.mean(axis=0)


def rank_tolerance(shape, sigma_max):
    return max(shape) * EPS * sigma_max


def thin_svd(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    try:
        u, sigma, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    if sigma.size == 0 or sigma[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(sigma > rank_tolerance(m.shape, sigma[0])))
    return SvdResult(u=u, sigma=sigma, v=vt.T, rank=rank)


def row_space_projection(m):
    """Orthogonal projection onto the row space of ``m``.

    Only right singular vectors whose singular value exceeds the rank
    tolerance contribute, so the result is ``V_r V_r^T`` with ``r`` the
    numerical rank.

    Raises
    ------
    DegenerateRank
        If ``m`` has numerical rank zero.
    """
    svd = thin_svd(m)
    if svd.rank == 0:
        raise DegenerateRank("row space is trivial (rank 0)")
    vr = svd.v[:, : svd.rank]
    return symmetrize(vr @ vr.T)


def sym_eig(s):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns
    -------
    eigenvalues : numpy.ndarray, shape (p,)
    eigenvectors : numpy.ndarray, shape (p, p)
        Orthonormal columns; ``s = P @ diag(eigenvalues) @ P.T``.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    try:
        w, p = np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return w[::-1].copy(), p[:, ::-1].copy()
