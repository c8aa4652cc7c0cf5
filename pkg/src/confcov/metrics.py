"""Scale-invariant comparisons between an estimate and the true covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RTooLarge, ZeroVariance

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScaleFit:
    kappa: float
    residual: float
    norm_kind: str
    clamped: bool = False  # unconstrained optimum was negative


def _upper(a):
    a = np.asarray(a, dtype=float)
    return a[np.triu_indices(a.shape[0], k=1)]


def offdiag_correlation(a, b):
    """Pearson correlation between the strict upper triangles of ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    u, v = _upper(a), _upper(b)
    u = u - u.mean()
    v = v - v.mean()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVariance("off-diagonal entries are constant")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def best_kappa_frobenius(sigma, est):
    """``min_{kappa >= 0} ||sigma - kappa * est||_F`` in closed form."""
    sigma = np.asarray(sigma, dtype=float)
    est = np.asarray(est, dtype=float)
    denom = float(np.sum(est * est))
    if denom == 0.0:
        return ScaleFit(0.0, float(np.linalg.norm(sigma)), "frobenius")
    kappa = float(np.sum(sigma * est)) / denom
    clamped = kappa < 0.0
    kappa = max(kappa, 0.0)
    return ScaleFit(kappa, float(np.linalg.norm(sigma - kappa * est)), "frobenius", clamped)


def best_kappa_linf(sigma, est, tol=1e-10):
    """``min_{kappa >= 0} max_jk |sigma_jk - kappa * est_jk|`` by golden-section search.

    The objective is convex and piecewise linear in ``kappa``; the search runs
    on ``[0, 1 + 2 max|sigma| / max|est|]`` until the bracket is narrower
    than ``tol``. Diagonal entries are included.
    """
    s = np.asarray(sigma, dtype=float).ravel()
    e = np.asarray(est, dtype=float).ravel()
    smax, emax = float(np.max(np.abs(s))), float(np.max(np.abs(e)))
    if emax == 0.0:
        return ScaleFit(0.0, smax, "linf")

    def f(k):
        return float(np.max(np.abs(s - k * e)))

    lo, hi = 0.0, 1.0 + 2.0 * smax / emax
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
    kappa = 0.5 * (lo + hi)
    fk = f(kappa)
    if f(0.0) <= fk:
        kappa, fk = 0.0, f(0.0)
    return ScaleFit(kappa, fk, "linf")


@dataclass(frozen=True)
class EdgeSet:
    """Undirected edges stored as sorted pairs ``(j, k)`` with ``j < k``."""

    edges: frozenset
    p: int

    def __post_init__(self):
        norm = set()
        for j, k in self.edges:
            j, k = int(j), int(k)
            if j == k:
                raise ValueError(f"self-loop ({j}, {k})")
            if not (0 <= j < self.p and 0 <= k < self.p):
                raise ValueError(f"edge ({j}, {k}) out of range for p={self.p}")
            norm.add((min(j, k), max(j, k)))
        object.__setattr__(self, "edges", frozenset(norm))

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(sorted(self.edges))

    def __contains__(self, pair):
        j, k = pair
        return (min(j, k), max(j, k)) in self.edges


def top_edges(s, r):
    """The ``r`` pairs with largest ``|s_jk|``; ties go to the lexicographically smaller pair."""
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    iu, ju = np.triu_indices(p, k=1)
    if r > iu.size:
        raise RTooLarge(f"r={r} exceeds the {iu.size} available pairs")
    if r <= 0:
        return EdgeSet(frozenset(), p)
    # lexsort: last key is primary; triu order is already lexicographic
    order = np.lexsort((np.arange(iu.size), -np.abs(s[iu, ju])))[:r]
    return EdgeSet(frozenset(zip(iu[order].tolist(), ju[order].tolist())), p)


def jaccard(e1, e2):
    if e1.p != e2.p:
        raise ValueError(f"edge sets over different node counts: {e1.p} vs {e2.p}")
    union = e1.edges | e2.edges
    if not union:
        return 1.0
    return len(e1.edges & e2.edges) / len(union)
