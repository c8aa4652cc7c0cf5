"""Graph estimation from a (possibly scale-free) covariance estimate.

Two consumers of an estimated covariance are provided: nodewise Lasso
regressions, which only need the covariance as Gram matrix, and the PC
algorithm driven by thresholded partial correlations. Both are invariant
to multiplying the input by a positive constant, so RSVP output can be fed
in directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import NodewiseFailure, NotConverged, SingularGram, TooLargeForExhaustive
from .metrics import EdgeSet

DEFAULT_LAMBDA = 1e-6
COND_LIMIT = 1e12
_POLISH_EVERY = 1000  # sweeps between active-set polishing attempts


@dataclass(frozen=True)
class NodewiseFit:
    j: int
    beta: np.ndarray
    lam: float
    kkt_residual: float
    n_sweeps: int

    @property
    def support(self):
        return frozenset(np.flatnonzero(self.beta).tolist())


@numba.njit(cache=True)
def _fill_gradient(est, j, beta, grad):
    # grad[k] = est[k, j] - (est @ beta)[k]
    p = est.shape[0]
    for k in range(p):
        g = est[k, j]
        for l in range(p):
            g -= est[k, l] * beta[l]
        grad[k] = g


@numba.njit(cache=True)
def _kkt_from_gradient(j, beta, grad, lam):
    worst = 0.0
    for k in range(beta.shape[0]):
        if k == j:
            continue
        g = grad[k]
        if beta[k] > 0.0:
            r = abs(g - lam)
        elif beta[k] < 0.0:
            r = abs(g + lam)
        else:
            r = max(abs(g) - lam, 0.0)
        if r > worst:
            worst = r
    return worst


@numba.njit(cache=True)
def _kkt(est, j, beta, lam):
    grad = np.empty(est.shape[0])
    _fill_gradient(est, j, beta, grad)
    return _kkt_from_gradient(j, beta, grad, lam)


@numba.njit(cache=True)
def _coordinate_descent(est, j, lam, beta, tol, max_iter):
    """Cyclic coordinate descent; returns (status, sweeps, kkt).

    status: 0 converged, 1 hit max_iter, 2 zero diagonal with active gradient.
    The running gradient is rebuilt from scratch before each convergence
    check so rounding drift cannot stall the KKT test.
    """
    p = est.shape[0]
    grad = np.empty(p)
    _fill_gradient(est, j, beta, grad)
    for sweep in range(1, max_iter + 1):
        max_change = 0.0
        for k in range(p):
            if k == j:
                continue
            akk = est[k, k]
            z = grad[k] + akk * beta[k]
            if akk <= 0.0:
                if abs(z) > lam:
                    return 2, sweep, np.inf
                new = 0.0
            elif z > lam:
                new = (z - lam) / akk
            elif z < -lam:
                new = (z + lam) / akk
            else:
                new = 0.0
            delta = new - beta[k]
            if delta != 0.0:
                beta[k] = new
                for l in range(p):
                    grad[l] -= est[l, k] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            _fill_gradient(est, j, beta, grad)
            kkt = _kkt_from_gradient(j, beta, grad, lam)
            if kkt <= tol:
                return 0, sweep, kkt
    return 1, max_iter, _kkt(est, j, beta, lam)


def _polish_active_set(est, j, lam, beta, tol):
    """Finish a stalled coordinate descent by an exact solve on the support.

    Coordinate descent crawls on rank-deficient Gram matrices. With the
    support and signs held fixed, one Newton step solves the smooth part;
    any remaining null-space direction of the support Gram matrix only
    changes the objective linearly through the penalty, so the iterate is
    moved along it until a coefficient reaches zero, which is then dropped.
    Returns ``(beta, kkt)`` if the result passes the KKT test, else None.
    """
    beta = beta.copy()
    for _ in range(beta.size):
        active = np.flatnonzero(beta)
        if active.size == 0:
            return None
        signs = np.sign(beta[active])
        gram = est[np.ix_(active, active)]
        grad = est[active, j] - est[active] @ beta
        w, v = np.linalg.eigh(gram)
        keep = w > active.size * np.finfo(float).eps * max(w[-1], 1.0)
        coef = beta[active] + v[:, keep] @ ((v[:, keep].T @ (grad - lam * signs)) / w[keep])
        if np.any(np.sign(coef) != signs):
            return None
        null = v[:, ~keep]
        direction = -null @ (null.T @ signs)
        shrinking = coef * direction < 0
        if lam == 0 or null.shape[1] == 0 or not np.any(shrinking):
            beta[active] = coef
            break
        ratios = -coef[shrinking] / direction[shrinking]
        coef = coef + ratios.min() * direction
        coef[np.flatnonzero(shrinking)[np.argmin(ratios)]] = 0.0
        beta[active] = coef
    kkt = _kkt(est, j, beta, lam)
    return (beta, kkt) if kkt <= tol else None


def nodewise_lasso(est, j, lam=DEFAULT_LAMBDA, tol=1e-10, max_iter=100_000):
    """Lasso regression of node ``j`` on the others, from covariance input only.

    Minimises ``0.5 b' est b - b' est[:, j] + lam ||b||_1`` over ``b`` with
    ``b[j] = 0``. A solve counts as converged once a full sweep changes no
    coefficient by more than ``tol`` *and* the KKT violation is at most
    ``tol``.

    Raises
    ------
    SingularGram
        ``lam = 0`` and ``est`` without row/column ``j`` is singular, or a
        zero-variance coordinate has a nonzero gradient.
    NotConverged
        ``max_iter`` sweeps were not enough.
    """
    est = np.ascontiguousarray(est, dtype=float)
    p = est.shape[0]
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0 <= j < p:
        raise IndexError(f"node {j} out of range for p={p}")
    if lam == 0 and p > 1:
        rest = np.delete(np.arange(p), j)
        sub = est[np.ix_(rest, rest)]
        if np.linalg.cond(sub) > COND_LIMIT or np.linalg.eigvalsh(sub)[0] <= 0:
            raise SingularGram(f"est without node {j} is not positive definite")
    beta = np.zeros(p)
    done = 0
    while True:
        chunk = min(_POLISH_EVERY, max_iter - done)
        status, sweeps, kkt = _coordinate_descent(est, j, float(lam), beta, float(tol), int(chunk))
        done += sweeps
        if status != 1 or done >= max_iter:
            break
        polished = _polish_active_set(est, j, float(lam), beta, tol)
        if polished is not None:
            beta, kkt, status = polished[0], polished[1], 0
            break
    sweeps = done
    if status == 2:
        raise SingularGram("zero-variance coordinate with nonzero gradient")
    if status == 1:
        raise NotConverged(max_iter, kkt)
    beta[j] = 0.0
    return NodewiseFit(j=j, beta=beta, lam=float(lam), kkt_residual=float(kkt), n_sweeps=int(sweeps))


def nodewise_objective(est, j, beta, lam):
    est = np.asarray(est, dtype=float)
    return 0.5 * beta @ est @ beta - beta @ est[:, j] + lam * np.sum(np.abs(beta))


def threshold_support(fit, thresh):
    """Indices with ``|beta_k| >= thresh`` (the nonzero support when thresh is 0)."""
    if thresh < 0:
        raise ValueError(f"threshold must be non-negative, got {thresh}")
    if thresh == 0:
        return fit.support
    return frozenset(np.flatnonzero(np.abs(fit.beta) >= thresh).tolist())


def cig_estimate(est, lam=DEFAULT_LAMBDA, rule="and", tol=1e-10, max_iter=100_000):
    """Conditional independence graph via neighbourhood selection.

    Returns
    -------
    edges : EdgeSet
    precision_proxy : numpy.ndarray
        Unit diagonal; off-diagonal ``-sign(b_jk) sqrt(|b_jk b_kj|)`` where
        ``b_jk`` is coefficient ``k`` of the fit for node ``j`` and ``j < k``.
    """
    if rule not in ("and", "or"):
        raise ValueError(f"rule must be 'and' or 'or', got {rule!r}")
    est = np.asarray(est, dtype=float)
    p = est.shape[0]
    coef = np.zeros((p, p))  # coef[j, k] = beta^(j)_k
    failures = {}
    for j in range(p):
        try:
            coef[j] = nodewise_lasso(est, j, lam, tol, max_iter).beta
        except (NotConverged, SingularGram) as exc:
            failures[j] = exc
    if failures:
        raise NodewiseFailure(failures)
    nz = coef != 0.0
    both = nz & nz.T
    adj = both if rule == "and" else (nz | nz.T)
    iu, ju = np.nonzero(np.triu(adj, k=1))
    edges = EdgeSet(frozenset(zip(iu.tolist(), ju.tolist())), p)
    mag = np.sqrt(np.abs(coef * coef.T))
    upper = np.triu(-np.sign(coef) * mag, k=1)
    proxy = upper + upper.T
    np.fill_diagonal(proxy, 1.0)
    return edges, proxy


def partial_correlation(est, j, k, cond=()):
    """Partial correlation of ``j`` and ``k`` given ``cond`` from ``inv(est[A, A])``.

    Returns ``None`` when ``est[A, A]`` is numerically singular (condition
    number above 1e12), which callers treat as conditional independence.
    """
    cond = tuple(cond)
    if j == k:
        raise ValueError("j and k must differ")
    if j in cond or k in cond:
        raise ValueError("j and k must not be in the conditioning set")
    a = [j, k, *cond]
    sub = np.asarray(est, dtype=float)[np.ix_(a, a)]
    if not np.all(np.isfinite(sub)) or np.linalg.cond(sub) > COND_LIMIT:
        return None
    psi = np.linalg.inv(sub)
    denom = psi[0, 0] * psi[1, 1]
    if denom <= 0:
        return None
    return float(-psi[0, 1] / np.sqrt(denom))


def _ci_statistic(est, j, k, cond):
    # order (min, max) so that (j,k,S) and (k,j,S) give bitwise equal values
    r = partial_correlation(est, min(j, k), max(j, k), cond)
    return None if r is None else abs(r)


def ci_test(est, j, k, cond, tau):
    """``True`` (dependent) iff ``|partial correlation| >= tau``."""
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    stat = _ci_statistic(est, j, k, tuple(cond))
    return stat is not None and stat >= tau


def _pair(a, b):
    return (a, b) if a < b else (b, a)


def pc_skeleton(est, tau, max_cond_size=None):
    """Order-independent (PC-stable) skeleton search.

    Returns
    -------
    skeleton : EdgeSet
    sepsets : dict
        Maps each removed pair ``(j, k)``, ``j < k``, to its separating set.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    est = np.asarray(est, dtype=float)
    p = est.shape[0]
    if max_cond_size is None:
        max_cond_size = max(p - 2, 0)
    adj = {v: set(range(p)) - {v} for v in range(p)}
    sepsets = {}
    level = 0
    while level <= max_cond_size:
        frozen = {v: sorted(nb) for v, nb in adj.items()}
        if all(len(nb) - 1 < level for nb in frozen.values()):
            break
        for j, k in itertools.combinations(range(p), 2):
            if k not in adj[j]:
                continue
            found = None
            for a, b in ((j, k), (k, j)):
                candidates = [v for v in frozen[a] if v != b]
                for cond in itertools.combinations(candidates, level):
                    if not ci_test(est, j, k, cond, tau):
                        found = frozenset(cond)
                        break
                if found is not None:
                    break
            if found is not None:
                adj[j].discard(k)
                adj[k].discard(j)
                sepsets[(j, k)] = found
        level += 1
    edges = frozenset((j, k) for j in range(p) for k in adj[j] if j < k)
    return EdgeSet(edges, p), sepsets


@dataclass
class Cpdag:
    p: int
    directed: set = field(default_factory=set)
    undirected: set = field(default_factory=set)
    sepsets: dict = field(default_factory=dict)
    conflicts: set = field(default_factory=set)

    def adjacent(self, a, b):
        return (a, b) in self.directed or (b, a) in self.directed or _pair(a, b) in self.undirected

    def is_undirected(self, a, b):
        return _pair(a, b) in self.undirected

    def orient(self, a, b):
        self.undirected.discard(_pair(a, b))
        self.directed.add((a, b))


def _meek_step(g):
    """Apply the first applicable Meek rule once; return True if an edge was oriented."""
    nodes = range(g.p)
    for a, b in sorted(g.undirected):
        if _pair(a, b) in g.conflicts:
            continue
        for x, y in ((a, b), (b, a)):
            # R1: c -> x, x - y, c and y nonadjacent  =>  x -> y
            if any(c != y and not g.adjacent(c, y) for c, t in g.directed if t == x):
                g.orient(x, y)
                return True
            # R2: x -> c -> y and x - y  =>  x -> y
            if any((x, c) in g.directed and (c, y) in g.directed for c in nodes):
                g.orient(x, y)
                return True
            # R3: x - c, x - d, c -> y, d -> y, c and d nonadjacent  =>  x -> y
            parents = [c for c in nodes if (c, y) in g.directed and g.is_undirected(x, c)]
            if any(not g.adjacent(c, d) for c, d in itertools.combinations(parents, 2)):
                g.orient(x, y)
                return True
            # R4: x - c, c -> d -> y, x adjacent d, c and y nonadjacent  =>  x -> y
            for c in nodes:
                if c in (x, y) or not g.is_undirected(x, c) or g.adjacent(c, y):
                    continue
                if any((c, d) in g.directed and (d, y) in g.directed and g.adjacent(x, d) for d in nodes):
                    g.orient(x, y)
                    return True
    return False


def cpdag_orient(skeleton, sepsets):
    """Orient v-structures, then close under Meek's rules 1-4.

    When v-structures demand both directions of an edge, it is left
    undirected and recorded in ``Cpdag.conflicts``.
    """
    p = skeleton.p
    adj = {v: set() for v in range(p)}
    for j, k in skeleton.edges:
        adj[j].add(k)
        adj[k].add(j)
    demanded = set()
    for j, k in itertools.combinations(range(p), 2):
        if k in adj[j]:
            continue
        sep = sepsets.get((j, k))
        if sep is None:
            raise KeyError(f"no separating set recorded for non-adjacent pair {(j, k)}")
        for m in sorted(adj[j] & adj[k]):
            if m not in sep:
                demanded.add((j, m))
                demanded.add((k, m))
    g = Cpdag(p=p, sepsets=dict(sepsets))
    for a, b in skeleton.edges:
        fwd, bwd = (a, b) in demanded, (b, a) in demanded
        if fwd and bwd:
            g.undirected.add((a, b))
            g.conflicts.add((a, b))
        elif fwd:
            g.directed.add((a, b))
        elif bwd:
            g.directed.add((b, a))
        else:
            g.undirected.add((a, b))
    while _meek_step(g):
        pass
    return g


def cpdag_diagnostics(sigma, d, nonzero_tol=1e-10):
    """Minimum nonzero partial correlation and minimum restricted eigenvalue.

    Both are found by exhaustive enumeration, so ``p <= 15`` and ``d <= 4``.

    Returns
    -------
    omega_min : float or None
        ``min |rho_{jk|S}|`` over ``|S| <= d`` with ``|rho| > nonzero_tol``;
        ``None`` if every partial correlation vanishes.
    sigma_r : float
        ``min lambda_min(sigma[I, I])`` over ``|I| <= d + 2``.
    """
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    if p > 15 or d > 4:
        raise TooLargeForExhaustive(f"exhaustive enumeration needs p <= 15 and d <= 4, got p={p}, d={d}")
    omega_min = None
    for j, k in itertools.combinations(range(p), 2):
        others = [v for v in range(p) if v not in (j, k)]
        for size in range(min(d, len(others)) + 1):
            for cond in itertools.combinations(others, size):
                r = partial_correlation(sigma, j, k, cond)
                if r is None or abs(r) <= nonzero_tol:
                    continue
                if omega_min is None or abs(r) < omega_min:
                    omega_min = abs(r)
    sigma_r = np.inf
    for size in range(1, min(d + 2, p) + 1):
        for idx in itertools.combinations(range(p), size):
            sigma_r = min(sigma_r, float(np.linalg.eigvalsh(sigma[np.ix_(idx, idx)])[0]))
    return omega_min, sigma_r
