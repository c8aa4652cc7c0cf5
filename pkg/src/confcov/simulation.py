"""Simulated confounded data ``x = w + Gamma h`` and population diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import IndivisibleDimension, RankDeficientLoadings, SingularConstruction
from .estimators import child_rng
from .linalg import sym_eig, symmetrize, thin_svd

KINDS = ("block", "block2", "toeplitz", "toeplitz2", "erdos_renyi")
LATENT_DIM = {"block": 20, "block2": 20, "toeplitz": 20, "toeplitz2": 3, "erdos_renyi": 20}
ALLOWED_DF = (1, 2, 3, 5, 10, 20, 50, 100, math.inf)
LINKS = ("linear", "max_linear")

BLOCK_CORR = 0.95
LARGE_BLOCK_CORR = 0.5
TOEPLITZ_OFFDIAG = -0.4999
ER_ROW_BUDGET = 0.99
ER_SLACK = 1e-6

# stream ids under a cell seed
_SIGMA_STREAM, _GAMMA_STREAM, _DATA_STREAM = 0, 1, 2


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    p: int
    n: int
    nu: float
    df1: float = math.inf
    df2: float = math.inf
    link: str = "linear"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if self.kind in ("block", "block2") and self.p % 10:
            raise IndivisibleDimension(f"{self.kind} needs p divisible by 10, got {self.p}")
        if self.p < self.q + 1:
            raise ValueError(f"need p >= q + 1 = {self.q + 1}, got p={self.p}")
        if self.n < 2:
            raise ValueError(f"need n >= 2, got {self.n}")
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        for name in ("df1", "df2"):
            if getattr(self, name) not in ALLOWED_DF:
                raise ValueError(f"{name} must be one of {ALLOWED_DF}, got {getattr(self, name)}")

    @property
    def q(self):
        return LATENT_DIM[self.kind]


@dataclass(frozen=True)
class GroundTruth:
    sigma: np.ndarray
    omega: np.ndarray
    gamma: np.ndarray

    @property
    def q(self):
        return self.gamma.shape[1]

    @property
    def p(self):
        return self.sigma.shape[0]

    @property
    def theta(self):
        return self.sigma + self.gamma @ self.gamma.T


@dataclass(frozen=True)
class Diagnostics:
    gamma_l: float
    gamma_u: float
    sigma_l: float
    sigma_u: float
    rho1: float
    rho2: float
    eta: np.ndarray
    s: int

    def to_dict(self):
        out = {k: float(getattr(self, k)) for k in ("gamma_l", "gamma_u", "sigma_l", "sigma_u", "rho1", "rho2")}
        out["eta"] = [float(e) for e in self.eta]
        out["s"] = int(self.s)
        return out


def _unit_diagonal(omega):
    """Invert ``omega`` and rescale both matrices so the covariance has unit diagonal."""
    try:
        sigma = np.linalg.inv(omega)
    except np.linalg.LinAlgError as exc:
        raise SingularConstruction(str(exc)) from exc
    d = np.sqrt(np.diag(sigma))
    sigma = symmetrize(sigma / np.outer(d, d))
    np.fill_diagonal(sigma, 1.0)
    return sigma, symmetrize(omega * np.outer(d, d))


def _block_sigma(sizes, corrs):
    p = sum(sizes)
    sigma = np.zeros((p, p))
    start = 0
    for size, r in zip(sizes, corrs):
        sigma[start : start + size, start : start + size] = r
        start += size
    np.fill_diagonal(sigma, 1.0)
    return sigma


def toeplitz_precision(p):
    """Circulant tridiagonal precision: unit diagonal, -0.4999 on both neighbours."""
    omega = np.eye(p)
    idx = np.arange(p)
    omega[idx, (idx + 1) % p] = TOEPLITZ_OFFDIAG
    omega[(idx + 1) % p, idx] = TOEPLITZ_OFFDIAG
    return omega


def erdos_renyi_precision(p, rng):
    upper = np.triu(rng.random((p, p)) < min(1.0, 10.0 / p), k=1)
    adj = upper | upper.T
    omega = np.eye(p)
    max_deg = adj.sum(axis=1).max() if p > 1 else 0
    if max_deg:
        omega[adj] = -(ER_ROW_BUDGET - ER_SLACK) / max_deg
    return omega


def build_scenario_sigma(kind, p, seed=0):
    """Idiosyncratic covariance and its inverse for one of the five scenarios.

    Returns
    -------
    sigma, omega : numpy.ndarray
        ``sigma`` has unit diagonal and ``omega = inv(sigma)``.
    """
    if kind in ("block", "block2"):
        if p % 10 or p < 20:
            raise IndivisibleDimension(f"{kind} needs p >= 20 divisible by 10, got {p}")
        if kind == "block":
            sigma = _block_sigma([p // 10] * 10, [BLOCK_CORR] * 10)
        else:
            if p % 20:
                raise IndivisibleDimension(f"block2 needs p divisible by 20, got {p}")
            half = p // 2
            sigma = _block_sigma([half // 10] * 10 + [p - half], [BLOCK_CORR] * 10 + [LARGE_BLOCK_CORR])
        return sigma, symmetrize(np.linalg.inv(sigma))
    if kind in ("toeplitz", "toeplitz2"):
        return _unit_diagonal(toeplitz_precision(p))
    if kind == "erdos_renyi":
        return _unit_diagonal(erdos_renyi_precision(p, child_rng(seed, _SIGMA_STREAM)))
    raise ValueError(f"unknown scenario kind {kind!r}")


def _standard_t_rows(rng, n, d, df):
    """``n`` rows of a d-variate t with identity shape (Gaussian when df is inf)."""
    z = rng.standard_normal((n, d))
    if math.isinf(df):
        return z
    radius = np.sqrt(rng.chisquare(df, size=n) / df)
    return z / radius[:, None]


def sample_loadings(p, q, nu, df2=math.inf, seed=0):
    """Loadings with rows i.i.d. (Gaussian or multivariate t), column k scaled by ``nu * exp(-k)``."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if nu < 0:
        raise ValueError(f"nu must be non-negative, got {nu}")
    rng = child_rng(seed, _GAMMA_STREAM)
    gamma = _standard_t_rows(rng, p, q, df2)
    return gamma * (nu * np.exp(-np.arange(1, q + 1)))


def make_ground_truth(spec):
    sigma, omega = build_scenario_sigma(spec.kind, spec.p, spec.seed)
    gamma = sample_loadings(spec.p, spec.q, spec.nu, spec.df2, spec.seed)
    return GroundTruth(sigma=sigma, omega=omega, gamma=gamma)


def _sqrt_factor(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sigma)
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_dataset(gt, n, df1=math.inf, link="linear", seed=0, return_latent=False):
    """Draw ``n`` observations of ``x = w + Gamma h`` (or its max-linear variant).

    ``w`` has shape matrix ``gt.sigma`` and ``h`` identity shape; both are
    Gaussian when ``df1`` is infinite and multivariate t with ``df1`` degrees
    of freedom otherwise. With ``link="max_linear"`` the observation is
    ``max(w_j, (Gamma h)_j)`` coordinatewise.

    With ``return_latent=True`` also returns ``w`` and ``Gamma h``.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}")
    rng = child_rng(seed, _DATA_STREAM)
    w = _standard_t_rows(rng, n, gt.p, df1) @ _sqrt_factor(gt.sigma).T
    if gt.q:
        confound = _standard_t_rows(rng, n, gt.q, df1) @ gt.gamma.T
    else:
        confound = np.zeros_like(w)
    x = w + confound if link == "linear" else np.maximum(w, confound)
    if return_latent:
        return x, w, confound
    return x


def loadings_projection(gamma):
    """Projection onto the column space of ``gamma`` and its numerical rank."""
    gamma = np.asarray(gamma, dtype=float)
    p, q = gamma.shape
    if q == 0:
        return np.zeros((p, p)), 0
    svd = thin_svd(gamma)
    u = svd.u[:, : svd.rank]
    return symmetrize(u @ u.T), svd.rank


def nodewise_coefficients(sigma):
    """Population regression coefficients of each variable on all others.

    Column ``j`` holds ``beta^(j)`` (zero in position ``j``), obtained from
    the precision matrix as ``beta^(j)_k = -omega_kj / omega_jj``.
    """
    omega = np.linalg.inv(sigma)
    beta = -omega / np.diag(omega)[None, :]
    np.fill_diagonal(beta, 0.0)
    return beta


def population_diagnostics(gt, support_tol=1e-10):
    p, q = gt.gamma.shape
    proj, rank = loadings_projection(gt.gamma)
    if rank < q:
        warnings.warn(
            f"loadings have rank {rank} < q = {q}; diagnostics use the spanned subspace",
            RankDeficientLoadings,
            stacklevel=2,
        )
    if q:
        gtg = np.linalg.eigvalsh(gt.gamma.T @ gt.gamma)
        gamma_l, gamma_u = float(gtg[0]), float(gtg[-1])
    else:
        gamma_l = gamma_u = 0.0
    sig_eigs = np.linalg.eigvalsh(gt.sigma)
    rho1 = float(np.linalg.norm(proj @ gt.sigma, 2)) if rank else 0.0
    rho2 = float(np.sqrt(np.max(np.sum(proj**2, axis=0)))) if rank else 0.0
    omega = np.linalg.inv(gt.sigma)
    beta = -omega / np.diag(omega)[None, :]
    np.fill_diagonal(beta, 0.0)
    eta = np.sum((gt.gamma.T @ beta) ** 2, axis=0)
    scale = np.max(np.abs(omega))
    offdiag = np.abs(omega) > support_tol * scale
    np.fill_diagonal(offdiag, False)
    s = int(offdiag.sum(axis=1).max()) if p > 1 else 0
    return Diagnostics(
        gamma_l=gamma_l,
        gamma_u=gamma_u,
        sigma_l=float(sig_eigs[0]),
        sigma_u=float(sig_eigs[-1]),
        rho1=rho1,
        rho2=rho2,
        eta=eta,
        s=s,
    )


def expected_scale_profile(gt, n):
    """Predicted ``E[P^T Sigma_rsvp P]_jj`` for the non-confounding directions j > q.

    Uses ``(n - q) D_jj^2 / sum_{k > q} D_kk^2`` with ``D^2`` the descending
    eigenvalues of ``Theta``.
    """
    d2, _ = sym_eig(gt.theta)
    q = gt.q
    tail = d2[q:]
    return (n - q) * tail / tail.sum()
