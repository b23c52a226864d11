"""Gaussian mixture estimation with VVV and EEV covariance structures.

VVV: every component has its own unrestricted covariance.
EEV: components share eigenvalues (volume and shape) but rotate freely;
the M step stays closed-form because the optimal orientation for each
component is the eigenbasis of its weighted scatter matrix, after which
the shared eigenvalues average the per-component spectra.

Densities are evaluated through Cholesky factors; a factorization failure
raises :class:`SingularCovarianceError`.  Near-singular estimates get a
small ridge (1e-8 of the mean variance) and mark the parameters as
regularized, which surfaces as a ``boundary-adjacent`` fit flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular, LinAlgError

from .core import (
    EmptyClusterError,
    MixingWeights,
    MixtureFamily,
    Responsibilities,
    SingularCovarianceError,
    softmax_rows,
)

__all__ = [
    "STRUCTURES",
    "GaussianParams",
    "gmm_log_density",
    "gmm_e_step",
    "gmm_m_step",
    "gmm_param_count",
    "within_cluster_ss",
    "GaussianMixture",
]

STRUCTURES = ("VVV", "EEV")

EMPTY_TOL = 1e-10
RIDGE_TRIGGER = 1e-10
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class GaussianParams:
    """Mixing weights, means (G x m) and covariances (G x m x m)."""

    tau: MixingWeights
    means: np.ndarray
    covariances: np.ndarray
    structure: str = "VVV"
    regularized: bool = False

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        means = np.array(self.means, dtype=float, copy=True)
        covs = np.array(self.covariances, dtype=float, copy=True)
        G = self.tau.G
        if means.ndim != 2 or means.shape[0] != G:
            raise ValueError(f"means must be (G, m) with G={G}, got {means.shape}")
        m = means.shape[1]
        if covs.shape != (G, m, m):
            raise ValueError(f"covariances must be {(G, m, m)}, got {covs.shape}")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), atol=1e-8):
            raise ValueError("covariances must be symmetric")
        means.flags.writeable = False
        covs.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)

    @property
    def G(self) -> int:
        return self.tau.G

    @property
    def m(self) -> int:
        return self.means.shape[1]


def _chol(cov: np.ndarray) -> np.ndarray:
    try:
        return cholesky(cov, lower=True)
    except LinAlgError as err:
        raise SingularCovarianceError(f"covariance is not positive definite: {err}") from err


def gmm_log_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """log N(x; mean, cov) for a single observation."""
    x = np.asarray(x, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    m = x.size
    L = _chol(np.asarray(cov, dtype=float).reshape(m, m))
    dev = solve_triangular(L, x - mean, lower=True)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return float(-0.5 * (m * np.log(2.0 * np.pi) + logdet + dev @ dev))


def _log_density_matrix(X: np.ndarray, params: GaussianParams) -> np.ndarray:
    """n x G matrix of component log-densities."""
    n, m = X.shape
    out = np.empty((n, params.G))
    for g in range(params.G):
        L = _chol(params.covariances[g])
        dev = solve_triangular(L, (X - params.means[g]).T, lower=True)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[:, g] = -0.5 * (m * np.log(2.0 * np.pi) + logdet + (dev * dev).sum(axis=0))
    return out


def _log_weighted(X: np.ndarray, params: GaussianParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logtau = np.log(params.tau.values)
    return _log_density_matrix(X, params) + logtau


def gmm_e_step(X: np.ndarray, params: GaussianParams) -> tuple[Responsibilities, float]:
    """Posterior component probabilities and the observed log-likelihood."""
    X = np.asarray(X, dtype=float)
    resp, logsums = softmax_rows(_log_weighted(X, params))
    return Responsibilities(resp), float(logsums.sum())


def gmm_m_step(X: np.ndarray, resp: Responsibilities, structure: str = "VVV") -> GaussianParams:
    """Weighted-moment updates; EEV shares the scatter spectra across components."""
    if structure not in STRUCTURES:
        raise ValueError(f"unknown structure {structure!r}")
    X = np.asarray(X, dtype=float)
    R = resp.values
    n, m = X.shape
    G = resp.G
    ng = R.sum(axis=0)
    regularized = False
    # A dead component is an error only under hard assignments; a soft
    # column with vanishing mass continues on the regularization path.
    if (ng < EMPTY_TOL).any():
        if resp.is_hard():
            raise EmptyClusterError(int(np.argmin(ng)), f"responsibility mass {ng.min():.3e}")
        regularized = True
    ng_safe = np.maximum(ng, EMPTY_TOL)

    tau = MixingWeights(ng / n)
    means = (R.T @ X) / ng_safe[:, None]

    scatters = np.empty((G, m, m))
    for g in range(G):
        dev = X - means[g]
        scatters[g] = (R[:, g, None] * dev).T @ dev

    covs = np.empty((G, m, m))
    if structure == "VVV":
        for g in range(G):
            covs[g] = scatters[g] / ng_safe[g]
    else:
        lam = np.zeros(m)
        bases = np.empty((G, m, m))
        for g in range(G):
            evals, evecs = np.linalg.eigh(0.5 * (scatters[g] + scatters[g].T))
            order = np.argsort(evals)[::-1]
            lam += evals[order]
            bases[g] = evecs[:, order]
        lam /= n
        for g in range(G):
            covs[g] = bases[g] @ np.diag(lam) @ bases[g].T

    # a dead component's own trace can vanish entirely, so the ridge unit
    # falls back to the pooled per-axis variance of the data
    grand_dev = X - X.mean(axis=0)
    pooled_unit = float((grand_dev * grand_dev).sum()) / (n * m)
    for g in range(G):
        covs[g] = 0.5 * (covs[g] + covs[g].T)
        unit = max(float(np.trace(covs[g])) / m, 1e-12 * pooled_unit)
        evals = np.linalg.eigvalsh(covs[g])
        if evals.min() < RIDGE_TRIGGER * unit and unit > 0:
            covs[g] = covs[g] + RIDGE_SCALE * unit * np.eye(m)
            regularized = True

    return GaussianParams(tau, means, covs, structure, regularized)


def gmm_param_count(structure: str, G: int, m: int) -> int:
    """Free parameters: mixing + means + covariance structure."""
    base = (G - 1) + G * m
    if structure == "VVV":
        return base + G * (m * (m + 1) // 2)
    if structure == "EEV":
        return base + m + G * (m * (m - 1) // 2)
    raise ValueError(f"unknown structure {structure!r}")


def within_cluster_ss(X: np.ndarray, labels: np.ndarray) -> float:
    """Total within-group sum of squared deviations from group centroids."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {X.shape[0]} rows")
    total = 0.0
    for g in np.unique(labels):
        block = X[labels == g]
        total += ((block - block.mean(axis=0)) ** 2).sum()
    return float(total)


class GaussianMixture(MixtureFamily):
    """Family adapter binding a component count and covariance structure."""

    name = "gmm"
    data_kind = "continuous"
    default_epsilon = 1e-5

    def __init__(self, G: int, structure: str = "VVV"):
        super().__init__(G)
        if structure not in STRUCTURES:
            raise ValueError(f"unknown structure {structure!r}")
        self.structure = structure

    def e_step(self, data, params, resp_prev=None):
        return gmm_e_step(data.payload, params)

    def m_step(self, data, resp):
        return gmm_m_step(data.payload, resp, self.structure)

    def param_count(self, data) -> int:
        return gmm_param_count(self.structure, self.G, data.m)

    def log_weighted_densities(self, data, params) -> np.ndarray:
        return _log_weighted(data.payload, params)

    def expected_complete_loglik(self, data, resp, params) -> float:
        """Sum of responsibilities times log-weighted densities (the EM Q function)."""
        logw = self.log_weighted_densities(data, params)
        R = resp.values
        with np.errstate(invalid="ignore"):
            prod = np.where(R > 0, R * logw, 0.0)
        return float(prod.sum())

    def fit_flags(self, data, resp, params) -> tuple[str, ...]:
        # A component carrying fewer (expected) points than m + 1 cannot
        # support a stable covariance estimate.
        if data.n * params.tau.values.min() < data.m + 1:
            return ("spurious-candidate",)
        return ()
