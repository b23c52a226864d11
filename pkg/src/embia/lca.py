"""Latent class analysis: mixtures of independent Bernoulli items.

Class-conditional densities are products over items of
theta_gm^x * (1 - theta_gm)^(1-x); zero bases with zero exponents
contribute nothing (xlogy convention).  M-step estimates clamp item
probabilities to [1e-10, 1 - 1e-10] so later E steps stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .core import (
    EmptyClusterError,
    MixingWeights,
    MixtureFamily,
    Responsibilities,
    softmax_rows,
)

__all__ = [
    "LcaParams",
    "lca_log_density",
    "lca_e_step",
    "lca_m_step",
    "lca_param_count",
    "LatentClassModel",
]

EMPTY_TOL = 1e-10
THETA_FLOOR = 1e-10


@dataclass(frozen=True)
class LcaParams:
    """Mixing weights and a G x M matrix of item probabilities."""

    tau: MixingWeights
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True)
        if theta.ndim != 2 or theta.shape[0] != self.tau.G:
            raise ValueError(f"theta must be (G, M) with G={self.tau.G}, got {theta.shape}")
        if (theta < 0).any() or (theta > 1).any():
            raise ValueError("theta entries must lie in [0, 1]")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def G(self) -> int:
        return self.tau.G

    @property
    def M(self) -> int:
        return self.theta.shape[1]


def lca_log_density(x: np.ndarray, theta_g: np.ndarray) -> float:
    """Log Bernoulli-product density of one response pattern under one class."""
    x = np.asarray(x, dtype=float).ravel()
    theta_g = np.asarray(theta_g, dtype=float).ravel()
    return float(xlogy(x, theta_g).sum() + xlogy(1.0 - x, 1.0 - theta_g).sum())


def _log_density_matrix(X: np.ndarray, theta: np.ndarray) -> np.ndarray:
    if theta.min() > 0.0 and theta.max() < 1.0:
        # interior parameters: plain matrix products
        return X @ np.log(theta).T + (1.0 - X) @ np.log1p(-theta).T
    # boundary parameters need xlogy semantics entry by entry
    return (xlogy(X[:, None, :], theta[None, :, :]).sum(axis=2)
            + xlogy(1.0 - X[:, None, :], 1.0 - theta[None, :, :]).sum(axis=2))


def _log_weighted(X: np.ndarray, params: LcaParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logtau = np.log(params.tau.values)
    return _log_density_matrix(X, params.theta) + logtau


def lca_e_step(X: np.ndarray, params: LcaParams) -> tuple[Responsibilities, float]:
    """Posterior class probabilities and the observed log-likelihood."""
    X = np.asarray(X, dtype=float)
    resp, logsums = softmax_rows(_log_weighted(X, params))
    return Responsibilities(resp), float(logsums.sum())


def lca_m_step(X: np.ndarray, resp: Responsibilities) -> LcaParams:
    """Weighted item means per class, clamped away from {0, 1}."""
    X = np.asarray(X, dtype=float)
    R = resp.values
    n = X.shape[0]
    ng = R.sum(axis=0)
    # A dead class is an error only under hard assignments; a soft column
    # with vanishing mass continues with a guarded denominator.
    if (ng < EMPTY_TOL).any() and resp.is_hard():
        raise EmptyClusterError(int(np.argmin(ng)), f"responsibility mass {ng.min():.3e}")
    tau = MixingWeights(ng / n)
    theta = (R.T @ X) / np.maximum(ng, EMPTY_TOL)[:, None]
    theta = np.clip(theta, THETA_FLOOR, 1.0 - THETA_FLOOR)
    return LcaParams(tau, theta)


def lca_param_count(G: int, M: int) -> int:
    return (G - 1) + G * M


class LatentClassModel(MixtureFamily):
    """Family adapter for binary-response latent class models."""

    name = "lca"
    data_kind = "binary"
    default_epsilon = 1e-9

    def e_step(self, data, params, resp_prev=None):
        return lca_e_step(data.payload, params)

    def m_step(self, data, resp):
        return lca_m_step(data.payload, resp)

    def param_count(self, data) -> int:
        return lca_param_count(self.G, data.m)

    def log_weighted_densities(self, data, params) -> np.ndarray:
        return _log_weighted(data.payload, params)

    def expected_complete_loglik(self, data, resp, params) -> float:
        logw = self.log_weighted_densities(data, params)
        R = resp.values
        with np.errstate(invalid="ignore"):
            prod = np.where(R > 0, R * logw, 0.0)
        return float(prod.sum())
