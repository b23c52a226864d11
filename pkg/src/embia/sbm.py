"""Variational estimation for the binary stochastic block model.

The objective is the evidence lower bound

    L = sum_ig r_ig log tau_g
      + sum_{i<j} sum_gh r_ig r_jh [A_ij log theta_gh + (1-A_ij) log(1-theta_gh)]
      - sum_ig r_ig log r_ig
      + log p(tau) + log p(theta)

with conjugate Dirichlet / Beta priors entering as MAP penalties.  The
variational E step is a sequential fixed point over node rows: each row
update is the exact coordinate maximizer (a softmax of its natural
parameters), so one call never decreases L at fixed parameters.  The M
step maximizes L - entropy in closed form, so the outer EM trace is
monotone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, xlogy

from .core import EmptyClusterError, MixingWeights, MixtureFamily, Responsibilities

__all__ = [
    "SbmPriors",
    "SbmParams",
    "SbmSweepWarning",
    "sbm_elbo",
    "sbm_ve_step",
    "sbm_m_step",
    "sbm_param_count",
    "StochasticBlockModel",
]

EMPTY_TOL = 1e-10
THETA_FLOOR = 1e-10
VE_TOL = 1e-6
VE_MAX_SWEEPS = 50


class SbmSweepWarning(UserWarning):
    """Inner variational fixed point hit the sweep cap without settling."""


@dataclass(frozen=True)
class SbmPriors:
    """Dirichlet(alpha) over mixing weights, Beta(a, b) over block probabilities.

    Hyperparameters must be positive (proper priors).  Dirichlet(1)/
    Beta(1,1) (the default) makes the MAP coincide with maximum
    likelihood; values below 1 push MAP estimates toward the boundary,
    where the M step clips them back into the parameter space.
    """

    dirichlet: np.ndarray
    beta_a: float = 1.0
    beta_b: float = 1.0

    def __post_init__(self):
        alpha = np.array(self.dirichlet, dtype=float, copy=True)
        if alpha.ndim != 1 or alpha.size < 1:
            raise ValueError("dirichlet weights must be a 1-d vector")
        if (alpha <= 0.0).any():
            raise ValueError("dirichlet weights must be positive")
        if self.beta_a <= 0.0 or self.beta_b <= 0.0:
            raise ValueError("beta hyperparameters must be positive")
        alpha.flags.writeable = False
        object.__setattr__(self, "dirichlet", alpha)

    @classmethod
    def flat(cls, G: int) -> "SbmPriors":
        return cls(np.ones(G))


@dataclass(frozen=True)
class SbmParams:
    """Mixing weights and a symmetric G x G matrix of edge probabilities."""

    tau: MixingWeights
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True)
        G = self.tau.G
        if theta.shape != (G, G):
            raise ValueError(f"theta must be {(G, G)}, got {theta.shape}")
        if (theta < 0).any() or (theta > 1).any():
            raise ValueError("theta entries must lie in [0, 1]")
        if not np.array_equal(theta, theta.T):
            raise ValueError("theta must be symmetric")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def G(self) -> int:
        return self.tau.G


def _clamped_logs(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.clip(theta, THETA_FLOOR, 1.0 - THETA_FLOOR)
    return np.log(t), np.log1p(-t)


def _block_moments(adj: np.ndarray, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expected edge counts and total dyad counts per unordered block pair.

    Both matrices are symmetric; diagonal entries count within-block pairs
    once (i < j).
    """
    s = R.sum(axis=0)
    edges = R.T @ adj @ R
    dyads = np.outer(s, s) - R.T @ R
    edges = 0.5 * (edges + edges.T)
    dyads = 0.5 * (dyads + dyads.T)
    d = np.arange(R.shape[1])
    edges[d, d] *= 0.5
    dyads[d, d] *= 0.5
    return edges, dyads


def _log_prior(params: SbmParams, priors: SbmPriors) -> float:
    alpha = priors.dirichlet
    tau = params.tau.values
    log_b = gammaln(alpha).sum() - gammaln(alpha.sum())
    dir_term = float(xlogy(alpha - 1.0, tau).sum() - log_b)
    a, b = priors.beta_a, priors.beta_b
    iu = np.triu_indices(params.G)
    th = np.clip(params.theta[iu], THETA_FLOOR, 1.0 - THETA_FLOOR)
    beta_term = float((xlogy(a - 1.0, th) + xlogy(b - 1.0, 1.0 - th)
                       - betaln(a, b)).sum())
    return dir_term + beta_term


def sbm_elbo(adj: np.ndarray, resp: Responsibilities, params: SbmParams,
             priors: SbmPriors | None = None) -> float:
    """Evidence lower bound at (resp, params); priors default to flat."""
    adj = np.asarray(adj, dtype=float)
    if priors is None:
        priors = SbmPriors.flat(params.G)
    R = resp.values
    mixing = float(xlogy(R, params.tau.values[None, :]).sum())
    log_t, log_1mt = _clamped_logs(params.theta)
    # unordered pairs appear once; diagonal factors already halved
    mat_e = R.T @ adj @ R
    s = R.sum(axis=0)
    mat_n = np.outer(s, s) - R.T @ R - mat_e
    pairwise = 0.5 * float((mat_e * log_t).sum() + (mat_n * log_1mt).sum())
    entropy = -float(xlogy(R, R).sum())
    return mixing + pairwise + entropy + _log_prior(params, priors)


def sbm_ve_step(adj: np.ndarray, params: SbmParams, resp_init: Responsibilities,
                tol: float = VE_TOL, max_sweeps: int = VE_MAX_SWEEPS) -> Responsibilities:
    """Sequential node-wise fixed point for the variational posterior.

    Rows are updated in index order; each update is the exact coordinate
    maximizer of the bound at fixed parameters.  Stops when the largest
    single-entry change in a full sweep falls below ``tol``; hitting the
    sweep cap emits :class:`SbmSweepWarning` and returns the last iterate.
    """
    adj = np.asarray(adj, dtype=float)
    R = resp_init.values.copy()
    n = R.shape[0]
    with np.errstate(divide="ignore"):
        log_tau = np.log(params.tau.values)
    log_t, log_1mt = _clamped_logs(params.theta)

    settled = False
    for _ in range(max_sweeps):
        s = R.sum(axis=0)
        delta = 0.0
        for i in range(n):
            ne = adj[i] @ R
            nne = s - R[i] - ne
            row = log_tau + log_t @ ne + log_1mt @ nne
            row -= row.max()
            w = np.exp(row)
            w /= w.sum()
            delta = max(delta, float(np.abs(w - R[i]).max()))
            s += w - R[i]
            R[i] = w
        if delta < tol:
            settled = True
            break
    if not settled:
        warnings.warn(f"variational sweep cap {max_sweeps} reached (last delta {delta:.2e})",
                      SbmSweepWarning, stacklevel=2)
    return Responsibilities(R)


def sbm_m_step(adj: np.ndarray, resp: Responsibilities,
               priors: SbmPriors | None = None) -> SbmParams:
    """MAP updates for mixing weights and block probabilities.

    A block whose expected size vanishes raises EmptyClusterError.  A
    non-empty block pair with no expected dyads (a single-node block under
    flat priors) has an undefined ratio; its probability is set to 0.5,
    which the bound does not distinguish from any other value there.
    """
    adj = np.asarray(adj, dtype=float)
    R = resp.values
    n, G = R.shape
    if priors is None:
        priors = SbmPriors.flat(G)
    ng = R.sum(axis=0)
    for g in range(G):
        if ng[g] < EMPTY_TOL:
            raise EmptyClusterError(g, f"expected block size {ng[g]:.3e}")

    # hyperparameters below 1 can push the MAP numerator negative; clip
    # to the boundary of the simplex interior
    raw = np.maximum(ng + priors.dirichlet - 1.0, THETA_FLOOR)
    tau = MixingWeights(raw / raw.sum())

    edges, dyads = _block_moments(adj, R)
    num = edges + (priors.beta_a - 1.0)
    den = dyads + (priors.beta_a + priors.beta_b - 2.0)
    safe = np.where(den < EMPTY_TOL, 1.0, den)
    theta = np.where(den < EMPTY_TOL, 0.5, num / safe)
    theta = 0.5 * (theta + theta.T)
    theta = np.clip(theta, THETA_FLOOR, 1.0 - THETA_FLOOR)
    return SbmParams(tau, theta)


def sbm_param_count(G: int) -> int:
    """Mixing weights plus the upper triangle of the block matrix."""
    return (G - 1) + G * (G + 1) // 2


class StochasticBlockModel(MixtureFamily):
    """Family adapter; the E step is the variational fixed point.

    The fixed point is warm-started from the previous responsibilities, so
    the outer trace is monotone.  Tempered (annealed) E steps are not
    defined for this family: the bound has no per-observation weighted
    density to exponentiate.
    """

    name = "sbm"
    data_kind = "network"
    default_epsilon = 1e-5

    def __init__(self, G: int, priors: SbmPriors | None = None):
        super().__init__(G)
        self.priors = priors if priors is not None else SbmPriors.flat(G)
        if self.priors.dirichlet.size != G:
            raise ValueError(f"{self.priors.dirichlet.size} dirichlet weights for G={G}")

    def e_step(self, data, params, resp_prev=None):
        if resp_prev is None:
            resp_prev = Responsibilities(np.full((data.n, self.G), 1.0 / self.G))
        resp = sbm_ve_step(data.payload, params, resp_prev)
        return resp, sbm_elbo(data.payload, resp, params, self.priors)

    def m_step(self, data, resp):
        return sbm_m_step(data.payload, resp, self.priors)

    def param_count(self, data) -> int:
        return sbm_param_count(self.G)

    def complete_data_loglik(self, data, hard: Responsibilities, params) -> float:
        """Hard-assignment log-likelihood: mixing plus pairwise block terms."""
        if not hard.is_hard():
            raise ValueError("complete-data log-likelihood requires a hard assignment")
        Z = hard.values
        ng = Z.sum(axis=0)
        mixing = float(xlogy(ng, params.tau.values).sum())
        edges, dyads = _block_moments(data.payload, Z)
        iu = np.triu_indices(params.G)  # each unordered block pair once
        pairwise = float(xlogy(edges[iu], params.theta[iu]).sum()
                         + xlogy(dyads[iu] - edges[iu], 1.0 - params.theta[iu]).sum())
        total = mixing + pairwise
        if total == -np.inf:
            warnings.warn("complete-data log-likelihood is -inf (zero-probability assignment)",
                          RuntimeWarning, stacklevel=2)
        return total

    def expected_complete_loglik(self, data, resp, params) -> float:
        """The part of the bound the M step maximizes (no entropy)."""
        return sbm_elbo(data.payload, resp, params, self.priors) + float(xlogy(resp.values, resp.values).sum())
