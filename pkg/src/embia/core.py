"""Shared EM machinery: responsibility containers, convergence, the fit loop.

A model family plugs in through :class:`MixtureFamily`.  The fit loop is
M-step-first: it expects an initial soft assignment ``z0`` (hard labels are
a special case), estimates parameters from it, and alternates E and M steps
until the relative change in the objective falls below ``epsilon``.
"""

from __future__ import annotations

import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "EmptyClusterError",
    "SingularCovarianceError",
    "Responsibilities",
    "MixingWeights",
    "ConvergenceConfig",
    "FitResult",
    "MixtureFamily",
    "converged",
    "em_fit",
    "complete_data_loglik",
    "softmax_rows",
]

ROW_SUM_TOL = 1e-12


class EmptyClusterError(RuntimeError):
    """A component lost all (expected) members during estimation."""

    def __init__(self, component: int, detail: str = ""):
        self.component = component
        msg = f"component {component} is empty"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SingularCovarianceError(RuntimeError):
    """A covariance matrix became numerically singular."""


def _frozen_probabilities(values: np.ndarray, what: str) -> np.ndarray:
    a = np.array(values, dtype=float, copy=True)
    if not np.isfinite(a).all():
        raise ValueError(f"{what} contains non-finite entries")
    if (a < 0).any() or (a > 1).any():
        raise ValueError(f"{what} entries must lie in [0, 1]")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Responsibilities:
    """An n x G soft assignment matrix; rows sum to one.

    Immutable after construction so instances can be shared between the
    fit loop, initializers, and reports without defensive copies.
    """

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"responsibilities must be 2-d, got shape {a.shape}")
        a = _frozen_probabilities(a, "responsibilities")
        rowsum = a.sum(axis=1)
        off = np.abs(rowsum - 1.0)
        if off.max() > ROW_SUM_TOL:
            i = int(off.argmax())
            raise ValueError(
                f"row {i} of responsibilities sums to {rowsum[i]!r}, not 1"
            )
        object.__setattr__(self, "values", a)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def G(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_labels(cls, labels, G: int) -> "Responsibilities":
        """Hard 0/1 matrix from 0-based integer labels."""
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise ValueError("labels must be 1-d")
        if labels.size == 0:
            raise ValueError("labels are empty")
        if (labels < 0).any() or (labels >= G).any():
            raise ValueError(f"labels must lie in 0..{G - 1}")
        z = np.zeros((labels.size, G))
        z[np.arange(labels.size), labels] = 1.0
        return cls(z)

    def hard_labels(self) -> np.ndarray:
        """Argmax labels; ties resolve to the lowest group index."""
        return self.values.argmax(axis=1)

    def is_hard(self) -> bool:
        return bool(np.isin(self.values, (0.0, 1.0)).all())


@dataclass(frozen=True)
class MixingWeights:
    """A length-G probability vector over components."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim != 1:
            raise ValueError(f"mixing weights must be 1-d, got shape {a.shape}")
        a = _frozen_probabilities(a, "mixing weights")
        if abs(a.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"mixing weights sum to {a.sum()!r}, not 1")
        object.__setattr__(self, "values", a)

    @property
    def G(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ConvergenceConfig:
    """Stopping rule: relative objective change below epsilon, capped iterations."""

    epsilon: float = 1e-5
    max_iter: int = 10_000

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fit: final objective, per-iteration trace, and state.

    ``trace[k]`` is the objective after E-step k (the first entry follows
    the initial M+E pass); ``objective == trace[-1]`` and
    ``iterations == len(trace)``.  ``flags`` carries quality markers such
    as ``boundary-adjacent`` or ``spurious-candidate``.
    """

    objective: float
    trace: tuple[float, ...]
    responsibilities: Responsibilities
    params: object
    iterations: int
    converged: bool
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.iterations != len(self.trace):
            raise ValueError("iterations must equal len(trace)")
        if self.trace and self.objective != self.trace[-1]:
            raise ValueError("objective must equal the last trace entry")


class MixtureFamily(ABC):
    """Model-family plug-in surface for :func:`em_fit`.

    Concrete families (Gaussian, latent class, block model) expose their
    estimation steps as module-level functions; the family object binds a
    component count G and adapts those functions to the loop.
    """

    name: str = ""
    data_kind: str = ""
    default_epsilon: float = 1e-5

    def __init__(self, G: int):
        if G < 1:
            raise ValueError(f"G must be >= 1, got {G}")
        self.G = G

    def validate_data(self, data) -> None:
        if data.kind != self.data_kind:
            raise ValueError(
                f"{self.name} expects {self.data_kind} data, got {data.kind}"
            )
        if data.n < self.G:
            raise ValueError(f"n={data.n} rows cannot support G={self.G} components")

    @abstractmethod
    def e_step(self, data, params, resp_prev: Responsibilities | None = None):
        """Return (responsibilities, objective) at fixed params."""

    @abstractmethod
    def m_step(self, data, resp: Responsibilities):
        """Return parameter estimates maximizing the expected complete-data objective."""

    @abstractmethod
    def param_count(self, data) -> int:
        """Number of free parameters (for BIC-type penalties)."""

    def log_weighted_densities(self, data, params) -> np.ndarray:
        """n x G matrix of log(tau_g * f(x_i | theta_g)); not all families have one."""
        raise NotImplementedError(f"{self.name} has no per-observation densities")

    def complete_data_loglik(self, data, hard: Responsibilities, params) -> float:
        """Complete-data log-likelihood at a hard assignment."""
        if not hard.is_hard():
            raise ValueError("complete-data log-likelihood requires a hard assignment")
        logw = self.log_weighted_densities(data, params)
        picked = logw[hard.values > 0.5]  # one entry per row
        total = float(picked.sum())
        if total == -np.inf:
            warnings.warn("complete-data log-likelihood is -inf (zero-probability assignment)",
                          RuntimeWarning, stacklevel=2)
        return total

    def fit_flags(self, data, resp: Responsibilities, params) -> tuple[str, ...]:
        """Quality flags evaluated on the converged state."""
        return ()


def softmax_rows(logw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize exp(logw); returns (probabilities, row log-sum-exp).

    A row that is -inf everywhere has no valid normalization and raises.
    """
    rowmax = logw.max(axis=1, keepdims=True)
    if not np.isfinite(rowmax).all():
        i = int(np.flatnonzero(~np.isfinite(rowmax.ravel()))[0])
        raise FloatingPointError(f"observation {i} has zero density under every component")
    shifted = np.exp(logw - rowmax)
    total = shifted.sum(axis=1, keepdims=True)
    return shifted / total, logsumexp(logw, axis=1)


def converged(l_prev: float, l_curr: float, epsilon: float) -> bool:
    """Relative-change stopping rule.

    True when |l_curr - l_prev| / |l_curr| < epsilon; when l_curr == 0 the
    absolute change is compared against epsilon instead.
    """
    delta = abs(l_curr - l_prev)
    if l_curr == 0.0:
        return delta < epsilon
    return delta / abs(l_curr) < epsilon


def _collect_param_flags(params, flags: set):
    if getattr(params, "regularized", False):
        flags.add("boundary-adjacent")


def em_fit(family: MixtureFamily, data, z0: Responsibilities,
           cfg: ConvergenceConfig | None = None) -> FitResult:
    """Run EM from an initial assignment until the stopping rule fires.

    The first pass estimates parameters from ``z0`` (M step), then an
    E step produces ``trace[0]``.  Deterministic: identical
    (data, z0, cfg) give bit-identical traces.
    """
    if cfg is None:
        cfg = ConvergenceConfig(epsilon=family.default_epsilon)
    family.validate_data(data)
    if z0.n != data.n:
        raise ValueError(f"z0 has {z0.n} rows for {data.n} observations")
    if z0.G != family.G:
        raise ValueError(f"z0 has {z0.G} columns for G={family.G}")

    flags: set[str] = set()
    params = family.m_step(data, z0)
    _collect_param_flags(params, flags)
    resp, objective = family.e_step(data, params, resp_prev=z0)
    trace = [float(objective)]
    done = False
    while len(trace) < cfg.max_iter and not done:
        params = family.m_step(data, resp)
        _collect_param_flags(params, flags)
        resp, objective = family.e_step(data, params, resp_prev=resp)
        trace.append(float(objective))
        done = converged(trace[-2], trace[-1], cfg.epsilon)

    flags.update(family.fit_flags(data, resp, params))
    return FitResult(
        objective=trace[-1],
        trace=tuple(trace),
        responsibilities=resp,
        params=params,
        iterations=len(trace),
        converged=done,
        flags=tuple(sorted(flags)),
    )


def complete_data_loglik(family: MixtureFamily, data, hard: Responsibilities, params) -> float:
    """Module-level convenience wrapper over the family hook."""
    return family.complete_data_loglik(data, hard, params)
