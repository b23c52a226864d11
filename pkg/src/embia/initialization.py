"""Initialization strategies for the EM fits.

* random starts (uniform multinomial hard labels),
* hierarchical (Ward) agglomeration cut at G groups,
* burn-in pyramid: a shrinking tournament of short runs,
* deterministic annealing: tempered E steps with a geometric schedule,
* Bayesian initialization averaging (BIA): many short preliminary runs,
  scored by a BIC-type criterion at their pre-convergence state, label
  aligned, and averaged into one soft start with weights proportional
  to exp(-BIC*/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .core import (
    ConvergenceConfig,
    EmptyClusterError,
    FitResult,
    MixtureFamily,
    Responsibilities,
    SingularCovarianceError,
    converged,
    em_fit,
    softmax_rows,
)

__all__ = [
    "BiaConfig",
    "AnnealSchedule",
    "BurninConfig",
    "random_z",
    "hclust_init",
    "burnin_pyramid",
    "anneal_e_step",
    "anneal_fit",
    "align_labels",
    "bic_star",
    "bia_weights",
    "bia_average",
    "bia_init",
]

# nu is treated as 1 once within this distance; convergence checks
# only begin after pinning.
NU_PIN_TOL = 1e-4

CANDIDATE_FAILURES = (EmptyClusterError, SingularCovarianceError, FloatingPointError)


@dataclass(frozen=True)
class BiaConfig:
    """J preliminary starts, each run for at most T iterations.

    ``seed`` may be an int or a tuple of ints; candidate j draws from an
    independent stream keyed by (seed..., j).
    """

    num_starts: int
    pre_iterations: int
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if self.num_starts < 2:
            raise ValueError(f"num_starts must be >= 2, got {self.num_starts}")
        if self.pre_iterations < 1:
            raise ValueError(f"pre_iterations must be >= 1, got {self.pre_iterations}")

    def seed_tuple(self) -> tuple[int, ...]:
        return self.seed if isinstance(self.seed, tuple) else (self.seed,)


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric approach of the temperature exponent nu toward 1.

    nu starts at ``nu0`` and after every ``iters_per_stage`` EM cycles
    moves to rate * nu + (1 - rate).
    """

    nu0: float
    rate: float
    iters_per_stage: int

    def __post_init__(self):
        if not (0.0 < self.nu0 <= 1.0):
            raise ValueError(f"nu0 must lie in (0, 1], got {self.nu0}")
        if not (0.0 < self.rate < 1.0):
            raise ValueError(f"rate must lie in (0, 1), got {self.rate}")
        if self.iters_per_stage < 1:
            raise ValueError(f"iters_per_stage must be >= 1, got {self.iters_per_stage}")

    def advance(self, nu: float) -> float:
        return self.rate * nu + (1.0 - self.rate)


@dataclass(frozen=True)
class BurninConfig:
    """Tournament of short runs: start wide, keep the top fraction each stage."""

    initial_candidates: int
    iterations_per_stage: int
    retain_fraction: float = 0.5

    def __post_init__(self):
        if self.initial_candidates < 1:
            raise ValueError(f"initial_candidates must be >= 1, got {self.initial_candidates}")
        if self.iterations_per_stage < 1:
            raise ValueError(f"iterations_per_stage must be >= 1, got {self.iterations_per_stage}")
        if not (0.0 < self.retain_fraction < 1.0):
            raise ValueError(f"retain_fraction must lie in (0, 1), got {self.retain_fraction}")


def random_z(n: int, G: int, rng: np.random.Generator) -> Responsibilities:
    """Uniform multinomial hard labels, redrawn until every group is hit.

    Requires n >= G.  The redraw keeps downstream M steps well defined;
    at the sizes used here the redraw probability is tiny.
    """
    if n < G:
        raise ValueError(f"cannot cover G={G} groups with n={n} rows")
    for _ in range(1000):
        labels = rng.integers(0, G, size=n)
        if np.unique(labels).size == G:
            return Responsibilities.from_labels(labels, G)
    raise RuntimeError(f"could not cover {G} groups in 1000 draws (n={n})")


def hclust_init(data, G: int) -> Responsibilities:
    """Ward agglomeration on Euclidean distances, cut at G groups.

    ``data`` may be a continuous Dataset or a plain n x m array.
    """
    if hasattr(data, "kind"):
        if data.kind != "continuous":
            raise ValueError(f"hierarchical starts need continuous data, got {data.kind}")
        X = data.payload
    else:
        X = np.asarray(data, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"expected an n x m matrix, got shape {X.shape}")
    n = X.shape[0]
    if G > n:
        raise ValueError(f"cannot cut {n} rows into G={G} groups")
    if G == n:
        return Responsibilities.from_labels(np.arange(n), n)
    merge_tree = linkage(X, method="ward")
    labels = fcluster(merge_tree, t=G, criterion="maxclust") - 1
    found = np.unique(labels).size
    if found < G:
        raise ValueError(f"ward cut recovered only {found} groups, need {G}")
    return Responsibilities.from_labels(labels, G)


def burnin_pyramid(family: MixtureFamily, data, cfg: BurninConfig,
                   rng: np.random.Generator,
                   starts: list[Responsibilities] | None = None) -> Responsibilities:
    """Shrinking tournament: short runs, keep the best, return the survivor.

    Each stage advances every surviving candidate by at most
    ``iterations_per_stage`` EM cycles, ranks them by objective, and
    retains ceil(retain_fraction * k), always strictly fewer than k.
    Candidates that collapse (empty component, singular covariance) drop
    out; if all candidates collapse the pyramid fails loudly.  ``starts``
    replaces the random draws with caller-chosen candidates (it must have
    ``initial_candidates`` entries).
    """
    if starts is not None:
        if len(starts) != cfg.initial_candidates:
            raise ValueError(f"{len(starts)} starts for {cfg.initial_candidates} candidates")
        states = list(starts)
    else:
        states = [random_z(data.n, family.G, rng) for _ in range(cfg.initial_candidates)]
    stage_cfg = ConvergenceConfig(epsilon=family.default_epsilon,
                                  max_iter=cfg.iterations_per_stage)
    while True:
        scored: list[tuple[float, Responsibilities]] = []
        for z in states:
            try:
                fit = em_fit(family, data, z, stage_cfg)
            except CANDIDATE_FAILURES:
                continue
            scored.append((fit.objective, fit.responsibilities))
        if not scored:
            raise RuntimeError("every burn-in candidate collapsed during its stage")
        if len(scored) == 1:
            return scored[0][1]
        scored.sort(key=lambda t: t[0], reverse=True)  # stable: ties keep draw order
        keep = math.ceil(cfg.retain_fraction * len(scored))
        keep = max(1, min(keep, len(scored) - 1))
        if keep == 1:
            return scored[0][1]  # tournament decided; no further stages
        states = [resp for _, resp in scored[:keep]]


def anneal_e_step(family: MixtureFamily, data, params, nu: float) -> Responsibilities:
    """Tempered posterior: responsibilities proportional to (tau_g f_g)^nu."""
    if nu <= 0.0:
        raise ValueError(f"nu must be positive, got {nu}")
    logw = family.log_weighted_densities(data, params)
    values, _ = softmax_rows(logw if nu == 1.0 else nu * logw)
    return Responsibilities(values)


def anneal_fit(family: MixtureFamily, data, z0: Responsibilities,
               schedule: AnnealSchedule, cfg: ConvergenceConfig | None = None) -> FitResult:
    """EM with tempered E steps; nu approaches 1, then plain EM finishes.

    The recorded trace always holds the untempered observed log-likelihood
    so runs are comparable across strategies; while nu < 1 the trace need
    not be monotone.  Convergence is only assessed between two entries
    computed at nu = 1.  With nu0 = 1 the trajectory is bit-identical to
    ``em_fit``.
    """
    if cfg is None:
        cfg = ConvergenceConfig(epsilon=family.default_epsilon)
    family.validate_data(data)
    if z0.n != data.n or z0.G != family.G:
        raise ValueError(f"z0 shape {(z0.n, z0.G)} does not match (n={data.n}, G={family.G})")

    nu = 1.0 if (1.0 - schedule.nu0) < NU_PIN_TOL else schedule.nu0
    pinned_at = 0 if nu == 1.0 else None
    flags: set[str] = set()

    def tempered_e(params):
        logw = family.log_weighted_densities(data, params)
        values, logsums = softmax_rows(logw if nu == 1.0 else nu * logw)
        if nu == 1.0:
            objective = float(logsums.sum())
        else:
            objective = float(logsumexp(logw, axis=1).sum())
        return Responsibilities(values), objective

    params = family.m_step(data, z0)
    if getattr(params, "regularized", False):
        flags.add("boundary-adjacent")
    resp, objective = tempered_e(params)
    trace = [objective]
    done = False
    while len(trace) < cfg.max_iter and not done:
        if pinned_at is None and len(trace) % schedule.iters_per_stage == 0:
            nu = schedule.advance(nu)
            if (1.0 - nu) < NU_PIN_TOL:
                nu = 1.0
                pinned_at = len(trace)
        params = family.m_step(data, resp)
        if getattr(params, "regularized", False):
            flags.add("boundary-adjacent")
        resp, objective = tempered_e(params)
        trace.append(objective)
        if pinned_at is not None and len(trace) - 2 >= pinned_at:
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


def _assignment_value(S: np.ndarray, fixed: list[int]) -> float:
    """Best total mass achievable with the first len(fixed) rows pinned."""
    G = S.shape[0]
    k = len(fixed)
    base = float(sum(S[i, fixed[i]] for i in range(k)))
    if k == G:
        return base
    remaining = [c for c in range(G) if c not in fixed]
    sub = S[np.ix_(range(k, G), remaining)]
    rows, cols = linear_sum_assignment(sub, maximize=True)
    return base + float(sub[rows, cols].sum())


def align_labels(reference: Responsibilities, candidate: Responsibilities) -> Responsibilities:
    """Permute candidate columns to best agree with the reference labeling.

    Maximizes the overlapped responsibility mass over all G! column
    permutations (solved exactly via optimal assignment); among optimal
    permutations the lexicographically smallest wins, so the result is
    deterministic under ties.
    """
    if reference.values.shape != candidate.values.shape:
        raise ValueError(
            f"shape mismatch: reference {reference.values.shape}, "
            f"candidate {candidate.values.shape}"
        )
    S = reference.values.T @ candidate.values
    G = S.shape[0]
    best = _assignment_value(S, [])
    tol = 1e-9 * max(1.0, abs(best))
    perm: list[int] = []
    for _ in range(G):
        for col in range(G):
            if col in perm:
                continue
            if _assignment_value(S, perm + [col]) >= best - tol:
                perm.append(col)
                break
    return Responsibilities(candidate.values[:, perm])


def bic_star(loglik: float, p: int, n: int) -> float:
    """BIC-type score -2 loglik + p log n (smaller is better)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if p < 0:
        raise ValueError(f"p must be >= 0, got {p}")
    return -2.0 * loglik + p * math.log(n)


def bia_weights(bic_values) -> np.ndarray:
    """Normalized exp(-BIC*/2) weights, computed shift-stably.

    The minimum is subtracted before exponentiation; the weights are
    invariant to any common shift, and no exponent can overflow.
    """
    arr = np.asarray(bic_values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("bic_values must be a nonempty 1-d sequence")
    if not np.isfinite(arr).all():
        raise ValueError("bic_values must be finite")
    w = np.exp(-0.5 * (arr - arr.min()))
    return w / w.sum()


def bia_average(candidates: list[Responsibilities], weights) -> Responsibilities:
    """Convex combination of aligned soft assignments."""
    if not candidates:
        raise ValueError("no candidates to average")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(candidates),):
        raise ValueError(f"{weights.size} weights for {len(candidates)} candidates")
    if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector")
    shape = candidates[0].values.shape
    for k, c in enumerate(candidates):
        if c.values.shape != shape:
            raise ValueError(f"candidate {k} has shape {c.values.shape}, expected {shape}")
    stacked = np.tensordot(weights, np.stack([c.values for c in candidates]), axes=1)
    stacked = np.clip(stacked, 0.0, 1.0)
    stacked /= stacked.sum(axis=1, keepdims=True)
    return Responsibilities(stacked)


def bia_init(family: MixtureFamily, data, cfg: BiaConfig,
             conv: ConvergenceConfig | None = None,
             starts: list[Responsibilities] | None = None) -> FitResult:
    """Bayesian initialization averaging, end to end.

    Runs ``num_starts`` preliminary fits capped at ``pre_iterations``
    cycles, scores each candidate with bic_star at its current (usually
    pre-convergence) objective, aligns all candidates to the best-scoring
    run's labels, averages with exp(-BIC*/2) weights, and runs one full
    fit from the averaged start.  Collapsed candidates are dropped and
    the weights renormalize over survivors; fewer than two survivors is
    an error naming the counts.  ``starts`` replaces the random draws
    with caller-chosen candidates (one per preliminary run).
    """
    if conv is None:
        conv = ConvergenceConfig(epsilon=family.default_epsilon)
    if starts is not None and len(starts) != cfg.num_starts:
        raise ValueError(f"{len(starts)} starts for {cfg.num_starts} preliminary runs")
    pre_cfg = ConvergenceConfig(epsilon=conv.epsilon, max_iter=cfg.pre_iterations)
    survivors: list[FitResult] = []
    for j in range(cfg.num_starts):
        if starts is not None:
            z0 = starts[j]
        else:
            rng = np.random.default_rng([*cfg.seed_tuple(), j])
            z0 = random_z(data.n, family.G, rng)
        try:
            fit = em_fit(family, data, z0, pre_cfg)
        except CANDIDATE_FAILURES:
            continue
        survivors.append(fit)
    if len(survivors) < 2:
        raise RuntimeError(
            f"{len(survivors)} of {cfg.num_starts} preliminary runs survived; "
            "averaging needs at least two"
        )

    objectives = np.array([f.objective for f in survivors])
    reference = survivors[int(objectives.argmax())].responsibilities
    aligned = [align_labels(reference, f.responsibilities) for f in survivors]
    p = family.param_count(data)
    scores = [bic_star(f.objective, p, data.n) for f in survivors]
    z_star = bia_average(aligned, bia_weights(scores))
    return em_fit(family, data, z_star, conv)
