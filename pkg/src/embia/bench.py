"""Restart-distribution experiments over initialization strategies.

An :class:`ExperimentSpec` names a model family, an initialization
strategy, and repetition/seed bookkeeping; :func:`run_experiment` executes
the repetitions (serially or in a process pool; results are identical
either way because every repetition draws from its own seed stream) and
returns a :class:`RestartDistribution` of convergent objectives.

Objectives are binned at integer resolution, bin(x) = floor(x + 0.5)
(nearest integer, half-up), which every report declares.  Runs flagged
``spurious-candidate`` are recorded but excluded when identifying the
best objective and the attainment rate.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import ConvergenceConfig, FitResult, MixtureFamily, em_fit
from .data import Dataset
from .gmm import STRUCTURES, GaussianMixture, GaussianParams, within_cluster_ss
from .initialization import (
    AnnealSchedule,
    BiaConfig,
    BurninConfig,
    CANDIDATE_FAILURES,
    align_labels,
    anneal_fit,
    bia_init,
    burnin_pyramid,
    hclust_init,
    random_z,
)
from .lca import LatentClassModel, LcaParams
from .sbm import SbmParams, StochasticBlockModel

__all__ = [
    "MODELS",
    "INITS",
    "ExperimentSpec",
    "RunRecord",
    "RestartDistribution",
    "build_family",
    "run_single",
    "run_experiment",
    "sweep",
    "compare_solutions",
    "report_dict",
    "emit_report",
    "bin_value",
]

MODELS = ("gmm", "lca", "sbm")
INITS = ("random", "hclust", "burnin", "anneal", "bia")
BINNING_RULE = "nearest-integer-half-up"
ATTAIN_TOL = 0.5
SWEEP_PARAMS = ("starts", "pre_iters", "nu0", "rate", "stage")


def bin_value(x: float) -> int:
    """Nearest integer, ties going up: floor(x + 0.5)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark configuration: model, strategy, and repetition plan."""

    model: str
    groups: int
    init: str
    structure: str = "VVV"
    repetitions: int = 1
    seed: int = 0
    epsilon: float | None = None
    max_iter: int = 10_000
    starts: int | None = None        # J for bia, candidate count for burnin
    pre_iters: int | None = None     # T for bia, stage length for burnin
    nu0: float | None = None
    rate: float | None = None
    stage: int | None = None
    retain: float = 0.5

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}; expected one of {INITS}")
        if self.model == "gmm" and self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.groups < 1:
            raise ValueError(f"groups must be >= 1, got {self.groups}")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.epsilon is not None and not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.init in ("bia", "burnin"):
            if self.starts is None or self.pre_iters is None:
                raise ValueError(f"init {self.init!r} requires starts and pre_iters")
        if self.init == "anneal":
            if self.model == "sbm":
                raise ValueError("annealing is undefined for the block model "
                                 "(no per-observation weighted densities)")
            if self.nu0 is None or self.rate is None or self.stage is None:
                raise ValueError("init 'anneal' requires nu0, rate and stage")


def build_family(spec: ExperimentSpec) -> MixtureFamily:
    if spec.model == "gmm":
        return GaussianMixture(spec.groups, spec.structure)
    if spec.model == "lca":
        return LatentClassModel(spec.groups)
    if spec.model == "sbm":
        return StochasticBlockModel(spec.groups)
    raise ValueError(f"unknown model {spec.model!r}")


@dataclass(frozen=True)
class RunRecord:
    """One repetition: its fit outcome and wall-clock cost."""

    rep: int
    fit: FitResult
    seconds: float

    @property
    def objective(self) -> float:
        return self.fit.objective


def run_single(spec: ExperimentSpec, dataset: Dataset, rep: int) -> RunRecord:
    """Execute one repetition; repetition ``rep`` owns seed stream (seed, rep)."""
    spec.validate()
    family = build_family(spec)
    eps = spec.epsilon if spec.epsilon is not None else family.default_epsilon
    conv = ConvergenceConfig(epsilon=eps, max_iter=spec.max_iter)
    rng = np.random.default_rng([spec.seed, rep])

    t0 = time.perf_counter()
    if spec.init == "random":
        z0 = random_z(dataset.n, family.G, rng)
        fit = em_fit(family, dataset, z0, conv)
    elif spec.init == "hclust":
        z0 = hclust_init(dataset, family.G)
        fit = em_fit(family, dataset, z0, conv)
    elif spec.init == "burnin":
        cfg = BurninConfig(spec.starts, spec.pre_iters, spec.retain)
        z0 = burnin_pyramid(family, dataset, cfg, rng)
        fit = em_fit(family, dataset, z0, conv)
    elif spec.init == "anneal":
        z0 = random_z(dataset.n, family.G, rng)
        schedule = AnnealSchedule(spec.nu0, spec.rate, spec.stage)
        fit = anneal_fit(family, dataset, z0, schedule, conv)
    elif spec.init == "bia":
        cfg = BiaConfig(spec.starts, spec.pre_iters, seed=(spec.seed, rep))
        fit = bia_init(family, dataset, cfg, conv)
    else:
        raise ValueError(f"unknown init {spec.init!r}")
    return RunRecord(rep=rep, fit=fit, seconds=time.perf_counter() - t0)


@dataclass(frozen=True)
class RestartDistribution:
    """Convergent objectives over repetitions, binned at integer resolution."""

    spec: ExperimentSpec
    records: tuple[RunRecord, ...]
    failures: tuple[tuple[int, str], ...] = ()

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(sorted(r.objective for r in self.records))

    @property
    def bins(self) -> tuple[tuple[int, int], ...]:
        counts: dict[int, int] = {}
        for r in self.records:
            b = bin_value(r.objective)
            counts[b] = counts.get(b, 0) + 1
        return tuple(sorted(counts.items()))

    def _non_spurious(self) -> list[RunRecord]:
        keep = [r for r in self.records if "spurious-candidate" not in r.fit.flags]
        return keep if keep else list(self.records)

    @property
    def best(self) -> float:
        return max(r.objective for r in self._non_spurious())

    @property
    def attain_rate(self) -> float:
        pool = self._non_spurious()
        best = max(r.objective for r in pool)
        hits = sum(1 for r in pool if best - r.objective <= ATTAIN_TOL)
        return hits / len(pool)

    def best_record(self) -> RunRecord:
        pool = self._non_spurious()
        return max(pool, key=lambda r: r.objective)


def _run_index(args) -> tuple[int, RunRecord | None, str | None]:
    spec, dataset, rep = args
    try:
        return rep, run_single(spec, dataset, rep), None
    except CANDIDATE_FAILURES as err:
        return rep, None, f"{type(err).__name__}: {err}"


def run_experiment(spec: ExperimentSpec, dataset: Dataset, workers: int = 1) -> RestartDistribution:
    """All repetitions of one spec; identical output for any worker count."""
    spec.validate()
    jobs = [(spec, dataset, rep) for rep in range(spec.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_index, jobs))
    else:
        outcomes = [_run_index(j) for j in jobs]
    outcomes.sort(key=lambda t: t[0])
    records = tuple(rec for _, rec, _ in outcomes if rec is not None)
    failures = tuple((rep, msg) for rep, rec, msg in outcomes if rec is None)
    if not records:
        raise RuntimeError(f"all {spec.repetitions} repetitions failed; first: {failures[0][1]}")
    return RestartDistribution(spec=spec, records=records, failures=failures)


def sweep(spec: ExperimentSpec, dataset: Dataset,
          param_a: str, values_a, param_b: str, values_b,
          workers: int = 1) -> np.ndarray:
    """Grid over two strategy parameters; cell (i, j) holds one run's objective.

    Cell (i, j) uses seed stream (seed, i * len(values_b) + j), so the grid
    is deterministic and cells are independent.
    """
    for p in (param_a, param_b):
        if p not in SWEEP_PARAMS:
            raise ValueError(f"cannot sweep {p!r}; choose from {SWEEP_PARAMS}")
    values_a = list(values_a)
    values_b = list(values_b)
    if not values_a or not values_b:
        raise ValueError("sweep needs at least one value per axis")

    int_params = {"starts", "pre_iters", "stage"}
    jobs = []
    for i, va in enumerate(values_a):
        for j, vb in enumerate(values_b):
            updates = {
                param_a: int(va) if param_a in int_params else float(va),
                param_b: int(vb) if param_b in int_params else float(vb),
                "repetitions": 1,
            }
            cell_spec = replace(spec, **updates)
            cell_spec.validate()
            jobs.append((cell_spec, dataset, i * len(values_b) + j))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_index, jobs))
    else:
        outcomes = [_run_index(j) for j in jobs]
    outcomes.sort(key=lambda t: t[0])
    matrix = np.full((len(values_a), len(values_b)), np.nan)
    for rep, rec, _ in outcomes:
        if rec is not None:
            matrix[rep // len(values_b), rep % len(values_b)] = rec.objective
    return matrix


def compare_solutions(fit_a: FitResult, fit_b: FitResult, dataset: Dataset) -> dict:
    """Label-permutation-invariant comparison of two fits on one dataset.

    Aligns B's components to A's, counts membership changes between the
    hard partitions, and (for continuous data) reports both within-cluster
    sums of squares.
    """
    aligned_b = align_labels(fit_a.responsibilities, fit_b.responsibilities)
    labels_a = fit_a.responsibilities.hard_labels()
    labels_b = aligned_b.hard_labels()
    out = {
        "changes": int((labels_a != labels_b).sum()),
        "objective_a": fit_a.objective,
        "objective_b": fit_b.objective,
    }
    if dataset.kind == "continuous":
        out["wss_a"] = within_cluster_ss(dataset.payload, labels_a)
        out["wss_b"] = within_cluster_ss(dataset.payload, labels_b)
    return out


def _params_to_dict(params) -> dict:
    if isinstance(params, GaussianParams):
        return {
            "tau": params.tau.values.tolist(),
            "means": params.means.tolist(),
            "covariances": params.covariances.tolist(),
            "structure": params.structure,
        }
    if isinstance(params, LcaParams):
        return {"tau": params.tau.values.tolist(), "theta": params.theta.tolist()}
    if isinstance(params, SbmParams):
        return {"tau": params.tau.values.tolist(), "theta": params.theta.tolist()}
    raise TypeError(f"cannot serialize parameters of type {type(params).__name__}")


def _spec_to_dict(spec: ExperimentSpec) -> dict:
    d = {
        "model": spec.model, "groups": spec.groups, "init": spec.init,
        "repetitions": spec.repetitions, "seed": spec.seed,
        "epsilon": spec.epsilon, "max_iter": spec.max_iter,
    }
    if spec.model == "gmm":
        d["structure"] = spec.structure
    for k in ("starts", "pre_iters", "nu0", "rate", "stage"):
        v = getattr(spec, k)
        if v is not None:
            d[k] = v
    return d


def report_dict(results, include_timing: bool = True) -> dict:
    """JSON-native report payload; deterministic for identical inputs.

    ``results`` is a RestartDistribution or an ordered mapping of method
    name to distribution.  Timing is segregated so that reports with
    ``include_timing=False`` are byte-identical across runs.
    """
    if isinstance(results, RestartDistribution):
        results = {"run": results}
    if not results:
        raise ValueError("no results to report")
    methods = {}
    for name, dist in results.items():
        best_rec = dist.best_record()
        entry = {
            "spec": _spec_to_dict(dist.spec),
            "repetitions": dist.spec.repetitions,
            "values": list(dist.values),
            "bins": [[b, c] for b, c in dist.bins],
            "best": dist.best,
            "attain_rate": dist.attain_rate,
            "attain_tolerance": ATTAIN_TOL,
            "runs": [
                {
                    "rep": r.rep,
                    "objective": r.objective,
                    "bin": bin_value(r.objective),
                    "iterations": r.fit.iterations,
                    "converged": r.fit.converged,
                    "flags": list(r.fit.flags),
                    "trace": list(r.fit.trace),
                }
                for r in dist.records
            ],
            "failures": [[rep, msg] for rep, msg in dist.failures],
            "best_params": _params_to_dict(best_rec.fit.params),
        }
        if include_timing:
            entry["timing_seconds"] = {str(r.rep): r.seconds for r in dist.records}
        methods[name] = entry
    return {"binning": BINNING_RULE, "methods": methods}


def _format_table(payload: dict) -> str:
    all_bins = sorted({b for m in payload["methods"].values() for b, _ in m["bins"]})
    name_w = max(len("log-likelihood bin"), *(len(n) for n in payload["methods"]))
    col_w = max(6, *(len(str(b)) for b in all_bins)) if all_bins else 6
    lines = [f"binning: {payload['binning']}"]
    header = "log-likelihood bin".ljust(name_w)
    for b in all_bins:
        header += str(b).rjust(col_w + 2)
    lines.append(header)
    for name, m in payload["methods"].items():
        counts = dict(map(tuple, m["bins"]))
        row = name.ljust(name_w)
        for b in all_bins:
            row += str(counts.get(b, 0)).rjust(col_w + 2)
        lines.append(row)
    lines.append("")
    lines.append(f"{'method'.ljust(name_w)}  {'best':>12}  {'attain_rate':>12}")
    for name, m in payload["methods"].items():
        lines.append(f"{name.ljust(name_w)}  {m['best']:>12.2f}  {m['attain_rate']:>12.3f}")
    return "\n".join(lines) + "\n"


def _format_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    has_timing = any("timing_seconds" in m for m in payload["methods"].values())
    header = ["method", "rep", "objective", "bin", "iterations", "converged", "flags"]
    if has_timing:
        header.append("seconds")
    writer.writerow(header)
    for name, m in payload["methods"].items():
        timing = m.get("timing_seconds", {})
        for run in m["runs"]:
            row = [name, run["rep"], repr(run["objective"]), run["bin"],
                   run["iterations"], run["converged"], ";".join(run["flags"])]
            if has_timing:
                row.append(timing.get(str(run["rep"]), ""))
            writer.writerow(row)
    return buf.getvalue()


def emit_report(results, fmt: str = "json", out: str | None = None,
                include_timing: bool = True) -> str:
    """Render results as json, csv, or table-text; optionally write to a path.

    Returns the rendered text.  Write failures raise OSError naming the
    target path.
    """
    payload = report_dict(results, include_timing=include_timing)
    if fmt == "json":
        text = json.dumps(payload, indent=2) + "\n"
    elif fmt == "csv":
        text = _format_csv(payload)
    elif fmt == "table-text":
        text = _format_table(payload)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected json, csv, or table-text")
    if out is not None:
        try:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as err:
            raise OSError(f"cannot write report to {out!r}: {err}") from err
    return text
