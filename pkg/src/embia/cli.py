"""Command-line harness: fit, restart distributions, sweeps, comparisons.

Exit codes: 0 on success, 2 for validation problems (bad flags, malformed
data, inconsistent options), 3 for I/O problems (missing files, unwritable
outputs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .bench import (
    INITS,
    MODELS,
    ExperimentSpec,
    RestartDistribution,
    compare_solutions,
    emit_report,
    run_experiment,
    run_single,
    sweep,
)
from .data import (
    FIXTURE_KINDS,
    Dataset,
    builtin_karate,
    load_edgelist,
    load_matrix,
    resolve_fixture,
    summarize,
)
from .gmm import STRUCTURES

MODEL_KINDS = {"gmm": "continuous", "lca": "binary", "sbm": "network"}


def _looks_like_edgelist(path: str) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != 2:
                return False
            try:
                int(tokens[0]), int(tokens[1])
            except ValueError:
                return False
            return True
    return False


def load_dataset(ref: str, kind: str) -> Dataset:
    """Resolve 'karate', a named fixture, or a file path into a Dataset."""
    if ref == "karate":
        if kind != "network":
            raise ValueError(f"karate is a network dataset, not {kind}")
        return builtin_karate()
    if ref in FIXTURE_KINDS and not os.path.exists(ref):
        found = resolve_fixture(ref)
        if found is None:
            raise FileNotFoundError(
                f"fixture {ref!r} not found; place {ref}.csv under $EMBIA_DATA_DIR "
                f"or ./data (see data/README.md for provenance)"
            )
        if FIXTURE_KINDS[ref] != kind:
            raise ValueError(f"fixture {ref!r} is {FIXTURE_KINDS[ref]} data, not {kind}")
        ref = found
    if not os.path.exists(ref):
        raise FileNotFoundError(f"no such data file: {ref}")
    if kind == "network" and _looks_like_edgelist(ref):
        return load_edgelist(ref)
    return load_matrix(ref, kind)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, choices=MODELS)
    p.add_argument("--structure", default="VVV", choices=STRUCTURES)
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--init", default="random", choices=INITS)
    p.add_argument("--starts", type=int, default=None)
    p.add_argument("--pre-iters", type=int, default=None, dest="pre_iters")
    p.add_argument("--nu0", type=float, default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--stage", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=10_000, dest="max_iter")
    p.add_argument("--data", required=True)
    p.add_argument("--workers", type=int, default=1)


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", default="json", choices=("json", "csv", "table-text"))
    p.add_argument("--out", default="-")
    p.add_argument("--no-timing", action="store_true")


def _spec_from_args(args, repetitions: int) -> ExperimentSpec:
    spec = ExperimentSpec(
        model=args.model, groups=args.groups, init=args.init,
        structure=args.structure, repetitions=repetitions, seed=args.seed,
        epsilon=args.epsilon, max_iter=args.max_iter,
        starts=args.starts, pre_iters=args.pre_iters,
        nu0=args.nu0, rate=args.rate, stage=args.stage,
    )
    spec.validate()
    return spec


def _emit(args, results) -> None:
    text = emit_report(results, fmt=args.format,
                       out=None if args.out == "-" else args.out,
                       include_timing=not args.no_timing)
    if args.out == "-":
        sys.stdout.write(text)


def _cmd_fit(args) -> int:
    spec = _spec_from_args(args, repetitions=1)
    dataset = load_dataset(args.data, MODEL_KINDS[spec.model])
    record = run_single(spec, dataset, rep=0)
    dist = RestartDistribution(spec=spec, records=(record,))
    _emit(args, {"fit": dist})
    return 0


def _cmd_restarts(args) -> int:
    spec = _spec_from_args(args, repetitions=args.reps)
    dataset = load_dataset(args.data, MODEL_KINDS[spec.model])
    dist = run_experiment(spec, dataset, workers=args.workers)
    _emit(args, {spec.init: dist})
    return 0


def _parse_grid(text: str) -> tuple[str, list[float]]:
    if "=" not in text:
        raise ValueError(f"grid must look like name=v1,v2,..., got {text!r}")
    name, _, tail = text.partition("=")
    values = [float(v) for v in tail.split(",") if v.strip()]
    if not values:
        raise ValueError(f"grid {name!r} has no values")
    return name.strip(), values


def _fmt_grid(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def _cmd_sweep(args) -> int:
    name_a, values_a = _parse_grid(args.grid_a)
    name_b, values_b = _parse_grid(args.grid_b)
    int_params = {"starts", "pre_iters", "stage"}
    if name_a in int_params:
        values_a = [int(v) for v in values_a]
    if name_b in int_params:
        values_b = [int(v) for v in values_b]
    # Seed unset swept flags from the first grid value so the base spec
    # validates; every cell overrides both swept parameters anyway.
    for name, values in ((name_a, values_a), (name_b, values_b)):
        if hasattr(args, name) and getattr(args, name) is None:
            setattr(args, name, values[0])
    spec = _spec_from_args(args, repetitions=1)
    dataset = load_dataset(args.data, MODEL_KINDS[spec.model])
    matrix = sweep(spec, dataset, name_a, values_a, name_b, values_b,
                   workers=args.workers)
    # Delimited text: rows follow values_a, columns follow values_b.
    lines = ["\t".join([f"{name_a}\\{name_b}"] + [_fmt_grid(v) for v in values_b])]
    for va, row in zip(values_a, matrix):
        lines.append("\t".join([_fmt_grid(va)] + [repr(float(v)) for v in row]))
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as err:
            raise OSError(f"cannot write report to {args.out!r}: {err}") from err
    return 0


def _cmd_compare(args) -> int:
    spec_a = _spec_from_args(args, repetitions=1)
    dataset = load_dataset(args.data, MODEL_KINDS[spec_a.model])
    spec_b = ExperimentSpec(
        model=args.model, groups=args.groups, init=args.init_b,
        structure=args.structure, repetitions=1, seed=args.seed,
        epsilon=args.epsilon, max_iter=args.max_iter,
        starts=args.starts_b, pre_iters=args.pre_iters_b,
        nu0=args.nu0_b, rate=args.rate_b, stage=args.stage_b,
    )
    spec_b.validate()
    fit_a = run_single(spec_a, dataset, rep=0).fit
    fit_b = run_single(spec_b, dataset, rep=0).fit
    result = compare_solutions(fit_a, fit_b, dataset)
    result["init_a"] = spec_a.init
    result["init_b"] = spec_b.init
    sys.stdout.write(json.dumps(result, indent=2) + "\n")
    return 0


def _cmd_summarize(args) -> int:
    kind = args.kind
    if kind is None:
        if args.data == "karate":
            kind = "network"
        elif args.data in FIXTURE_KINDS:
            kind = FIXTURE_KINDS[args.data]
        else:
            raise ValueError("--kind is required for arbitrary data files")
    dataset = load_dataset(args.data, kind)
    sys.stdout.write(json.dumps(summarize(dataset), indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embia",
        description="Model-based clustering benchmarks: EM initialization strategies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="one fit; report its objective and parameters")
    _add_model_flags(p_fit)
    _add_report_flags(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_restarts = sub.add_parser("restarts", help="repeat fits; report the objective distribution")
    _add_model_flags(p_restarts)
    _add_report_flags(p_restarts)
    p_restarts.add_argument("--reps", type=int, default=1)
    p_restarts.set_defaults(func=_cmd_restarts)

    p_sweep = sub.add_parser("sweep", help="grid over two strategy parameters")
    _add_model_flags(p_sweep)
    p_sweep.add_argument("--grid-a", required=True, dest="grid_a",
                         help="name=v1,v2,... (starts, pre_iters, nu0, rate, stage)")
    p_sweep.add_argument("--grid-b", required=True, dest="grid_b")
    p_sweep.add_argument("--out", default="-")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="two strategies, one dataset, aligned comparison")
    _add_model_flags(p_cmp)
    p_cmp.add_argument("--init-b", required=True, choices=INITS, dest="init_b")
    p_cmp.add_argument("--starts-b", type=int, default=None, dest="starts_b")
    p_cmp.add_argument("--pre-iters-b", type=int, default=None, dest="pre_iters_b")
    p_cmp.add_argument("--nu0-b", type=float, default=None, dest="nu0_b")
    p_cmp.add_argument("--rate-b", type=float, default=None, dest="rate_b")
    p_cmp.add_argument("--stage-b", type=int, default=None, dest="stage_b")
    p_cmp.set_defaults(func=_cmd_compare)

    p_sum = sub.add_parser("summarize", help="dataset shape and summary statistics")
    p_sum.add_argument("--data", required=True)
    p_sum.add_argument("--kind", default=None, choices=("continuous", "binary", "network"))
    p_sum.set_defaults(func=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except RuntimeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
