"""Command-line interface: train, prune, verify, maximize, study, summarize.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 partial
completion (a study skipped some instances; reasons are logged).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .harness import (
    ConfigError,
    DEFAULT_GROUP_BY,
    load_config,
    load_records,
    load_scatter,
    run_maximization_study,
    run_verification_study,
    summarize,
    write_summary,
)
from .network import forward, load_network, save_network, random_init, train as train_network
from .pruning import FinetuneSpec, PruningSpec, prune
from .solver import SolverConfig
from .surrogate import (
    VerificationInstance,
    maximize_direct,
    maximize_via_surrogate,
    verify_direct,
    verify_via_surrogate,
)

logger = logging.getLogger(__name__)


def _parse_dims(text):
    try:
        dims = [int(p) for p in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad dims {text!r}: expected comma-separated integers") from exc
    if len(dims) < 2:
        raise ConfigError("dims needs at least input and output sizes")
    return dims


def _load_x0(path):
    with open(path) as fh:
        data = json.load(fh)
    return np.asarray(data, dtype=np.float64)


def _solver_config(args):
    return SolverConfig(
        time_limit_seconds=args.time_limit,
        emphasis=getattr(args, "emphasis", "feasibility"),
    )


def _tool_settings(path):
    """Only the data/train/pruning sections; grid-free commands need no study."""
    from .harness import read_toml

    doc = read_toml(path) if path else {}
    data = doc.get("data", {})
    training = doc.get("train", {})
    pruning = doc.get("pruning", {})
    return {
        "source": data.get("source", "synthetic"),
        "classes": int(data.get("classes", 3)),
        "samples": int(data.get("samples", 300)),
        "idx_images": data.get("idx_images"),
        "idx_labels": data.get("idx_labels"),
        "downscale": data.get("downscale"),
        "epochs": int(training.get("epochs", 20)),
        "learning_rate": float(training.get("learning_rate", 0.1)),
        "batch_size": int(training.get("batch_size", 32)),
        "rounds": int(pruning.get("rounds", 5)),
        "epochs_per_round": int(pruning.get("epochs_per_round", 5)),
    }


def _build_dataset(settings, n_inputs):
    from .harness import build_dataset

    return build_dataset(
        n_inputs,
        source=settings["source"],
        classes=settings["classes"],
        samples=settings["samples"],
        idx_images=settings["idx_images"],
        idx_labels=settings["idx_labels"],
        downscale=settings["downscale"],
    )


def _cmd_train(args):
    settings = _tool_settings(args.config)
    dims = _parse_dims(args.dims)
    data = _build_dataset(settings, dims[0])
    if dims[-1] != data.num_classes:
        raise ConfigError(
            f"network has {dims[-1]} outputs but the dataset has {data.num_classes} classes"
        )
    net = random_init(dims, seed=args.seed, domain=(data.box.lo, data.box.hi))
    net = train_network(
        net,
        data,
        epochs=settings["epochs"],
        learning_rate=settings["learning_rate"],
        batch_size=settings["batch_size"],
        seed=args.seed,
    )
    save_network(net, args.out)
    from .network import accuracy

    print(f"trained {dims} net: train accuracy {accuracy(net, data):.3f} -> {args.out}")
    return 0


def _cmd_prune(args):
    net = load_network(args.net)
    finetune = None
    data = None
    if args.finetune:
        if args.config is None:
            raise ConfigError("--finetune needs --config for the training data")
        settings = _tool_settings(args.config)
        data = _build_dataset(settings, net.n_inputs)
        finetune = FinetuneSpec(
            rounds=settings["rounds"],
            epochs_per_round=settings["epochs_per_round"],
            learning_rate=settings["learning_rate"],
            batch_size=settings["batch_size"],
        )
    spec = PruningSpec(args.method, args.granularity, args.rate, finetune, args.seed)
    sparse = prune(net, spec, data)
    save_network(sparse, args.out)
    zeros = sum(int(np.sum(w == 0.0)) for w in sparse.weights)
    total = sum(w.size for w in sparse.weights)
    print(
        f"pruned {spec.label()}: dims {sparse.dims}, {zeros}/{total} zero weights -> {args.out}"
    )
    return 0


def _instance_from_args(args, net):
    x0 = _load_x0(args.x0)
    y0 = forward(net, x0).output
    j = args.j if args.j is not None else int(np.argmax(y0))
    j_prime = args.j_prime if args.j_prime is not None else int(np.argsort(y0)[-2])
    return VerificationInstance(net, x0, args.eps, j, j_prime)


def _cmd_verify(args):
    net = load_network(args.net)
    instance = _instance_from_args(args, net)
    config = _solver_config(args)
    if args.sparse:
        sparse = load_network(args.sparse)
        result = verify_via_surrogate(instance, sparse, config)
        route = "surrogate"
    else:
        result = verify_direct(instance, config)
        route = "direct"
    print(
        f"{route} verification (j={instance.j}, j'={instance.j_prime}, eps={instance.eps}): "
        f"{result.outcome} in {result.wall_seconds:.3f}s "
        f"({result.incumbents_evaluated} incumbents, solver {result.solver_status})"
    )
    if result.outcome == "adversarial-found":
        print(f"margin y_j' - y_j = {result.value!r}")
        if args.save_x:
            with open(args.save_x, "w") as fh:
                json.dump(result.x.tolist(), fh)
            print(f"adversarial input -> {args.save_x}")
    return 0


def _cmd_maximize(args):
    net = load_network(args.net)
    config = _solver_config(args)
    if args.sparse:
        sparse = load_network(args.sparse)
        result = maximize_via_surrogate(net, sparse, config)
        route = "surrogate"
    else:
        result = maximize_direct(net, config)
        route = "direct"
    print(
        f"{route} maximization: best value {result.value!r} in {result.wall_seconds:.3f}s "
        f"({result.incumbents_evaluated} incumbents, solver {result.solver_status})"
    )
    if args.save_x and result.x is not None:
        with open(args.save_x, "w") as fh:
            json.dump(result.x.tolist(), fh)
        print(f"maximizer -> {args.save_x}")
    return 0


def _cmd_study(args):
    config = load_config(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    if args.time_limit is not None:
        config.time_limit = args.time_limit
    if args.workers is not None:
        config.workers = args.workers
    expected = {"verify": "verification", "maximize": "maximization"}[args.kind]
    if config.study != expected:
        raise ConfigError(
            f"'study {args.kind}' needs a config with study = \"{expected}\""
        )
    runner = run_verification_study if args.kind == "verify" else run_maximization_study
    result = runner(config)
    print(f"{len(result.records)} records, {len(result.skipped)} instances skipped")
    for name, path in result.paths.items():
        print(f"{name}: {path}")
    return 3 if result.skipped else 0


def _cmd_summarize(args):
    with open(args.records) as fh:
        header = fh.readline().strip().split(",")
    if "direct_metric" in header:
        records = load_scatter(args.records)
    else:
        records = load_records(args.records)
    group_by = tuple(args.group_by.split(",")) if args.group_by else DEFAULT_GROUP_BY
    rows = summarize(records, group_by)
    if args.out:
        write_summary(rows, args.out)
        print(f"summary -> {args.out}")
    else:
        if rows:
            columns = list(rows[0].keys())
            print(",".join(columns))
            for row in rows:
                print(",".join("" if row.get(c) is None else str(row.get(c)) for c in columns))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsemip",
        description="Optimize over trained ReLU networks via pruned MILP surrogates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, time_limit=300.0):
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument(
            "--time-limit", type=float, default=time_limit, help="solver time limit (s)"
        )
        p.add_argument("--config", help="TOML configuration file")

    p = sub.add_parser("train", help="train a dense network on configured data")
    common(p)
    p.add_argument("--dims", required=True, help="comma-separated layer sizes")
    p.add_argument("--out", required=True, help="output network JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("prune", help="produce a sparse surrogate network")
    common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--method", choices=["magnitude", "random"], default="magnitude")
    p.add_argument(
        "--granularity", choices=["unstructured", "structured"], default="unstructured"
    )
    p.add_argument("--finetune", action="store_true")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("verify", help="search for an adversarial input")
    common(p)
    p.add_argument("--net", required=True, help="dense network JSON")
    p.add_argument("--sparse", help="surrogate network JSON (direct solve if omitted)")
    p.add_argument("--x0", required=True, help="JSON file with the input vector")
    p.add_argument("--eps", type=float, required=True, help="L1 perturbation budget")
    p.add_argument("--j", type=int, help="true class (default: predicted)")
    p.add_argument("--j-prime", type=int, help="target class (default: runner-up)")
    p.add_argument("--emphasis", choices=["balanced", "feasibility"], default="feasibility")
    p.add_argument("--save-x", help="write the adversarial input here")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("maximize", help="maximize a single-output network")
    common(p, time_limit=600.0)
    p.add_argument("--net", required=True)
    p.add_argument("--sparse", help="surrogate network JSON (direct solve if omitted)")
    p.add_argument("--emphasis", choices=["balanced", "feasibility"], default="feasibility")
    p.add_argument("--save-x", help="write the maximizing input here")
    p.set_defaults(func=_cmd_maximize)

    p = sub.add_parser("study", help="run a configured experiment grid")
    p.add_argument("kind", choices=["verify", "maximize"])
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("summarize", help="aggregate a records or scatter CSV")
    common(p)
    p.add_argument("--records", required=True)
    p.add_argument("--group-by", help="comma-separated record columns")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.error("failed: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
