"""Command-line operator surface.

Experiments are described by one JSON config file (see README for the full
schema); flags override config keys. Every command writes its outputs under a
fixed directory layout -- ``models/``, ``scores/``, ``reports/``,
``analysis/`` -- plus a ``manifest.json`` recording the config hash, the seed,
and the binary format versions, so a run can be reproduced byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import zlib

import numpy as np

from .analysis import (
    average_margin,
    distribution_summary,
    margin_rank_correlation,
    pareto_table,
    rank_correlation,
    write_distribution_csv,
    write_margin_correlation_csv,
    write_margins_csv,
    write_pareto_csv,
    write_rank_correlation_csv,
)
from .cascade import (
    Boundary,
    CascadeConfig,
    CostReport,
    PruningSpec,
    RegressorConfig,
    TierCost,
    prepare_cascade,
    run_cascade,
    save_regressor,
)
from .datasets import TAIL, build_filter_index, build_queries, load_dataset
from .ensemble import additive_combine, tune_alpha
from .errors import KGCascadeError
from .evaluation import EvalReport, evaluate, gold_ranks
from .kge import TrainConfig, load_model, save_model, score_all, train_kge
from .scores import (
    CostModel,
    cascade_cost,
    load_matrix,
    normalize_per_query,
    queries_from_keys,
    save_matrix,
    synthesize_scorer,
)

FORMAT_VERSIONS = {"score_matrix": 1, "kge_checkpoint": 1, "regressor_checkpoint": 1}
THREADS_ENV = "CASCADE_RANK_THREADS"


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(args) -> dict:
    config: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "out", None):
        config["out"] = args.out
    config.setdefault("seed", 0)
    config.setdefault("out", "runs/default")
    return config


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _ensure_dirs(out: str) -> dict[str, str]:
    paths = {name: os.path.join(out, name) for name in ("models", "scores", "reports", "analysis")}
    for p in paths.values():
        os.makedirs(p, exist_ok=True)
    return paths


def _write_manifest(out: str, command: str, config: dict) -> None:
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()
    manifest = {
        "command": command,
        "config_hash": digest,
        "seed": config.get("seed", 0),
        "formats": FORMAT_VERSIONS,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _derived_seed(global_seed: int, name: str) -> int:
    return (int(global_seed) * 1000003 + zlib.crc32(name.encode("utf-8"))) % (2**31)


def _scorer_config(config: dict, name: str) -> dict:
    scorers = config.get("scorers", {})
    if name not in scorers:
        raise ValueError(f"scorer {name!r} is not defined in the config")
    return scorers[name]


def _dataset(config: dict, args=None):
    path = getattr(args, "dataset", None) or config.get("dataset")
    if not path:
        raise ValueError("no dataset directory given (config key 'dataset' or --dataset)")
    return load_dataset(path)


def _get_model(config: dict, name: str, kg, dirs: dict[str, str]):
    """Load the scorer's checkpoint, training it first if absent.

    Scoring always goes through the serialized float32 parameters so repeated
    runs agree bit for bit whether or not the model was retrained.
    """
    spec = _scorer_config(config, name)
    if spec.get("kind", "kge") != "kge":
        raise ValueError(f"scorer {name!r} is not a trainable embedding model")
    path = os.path.join(dirs["models"], f"{name}.ckpt")
    if not os.path.exists(path):
        result = _train_scorer(config, name, kg)
        save_model(result.model, path)
    return load_model(path), path


def _train_scorer(config: dict, name: str, kg):
    spec = _scorer_config(config, name)
    seed = spec.get("seed")
    train_config = TrainConfig(
        arch=spec.get("arch", "complex"),
        dim=int(spec.get("dim", 64)),
        epochs=int(spec.get("epochs", 50)),
        lr=float(spec.get("lr", 0.05)),
        negatives=int(spec.get("negatives", 4)),
        batch_size=int(spec.get("batch_size", 256)),
        loss=spec.get("loss", "bce"),
        margin=float(spec.get("margin", 1.0)),
        l2=float(spec.get("l2", 0.0)),
        seed=int(seed) if seed is not None else _derived_seed(config["seed"], name),
    )
    return train_kge(kg, train_config)


def _get_matrix(config: dict, name: str, split: str, kg, dirs, threads: int):
    """Raw score matrix for one scorer on one split, persisted under scores/."""
    spec = _scorer_config(config, name)
    kind = spec.get("kind", "kge")
    queries = build_queries(kg, split)
    out_path = os.path.join(dirs["scores"], f"{name}-{split}.csm")
    if kind == "kge":
        model, _ = _get_model(config, name, kg, dirs)
        matrix = score_all(model, queries, threads=threads)
    elif kind == "synthetic":
        seed = spec.get("seed")
        matrix = synthesize_scorer(
            kg,
            queries,
            float(spec.get("fidelity", 0.5)),
            int(seed) if seed is not None else _derived_seed(config["seed"], name),
        )
    elif kind == "matrix":
        paths = spec.get("paths", {})
        if split not in paths:
            raise ValueError(f"scorer {name!r} has no score-matrix path for split {split!r}")
        matrix = load_matrix(paths[split], expected_queries=queries)
    else:
        raise ValueError(f"unknown scorer kind {kind!r} for {name!r}")
    save_matrix(matrix, out_path)
    return matrix


def _print_report(report: EvalReport, label: str) -> None:
    print(f"{label}:")
    print(f"  {'':8s}{'mrr':>8s}{'hits@1':>9s}{'hits@3':>9s}{'hits@10':>9s}{'n':>7s}")
    for name, rep in (("overall", report), ("tail", report.tail), ("head", report.head)):
        if rep is None:
            continue
        print(
            f"  {name:8s}{rep.mrr:8.4f}{rep.hits[1]:9.4f}{rep.hits[3]:9.4f}"
            f"{rep.hits[10]:9.4f}{rep.n_queries:7d}"
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> int:
    config = _load_config(args)
    kg = _dataset(config, args)
    print(f"dataset: {getattr(args, 'dataset', None) or config.get('dataset')}")
    print(f"  entities   {kg.n_entities}")
    print(f"  relations  {kg.n_relations}")
    for split in ("train", "dev", "test"):
        print(f"  {split:10s} {len(kg.split(split))}")
    described = sum(1 for m in kg.entity_meta if m)
    if described:
        print(f"  descriptions on {described} entities")
    return 0


def cmd_train_kge(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    names = [args.scorer] if args.scorer else [
        name
        for name, spec in config.get("scorers", {}).items()
        if spec.get("kind", "kge") == "kge"
    ]
    if not names:
        raise ValueError("no trainable scorers in config")
    for name in names:
        result = _train_scorer(config, name, kg)
        path = os.path.join(dirs["models"], f"{name}.ckpt")
        save_model(result.model, path)
        print(f"{name}: checkpoint -> {path}")
        if result.dev_report is not None:
            _write_json(
                os.path.join(dirs["reports"], f"{name}-dev.json"),
                result.dev_report.to_dict(),
            )
            _print_report(result.dev_report, f"{name} dev")
    _write_manifest(config["out"], "train-kge", config)
    return 0


def cmd_score(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    matrix = _get_matrix(config, args.scorer, args.split, kg, dirs, _threads(args))
    print(
        f"{args.scorer} on {args.split}: {matrix.n_queries} x {matrix.n_entities} "
        f"-> {os.path.join(dirs['scores'], f'{args.scorer}-{args.split}.csm')}"
    )
    _write_manifest(config["out"], "score", config)
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    matrix = load_matrix(args.matrix)
    queries = queries_from_keys(matrix.query_keys)
    report = evaluate(matrix, queries, build_filter_index(kg))
    stem = os.path.splitext(os.path.basename(args.matrix))[0]
    out_path = os.path.join(dirs["reports"], f"{stem}-eval.json")
    _write_json(out_path, report.to_dict())
    _print_report(report, stem)
    print(f"report -> {out_path}")
    _write_manifest(config["out"], "evaluate", config)
    return 0


def cmd_ensemble(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    fi = build_filter_index(kg)
    m_a = normalize_per_query(load_matrix(args.a))
    m_b = normalize_per_query(load_matrix(args.b))
    queries = queries_from_keys(m_a.query_keys)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else config.get("alpha_grid")
    alpha, mrr = tune_alpha(m_a, m_b, queries, fi, grid)
    combined = additive_combine(m_a, m_b, alpha)
    report = evaluate(combined, queries, fi)
    out_matrix = os.path.join(dirs["scores"], "ensemble.csm")
    save_matrix(combined, out_matrix)
    _write_json(
        os.path.join(dirs["reports"], "ensemble.json"),
        {"alpha": alpha, "tuning_mrr": mrr, "report": report.to_dict()},
    )
    print(f"tuned alpha = {alpha:.2f} (mrr {mrr:.4f}); combined -> {out_matrix}")
    _print_report(report, "ensemble")
    _write_manifest(config["out"], "ensemble", config)
    return 0


def _cascade_config(config: dict) -> CascadeConfig:
    if "cascade" not in config:
        raise ValueError("config has no 'cascade' section")
    data = dict(config["cascade"])
    if "cost_model" not in data and "cost_model" in config:
        data["cost_model"] = config["cost_model"]
    return CascadeConfig.from_dict(data)


def _regressor_config(config: dict) -> RegressorConfig:
    spec = config.get("regressor", {})
    return RegressorConfig(
        hidden=int(spec.get("hidden", 64)),
        lr=float(spec.get("lr", 0.01)),
        epochs=int(spec.get("epochs", 5000)),
        seed=int(spec.get("seed", _derived_seed(config.get("seed", 0), "regressor"))),
    )


def _tier_matrices(config, cascade, split, kg, dirs, threads):
    return [
        normalize_per_query(_get_matrix(config, name, split, kg, dirs, threads))
        for name in cascade.tiers
    ]


def _needs_dev(cascade: CascadeConfig) -> bool:
    return any(
        b.alpha is None or b.pruning.kind in ("static-quantile", "dynamic")
        for b in cascade.boundaries
    )


def _prepare_and_run(config, cascade, split, kg, fi, dirs, threads):
    """Calibrate on dev where needed, then run the cascade on ``split``."""
    eval_queries = build_queries(kg, split)
    eval_matrices = _tier_matrices(config, cascade, split, kg, dirs, threads)
    if _needs_dev(cascade):
        if split == "dev":
            dev_queries, dev_matrices = eval_queries, eval_matrices
        else:
            dev_queries = build_queries(kg, "dev")
            dev_matrices = _tier_matrices(config, cascade, "dev", kg, dirs, threads)
        resolved = prepare_cascade(
            cascade,
            dev_matrices,
            dev_queries,
            fi,
            alpha_grid=config.get("alpha_grid"),
            regressor_config=_regressor_config(config),
        )
    else:
        resolved = cascade
    result = run_cascade(resolved, eval_matrices, eval_queries, fi)
    return resolved, result, eval_queries, eval_matrices


def cmd_cascade(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    fi = build_filter_index(kg)
    split = args.split or config.get("split", "test")
    cascade = _cascade_config(config)
    threads = _threads(args)

    resolved, result, eval_queries, eval_matrices = _prepare_and_run(
        config, cascade, split, kg, fi, dirs, threads
    )
    report = evaluate(result.matrix, eval_queries, fi)
    tier1_report = evaluate(eval_matrices[0], eval_queries, fi)

    matrix_path = os.path.join(dirs["scores"], f"cascade-{split}.csm")
    save_matrix(result.matrix, matrix_path)
    _write_json(os.path.join(dirs["reports"], f"cascade-{split}.json"), report.to_dict())

    regressor_paths: dict[str, object] = {}
    for t, boundary in enumerate(resolved.boundaries):
        reg = boundary.pruning.regressor
        if reg is None:
            continue
        if isinstance(reg, dict):
            paths = {}
            for direction, sub in reg.items():
                tag = "tail" if direction == TAIL else "head"
                p = os.path.join(dirs["models"], f"regressor-b{t}-{tag}.ckpt")
                save_regressor(sub, p)
                paths[tag] = p
            regressor_paths[str(t)] = paths
        else:
            p = os.path.join(dirs["models"], f"regressor-b{t}.ckpt")
            save_regressor(reg, p)
            regressor_paths[str(t)] = p

    _write_json(
        os.path.join(dirs["reports"], f"cascade-{split}-cost.json"),
        {
            "cost": result.cost.to_dict(),
            "boundaries": result.boundary_summaries,
            "crossings": result.boundary_crossings,
            "resolved_config": resolved.to_dict(),
            "regressor_checkpoints": regressor_paths,
            "tier1_mrr": tier1_report.mrr,
        },
    )

    print(f"cascade on {split}: matrix -> {matrix_path}")
    for tier in result.cost.tiers:
        print(f"  tier {tier.scorer}: {tier.pairs} pairs, cost {tier.cost:g}")
    for summary in result.boundary_summaries:
        print(
            f"  boundary {summary['boundary']}: {summary['pruning']}, "
            f"alpha {summary['alpha']:.2f}, k median {summary['k_median']:g}, "
            f"crossings {summary['crossings']}"
        )
    print(f"  total cost {result.cost.total_cost:g}")
    print(f"  tier-1 mrr {tier1_report.mrr:.4f} -> cascade mrr {report.mrr:.4f}")
    _print_report(report, f"cascade {split}")
    _write_manifest(config["out"], "cascade", config)
    return 0


def cmd_analyze(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    fi = build_filter_index(kg)
    matrices = {}
    for path in args.matrices:
        stem = os.path.splitext(os.path.basename(path))[0]
        matrices[stem] = load_matrix(path)
    names = list(matrices)
    base_keys = matrices[names[0]].query_keys
    queries = queries_from_keys(base_keys)

    ranks = {}
    margin_rows = []
    for name, matrix in matrices.items():
        if not np.array_equal(matrix.query_keys, base_keys):
            raise ValueError(f"matrix {name} is not query-aligned with {names[0]}")
        r = gold_ranks(matrix, queries, fi)
        ranks[name] = r
        margins = average_margin(matrix, queries, fi)
        write_margins_csv(
            queries, margins, r, os.path.join(dirs["analysis"], f"margins-{name}.csv")
        )
        write_distribution_csv(
            distribution_summary(matrix),
            os.path.join(dirs["analysis"], f"distributions-{name}.csv"),
        )
        try:
            corr = margin_rank_correlation(matrix, queries, fi)
        except ValueError:
            corr = float("nan")
        margin_rows.append((name, corr))
        print(f"{name}: margin/reciprocal-rank correlation {corr:.4f}")

    pair_rows = []
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            r = rank_correlation(ranks[a], ranks[b])
            pair_rows.append((a, b, r))
            print(f"gold-rank correlation {a} vs {b}: {r:.4f}")
    if pair_rows:
        write_rank_correlation_csv(
            pair_rows, os.path.join(dirs["analysis"], "rank_correlations.csv")
        )
    write_margin_correlation_csv(
        margin_rows, os.path.join(dirs["analysis"], "margin_correlations.csv")
    )
    print(f"analysis CSVs -> {dirs['analysis']}")
    _write_manifest(config["out"], "analyze", config)
    return 0


def cmd_pareto(args) -> int:
    config = _load_config(args)
    kg = _dataset(config)
    dirs = _ensure_dirs(config["out"])
    fi = build_filter_index(kg)
    cascade = _cascade_config(config)
    threads = _threads(args)
    quantiles = [float(x) for x in args.quantiles.split(",")]
    mode = args.mode

    dev_queries = build_queries(kg, "dev")
    dev_matrices = _tier_matrices(config, cascade, "dev", kg, dirs, threads)
    cost_model = cascade.cost_model or CostModel()

    runs = []
    tier1_report = evaluate(dev_matrices[0], dev_queries, fi)
    n_pairs = dev_matrices[0].n_queries * dev_matrices[0].n_entities
    tier1_total = cascade_cost(cost_model, [(cascade.tiers[0], n_pairs)])
    tier1_cost = CostReport(
        tiers=[TierCost(cascade.tiers[0], n_pairs, tier1_total)],
        total_pairs=n_pairs,
        total_cost=tier1_total,
    )
    runs.append(("tier1", tier1_cost, tier1_report))

    for q in quantiles:
        if mode == "dynamic" and q >= 1.0:
            pruning = PruningSpec(kind="none")
        elif mode == "dynamic":
            pruning = PruningSpec(kind="dynamic", q=q)
        else:
            pruning = PruningSpec(kind="static-quantile", q=q)
        swept = CascadeConfig(
            tiers=list(cascade.tiers),
            boundaries=[
                Boundary(pruning=PruningSpec(pruning.kind, pruning.k, pruning.q), alpha=b.alpha)
                for b in cascade.boundaries
            ],
            cost_model=cascade.cost_model,
        )
        resolved = prepare_cascade(
            swept,
            dev_matrices,
            dev_queries,
            fi,
            alpha_grid=config.get("alpha_grid"),
            regressor_config=_regressor_config(config),
        )
        result = run_cascade(resolved, dev_matrices, dev_queries, fi)
        report = evaluate(result.matrix, dev_queries, fi)
        label = f"{mode}-q{q:g}"
        runs.append((label, result.cost, report))
        print(
            f"{label}: pairs {result.cost.total_pairs}, cost {result.cost.total_cost:g}, "
            f"dev mrr {report.mrr:.4f}"
        )

    rows = pareto_table(runs)
    out_path = os.path.join(dirs["analysis"], "pareto.csv")
    write_pareto_csv(rows, out_path)
    dominated = [r.label for r in rows if r.dominated]
    print(f"pareto table -> {out_path}" + (f" (dominated: {', '.join(dominated)})" if dominated else ""))
    _write_manifest(config["out"], "pareto", config)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgcascade",
        description="Tiered cascaded reranking for knowledge-graph link prediction",
    )
    parser.add_argument("--config", help="experiment config JSON")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--threads", type=int,
                        help=f"worker threads for scoring (or ${THREADS_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate a dataset directory and print statistics")
    p.add_argument("dataset", nargs="?", help="dataset directory (default: config key)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-kge", help="train embedding scorers and report dev metrics")
    p.add_argument("--scorer", help="train a single named scorer (default: all)")
    p.set_defaults(func=cmd_train_kge)

    p = sub.add_parser("score", help="write a scorer's full score matrix for a split")
    p.add_argument("--scorer", required=True)
    p.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="filtered MRR / hits@k of a score-matrix file")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="tune the convex weight of two matrices and combine")
    p.add_argument("--a", required=True, help="first score-matrix file")
    p.add_argument("--b", required=True, help="second score-matrix file")
    p.add_argument("--grid", help="comma-separated alpha grid (default 0.05..0.95)")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("cascade", help="calibrate on dev and run the configured cascade")
    p.add_argument("--split", choices=("train", "dev", "test"))
    p.set_defaults(func=cmd_cascade)

    p = sub.add_parser("analyze", help="diversity, margin, and distribution diagnostics")
    p.add_argument("matrices", nargs="+", help="score-matrix files (query-aligned)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pareto", help="sweep pruning quantiles and emit the Pareto table")
    p.add_argument("--quantiles", default="0.5,0.75,0.9,0.95,1.0")
    p.add_argument("--mode", default="static", choices=("static", "dynamic"))
    p.set_defaults(func=cmd_pareto)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KGCascadeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
