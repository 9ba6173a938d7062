"""``uniembed`` command line: one subcommand per experiment stage.

Exit codes: 0 success, 1 domain error, 2 usage or config error.
Flags win over ``--set key=value`` overrides, which win over the config
file, which wins over built-in defaults.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from uniembed.analysis import occupancy, pca_project, projection_csv
from uniembed.config import RunConfig, parse_config, with_overrides
from uniembed.errors import ConfigError, UniEmbedError
from uniembed.gradcheck import LOSS_KINDS, grad_check, seeded_random_net
from uniembed.netcore import load_model, save_model
from uniembed.retrieval import EvalSplit, RetrievalReport, compare_reports, load_report, top_k_accuracy
from uniembed.rng import Xoshiro256
from uniembed.synthdata import add_label_noise, generate, load_dataset, save_dataset
from uniembed.tripletlearn import train_specialist
from uniembed.unify import (
    SpecialistRegistry,
    VerticalPartition,
    compute_targets,
    greedy_combine,
    load_registry,
    load_targets,
    mean_target_distance,
    save_registry,
    train_unified,
)

log = logging.getLogger("uniembed")


class ArgumentProblem(Exception):
    """Inconsistent or missing command-line arguments (exit code 2)."""


# Label-noise draws use a stream separate from generation.
NOISE_STREAM = 0x6E6F697365


def _csv_list(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_json(path, doc):
    _write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_config(args):
    cfg = parse_config(args.config) if args.config else RunConfig()
    cfg = with_overrides(cfg, args.set or [])
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _data_path(args, cfg):
    path = getattr(args, "data", None) or cfg.data
    if not path:
        raise ArgumentProblem("no dataset given (use --data or set 'data' in the config)")
    return path


def _registry_from_args(args):
    if getattr(args, "registry", None):
        return load_registry(args.registry)
    if getattr(args, "partition", None) and getattr(args, "models", None):
        partition = VerticalPartition.from_dict(json.loads(Path(args.partition).read_text()))
        if len(args.models) != len(partition.groups):
            raise ArgumentProblem(f"{len(partition.groups)} groups but {len(args.models)} model files")
        return SpecialistRegistry([(g, load_model(m)) for g, m in zip(partition.groups, args.models)])
    return None


def _registry_report(registry, dataset, ks, label):
    """Each group's specialist scored on its own verticals' pool."""
    acc, counts = {}, {}
    for verticals, net in registry.entries:
        rep = top_k_accuracy(net, dataset, EvalSplit.from_dataset(dataset, verticals), ks)
        acc.update(rep.accuracies)
        counts.update(rep.counts)
    return RetrievalReport(sorted({int(k) for k in ks}), dict(sorted(acc.items())), dict(sorted(counts.items())), label)


def cmd_gen_data(args, cfg):
    dataset = generate(cfg.gen_spec())
    rate = args.noise_rate
    if rate is not None:
        dataset = add_label_noise(dataset, rate, Xoshiro256(cfg.seed ^ NOISE_STREAM))
    save_dataset(dataset, args.out)
    log.info("wrote %d items to %s", len(dataset), args.out)


def cmd_train(args, cfg):
    dataset = load_dataset(_data_path(args, cfg))
    scope = _csv_list(args.verticals) if args.verticals else dataset.verticals
    tcfg = cfg.triplet_config(args.steps)
    net_cfg = cfg.net_config(dataset.input_dim)
    clean = load_dataset(args.finetune) if args.finetune else None
    eval_data = clean or dataset
    split = EvalSplit.from_dataset(eval_data, scope) if args.track else None
    net, history = train_specialist(dataset, scope, net_cfg, tcfg, eval_split=split)
    if clean is not None:
        offset = history.steps[-1] if history.checkpoints else 0
        ft_cfg = replace(tcfg, steps=cfg.finetune_steps)
        net, ft_history = train_specialist(clean, scope, net_cfg, ft_cfg, init_net=net, eval_split=split)
        for c in ft_history.checkpoints:
            history.append(offset + c.step, c.mean_loss, c.top1)
    save_model(net, args.out)
    if args.history:
        _write(args.history, history.to_csv())
    if args.figure:
        from uniembed.plotting import plot_history

        plot_history(history, args.figure, title=f"specialist {','.join(scope)}")


def cmd_combine(args, cfg):
    dataset = load_dataset(_data_path(args, cfg))
    order = _csv_list(args.order) if args.order else list(cfg.vertical_order) or dataset.default_order()
    epsilon = cfg.epsilon if args.epsilon is None else args.epsilon
    models = {}
    partition, report = greedy_combine(
        dataset, order, epsilon, cfg.net_config(dataset.input_dim), cfg.triplet_config(args.steps),
        threads=cfg.threads, models=models,
    )
    _write_json(args.out, partition.to_dict())
    if args.report:
        _write_json(args.report, report.to_dict())
    if args.registry:
        save_registry(SpecialistRegistry([(g, models[g]) for g in partition.groups]), args.registry)
    log.info("partition: %s", partition.groups)


def cmd_targets(args, cfg):
    dataset = load_dataset(_data_path(args, cfg))
    registry = _registry_from_args(args)
    if registry is None:
        raise ArgumentProblem("targets needs --registry or --partition with --models")
    targets = compute_targets(registry, dataset)
    _write(args.out, targets.to_csv())


def cmd_distill(args, cfg):
    dataset = load_dataset(_data_path(args, cfg))
    targets = load_targets(args.targets)
    steps = cfg.distill_steps if args.steps is None else args.steps
    net_cfg = replace(cfg.unified_net_config(dataset.input_dim), embedding_dim=targets.dim)
    net, history = train_unified(
        dataset, targets, net_cfg, steps, cfg.distill_lr, cfg.distill_momentum, cfg.distill_batch_size, cfg.seed,
        eval_every=cfg.eval_every,
    )
    save_model(net, args.out)
    if args.history:
        _write(args.history, history.to_csv())
    if args.figure:
        from uniembed.plotting import plot_history

        plot_history(history, args.figure, title="unified model distillation")
    log.info("mean squared distance to targets: %.6f", mean_target_distance(net, dataset, targets))


def cmd_eval(args, cfg):
    dataset = load_dataset(_data_path(args, cfg))
    ks = [int(k) for k in _csv_list(args.ks)] if args.ks else list(cfg.ks)
    registry = _registry_from_args(args)
    label = args.label or ""
    if registry is not None:
        report = _registry_report(registry, dataset, ks, label)
    elif args.model:
        verticals = _csv_list(args.verticals) if args.verticals else None
        report = top_k_accuracy(load_model(args.model), dataset, EvalSplit.from_dataset(dataset, verticals), ks, label)
    else:
        raise ArgumentProblem("eval needs --model, --registry, or --partition with --models")
    _write(args.out, report.to_json())
    if args.csv:
        _write(args.csv, report.to_csv())
    if args.figure:
        from uniembed.plotting import plot_accuracy_vs_k

        plot_accuracy_vs_k(report, args.figure, title=label or "top-k accuracy")


def cmd_compare(args, cfg):
    a, b = load_report(args.a), load_report(args.b)
    delta = compare_reports(a, b)
    _write_json(args.out, delta.to_dict())
    if args.csv:
        _write(args.csv, delta.to_csv())
    if args.figure:
        from uniembed.plotting import plot_comparison

        plot_comparison({a.label or "a": a, b.label or "b": b}, a.ks[0], args.figure)


def cmd_analyze(args, cfg):
    dataset = load_dataset(_data_path(args, cfg))
    if args.targets:
        targets = load_targets(args.targets)
        ids = targets.item_ids
        emb = targets.matrix(ids)
    elif args.model:
        ids = dataset.indices(split="index")
        emb = load_model(args.model).embed(dataset.features(ids))
    else:
        raise ArgumentProblem("analyze needs --targets or --model")
    verticals = [dataset.items[i].vertical for i in ids]
    groups = {}
    for v, row in zip(verticals, emb):
        groups.setdefault(v, []).append(row)
    report = occupancy(groups)
    _write(args.out, report.to_json())
    coords, _ = pca_project(emb, 2)
    if args.projection:
        _write(args.projection, projection_csv(ids, verticals, coords))
    if args.figure:
        from uniembed.plotting import plot_projection

        plot_projection(coords, verticals, args.figure)


def cmd_check_grad(args, cfg):
    kinds = LOSS_KINDS if args.loss == "both" else (args.loss,)
    net = seeded_random_net(cfg.net_config())
    reports = [grad_check(net, kind, args.tol, seed=cfg.seed, alpha=cfg.alpha) for kind in kinds]
    doc = {"format_version": 1, "checks": [r.to_dict() for r in reports]}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0 if all(r.passed for r in reports) else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, help="override every seed")
    common.add_argument("--threads", type=int, help="worker threads (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uniembed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--noise-rate", type=float, help="relabel products at this rate")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a triplet specialist")
    p.add_argument("--data")
    p.add_argument("--verticals", help="comma-separated scope (default: all)")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--finetune", metavar="CLEAN_CSV", help="second phase on clean labels")
    p.add_argument("--track", action="store_true", help="record top-1 at each checkpoint")
    p.add_argument("--history")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("combine", parents=[common], help="greedy vertical combination")
    p.add_argument("--data")
    p.add_argument("--out", required=True, help="partition JSON")
    p.add_argument("--report", help="per-candidate report JSON")
    p.add_argument("--registry", help="write the final group specialists and their index")
    p.add_argument("--order", help="comma-separated candidate order")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_combine)

    def registry_args(p):
        p.add_argument("--registry")
        p.add_argument("--partition")
        p.add_argument("--models", nargs="+")

    p = sub.add_parser("targets", parents=[common], help="specialist embeddings for distillation")
    p.add_argument("--data")
    registry_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("distill", parents=[common], help="train the unified model")
    p.add_argument("--data")
    p.add_argument("--targets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--history")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", parents=[common], help="top-k retrieval accuracy")
    p.add_argument("--data")
    p.add_argument("--model")
    registry_args(p)
    p.add_argument("--verticals")
    p.add_argument("--ks")
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="difference of two retrieval reports")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", parents=[common], help="embedding occupancy and PCA projection")
    p.add_argument("--data")
    p.add_argument("--targets")
    p.add_argument("--model")
    p.add_argument("--out", required=True)
    p.add_argument("--projection")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("check-grad", parents=[common], help="finite-difference gradient check")
    p.add_argument("--loss", choices=[*LOSS_KINDS, "both"], default="both")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_grad)
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load_config(args)
        code = args.func(args, cfg)
    except ConfigError as exc:
        print(f"uniembed: config error: {exc}", file=sys.stderr)
        return 2
    except ArgumentProblem as exc:
        print(f"uniembed: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except UniEmbedError as exc:
        print(f"uniembed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"uniembed: {exc}", file=sys.stderr)
        return 1
    return code or 0


def main():
    sys.exit(run())
