"""Command-line entry point.

Verbs: partition, stats, aggregate, augment, match, train, simulate,
analyze, synth. Exit codes: 0 success, 2 configuration error, 1 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .aggregate import (
    build_shape_bank,
    load_shape_bank,
    load_upload,
    save_shape_bank,
    save_upload,
    upload_from_set,
)
from .augment import AugmentPlan, augment_multi_domain, augment_single_domain
from .container import PartitionSpec, load_container, partition, save_container
from .errors import ConfigError, GgcalError
from .longtail import build_knowledge_base, match_report_csv
from .simulate import load_config, run_analysis, run_fed, run_longtail
from .synth import SynthSpec, synth_train_test
from .training import TrainConfig, evaluate, init_params, save_checkpoint, train


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (YAML or JSON)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path or directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ggcal")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate synthetic train/test containers")
    _add_common(p)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--domains", type=int, default=1)

    p = sub.add_parser("partition", help="split a container across clients")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", default="dirichlet_label_skew")
    p.add_argument("--clients", type=int, default=4)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--imbalance-factor", type=float, default=1.0)

    p = sub.add_parser("stats", help="compute a client's per-class statistics upload")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--client-id", type=int, default=0)

    p = sub.add_parser("aggregate", help="build a shape bank from uploads")
    _add_common(p)
    p.add_argument("uploads", nargs="+")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--prototypes", action="store_true")
    p.add_argument(
        "--domains",
        help="comma-separated domain id per upload file (default all 0)",
    )

    p = sub.add_parser("augment", help="GGEUR-augment a client container")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--target", type=int, default=2000)
    p.add_argument("--per-prototype", type=int, default=500)
    p.add_argument("--scale-mode", default="lambda")
    p.add_argument("--multi-domain", action="store_true")

    p = sub.add_parser("match", help="match classes against a knowledge base")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--m", type=int, default=5)

    p = sub.add_parser("train", help="train a classifier on a container")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--test")
    p.add_argument("--hidden-dim", type=int, default=512)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--sampler", default="uniform")

    p = sub.add_parser("simulate", help="run a full experiment from a config")
    _add_common(p)

    p = sub.add_parser("analyze", help="emit consistency/stability/size CSVs")
    _add_common(p)

    return ap


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        dim=args.dim,
        samples_per_class=args.per_class,
        num_domains=args.domains,
        seed=args.seed,
    )
    train_set, test_set, _ = synth_train_test(spec)
    out = Path(args.out or "synth")
    out.mkdir(parents=True, exist_ok=True)
    save_container(train_set, out / "train.geob")
    save_container(test_set, out / "test.geob")
    print(f"wrote {out / 'train.geob'} and {out / 'test.geob'}")
    return 0


def _cmd_partition(args) -> int:
    es = load_container(args.input)
    spec = PartitionSpec(
        kind=args.kind,
        num_clients=args.clients,
        beta=args.beta,
        imbalance_factor=args.imbalance_factor,
        seed=args.seed,
    )
    parts = partition(es, spec)
    out = Path(args.out or "clients")
    out.mkdir(parents=True, exist_ok=True)
    for k, idx in enumerate(parts):
        save_container(es.take(idx), out / f"client_{k:03d}.geob")
    (out / "partition.json").write_text(
        json.dumps({str(k): idx.tolist() for k, idx in enumerate(parts)}, sort_keys=True)
        + "\n"
    )
    print(f"wrote {len(parts)} client containers to {out}")
    return 0


def _cmd_stats(args) -> int:
    es = load_container(args.input)
    upload = upload_from_set(es, client_id=args.client_id)
    out = Path(args.out or f"client_{args.client_id:03d}.geou")
    save_upload(upload, out)
    print(f"wrote {out}")
    return 0


def _cmd_aggregate(args) -> int:
    domains = (
        [int(x) for x in args.domains.split(",")]
        if args.domains
        else [0] * len(args.uploads)
    )
    if len(domains) != len(args.uploads):
        raise ConfigError("--domains must list one domain id per upload file")
    uploads = [load_upload(p, domain_id=d) for p, d in zip(args.uploads, domains)]
    bank = build_shape_bank(uploads, m=args.m, include_prototypes=args.prototypes)
    out = Path(args.out or "bank.geos")
    save_shape_bank(bank, out)
    print(f"wrote {out} (C={bank.num_classes}, P={bank.dim}, m={bank.m})")
    return 0


def _cmd_augment(args) -> int:
    es = load_container(args.input)
    bank = load_shape_bank(args.bank)
    plan = AugmentPlan(
        target_count_per_class=args.target,
        per_prototype_count=args.per_prototype,
        scale_mode=args.scale_mode,
        seed=args.seed,
    )
    aug = augment_multi_domain if args.multi_domain else augment_single_domain
    out_set = aug(es, bank, plan)
    out = Path(args.out or "augmented.geob")
    save_container(out_set, out)
    print(f"wrote {out} ({es.n} -> {out_set.n} rows)")
    return 0


def _cmd_match(args) -> int:
    es = load_container(args.input)
    kb = build_knowledge_base(load_container(args.kb), m=args.m)
    csv = match_report_csv(es, kb, m=args.m)
    if args.out:
        Path(args.out).write_text(csv)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv)
    return 0


def _cmd_train(args) -> int:
    es = load_container(args.input)
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        sampler=args.sampler,
    )
    params = train(es, cfg, init_params(es.dim, args.hidden_dim, es.num_classes, args.seed))
    out = Path(args.out or "model.geow")
    save_checkpoint(params, out)
    print(f"wrote {out}")
    if args.test:
        report = evaluate(
            params, load_container(args.test), train_counts=es.class_counts()
        )
        report_path = out.with_suffix(".report.json")
        report_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
        print(f"top1 {report.top1_overall:.2f}% (report: {report_path})")
    return 0


def _cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate requires --config")
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if cfg.mode == "longtail":
        run_longtail(cfg)
    elif cfg.mode == "analysis":
        run_analysis(cfg)
    else:
        run_fed(cfg)
    print(f"run complete: {cfg.out_dir}")
    return 0


def _cmd_analyze(args) -> int:
    if not args.config:
        raise ConfigError("analyze requires --config")
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    run_analysis(cfg)
    print(f"analysis tables written to {cfg.out_dir}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "partition": _cmd_partition,
    "stats": _cmd_stats,
    "aggregate": _cmd_aggregate,
    "augment": _cmd_augment,
    "match": _cmd_match,
    "train": _cmd_train,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except GgcalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
