"""CLI: ``vfm-extract extract ...`` and ``vfm-extract verify ...``.

Exit codes: 0 success, 2 bad invocation, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import VfmError
from .extract import ExtractJob, extract
from .geob import verify_container
from .models import MODELS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vfm-extract")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("extract", help="embed a dataset and write a GEOB1 container")
    p.add_argument("--model", required=True, choices=sorted(MODELS))
    p.add_argument("--dataset", required=True, help="folder:<path>, cifar10, cifar100")
    p.add_argument("--split", default="train", choices=("train", "test"))
    p.add_argument("--domain", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="validate a GEOB1 container and print a report")
    p.add_argument("--path", required=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "extract":
            try:
                job = ExtractJob(
                    model_id=args.model,
                    dataset_id=args.dataset,
                    split=args.split,
                    domain=args.domain,
                    batch_size=args.batch_size,
                    out_path=args.out,
                )
            except ValueError as e:
                print(f"bad invocation: {e}", file=sys.stderr)
                return 2
            summary = extract(job)
            print(json.dumps(summary, sort_keys=True))
        else:
            report = verify_container(args.path)
            print(json.dumps(report, sort_keys=True))
            print(
                f"OK: n={report['n']} P={report['p']} "
                f"C={report['c']} D={report['d']}"
            )
    except VfmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
