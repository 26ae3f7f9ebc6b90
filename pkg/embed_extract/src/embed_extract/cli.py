"""Command line for the extractor: extract images, verify stores."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import ExtractError, ExtractJob, extract, read_manifest
from .verify import verify_store


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Extract image embeddings into an EMBD store.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run a backbone over an image manifest")
    p.add_argument("--manifest", required=True,
                   help="item_id<TAB>image_path lines")
    p.add_argument("--backbone", choices=("inception_v3", "vit"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--errors", default="",
                   help="where to write the failure manifest (JSON)")

    p = sub.add_parser("verify", help="validate a store against a manifest")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", default="")
    p.add_argument("--backbone", choices=("inception_v3", "vit"), default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            manifest = read_manifest(args.manifest)
            job = ExtractJob(manifest=manifest, backbone=args.backbone,
                             out_path=args.out, batch_size=args.batch_size)
            result = extract(job)
            if args.errors:
                with open(args.errors, "w", encoding="utf-8") as fh:
                    json.dump(result.failures, fh, indent=1)
            print(f"wrote {result.extracted} vectors (dim {result.dim}) "
                  f"to {result.out_path}"
                  + ("" if result.pretrained else " [random-init fallback]")
                  + (f"; {len(result.failures)} skipped" if result.failures else ""))
            return 0
        manifest = read_manifest(args.manifest) if args.manifest else None
        report = verify_store(args.store, manifest, args.backbone)
        for issue in report.issues:
            print(f"FAIL {issue}", file=sys.stderr)
        print(f"{'ok' if report.ok else 'FAILED'}: dim={report.dim} "
              f"count={report.count} issues={len(report.issues)}")
        return 0 if report.ok else 1
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
