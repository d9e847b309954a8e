"""Command line: encode a raw corpus into manifest + binary containers."""

import argparse
import logging
import sys

from .corpus import CorpusError
from .encoders import DEFAULTS, REGISTRY, EncoderUnavailable
from .export import ExportJob, export


def build_parser():
    parser = argparse.ArgumentParser(
        prog="embedding-exporter",
        description="Run per-modality encoders over an audio/transcript/image "
                    "corpus and write the embedding-corpus files")
    parser.add_argument("--corpus", required=True, help="corpus dir with metadata.csv")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--modalities", nargs="+", default=list(DEFAULTS),
                        choices=list(DEFAULTS), help="modalities to export")
    for modality, choices in REGISTRY.items():
        parser.add_argument(f"--{modality}-encoder", default=None,
                            choices=sorted(choices),
                            help=f"encoder for {modality} (default {DEFAULTS[modality]})")
    parser.add_argument("--pooling", choices=["mean", "first"], default="mean",
                        help="pooling over token/frame outputs of pretrained encoders")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    encoders = {m: getattr(args, f"{m}_encoder") for m in REGISTRY
                if getattr(args, f"{m}_encoder")}
    job = ExportJob(corpus_dir=args.corpus, out_dir=args.out,
                    modalities=args.modalities, encoders=encoders,
                    pooling=args.pooling)
    try:
        manifest, skipped = export(job)
    except (CorpusError, EncoderUnavailable, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 2
    else:
        print(f"wrote {manifest}" + (f" ({len(skipped)} samples skipped)" if skipped else ""))
        code = 0
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
