"""Command-line entry points: percep-export and percep-convert."""
import argparse
import sys

from .datasets import DatasetConversionError, convert_dataset
from .export import ExportError, export_model
from .parity import ParityError


def main_export(argv=None):
    parser = argparse.ArgumentParser(
        description="Export a torchvision network into percep formats "
                    "and verify activation parity."
    )
    parser.add_argument("--model", required=True,
                        help="vgg16, alexnet, squeezenet1_1, shufflenet_v2_x1_0")
    parser.add_argument("--taps", required=True,
                        help="comma-separated tap names (e.g. relu1_2,relu2_2)")
    parser.add_argument("--out", required=True)
    parser.add_argument("--input-size", type=int, default=224)
    parser.add_argument("--random-weights", action="store_true",
                        help="skip the pretrained download (parity check only)")
    args = parser.parse_args(argv)
    taps = [t for t in args.taps.split(",") if t]
    try:
        report, manifest, container = export_model(
            args.model, taps, args.out, pretrained=not args.random_weights,
            input_size=args.input_size,
        )
    except (ExportError, ParityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {report.network}: {report.layer_count} layers, "
          f"taps {sorted(report.tap_deviations)}")
    print(f"max activation deviation {report.max_deviation:.3e} "
          f"-> {manifest}, {container}")
    return 0


def main_convert(argv=None):
    parser = argparse.ArgumentParser(
        description="Convert an indexed local dataset to percep manifests."
    )
    parser.add_argument("--src", required=True, help="dataset root (index.csv)")
    parser.add_argument("--kind", required=True, choices=("qa", "jnd", "2afc"))
    parser.add_argument("--out", required=True)
    parser.add_argument("--limit", type=int, help="subsample to N records")
    args = parser.parse_args(argv)
    try:
        manifest = convert_dataset(args.src, args.kind, args.out,
                                   limit=args.limit)
    except (DatasetConversionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main_export())
