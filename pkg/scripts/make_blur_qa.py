#!/usr/bin/env python3
"""Build a synthetic Gaussian-blur QA dataset (PGM images + CSV manifest).

The manifest uses the qa schema (ref, dist, dmos) with blur sigma standing
in for DMOS. Suitable inputs for `percep evaluate --protocol qa`.
"""
import argparse

from percep.synthdata import (DEFAULT_BLUR_LEVELS, DEFAULT_TEXTURE_SPECS,
                              EXTENDED_TEXTURE_SPECS, build_blur_qa_dataset)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--size", type=int, default=96, help="image size (px)")
    parser.add_argument("--refs", type=int, choices=(3, 5), default=3,
                        help="number of reference textures")
    parser.add_argument("--levels", type=float, nargs="+",
                        default=list(DEFAULT_BLUR_LEVELS),
                        help="blur sigmas, strictly increasing")
    args = parser.parse_args()
    specs = DEFAULT_TEXTURE_SPECS if args.refs == 3 else EXTENDED_TEXTURE_SPECS
    manifest = build_blur_qa_dataset(args.out, size=args.size,
                                     texture_specs=specs,
                                     blur_levels=tuple(args.levels))
    print(f"wrote {args.refs * (1 + len(args.levels))} images and {manifest}")


if __name__ == "__main__":
    main()
