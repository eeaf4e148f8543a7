#!/usr/bin/env python3
"""End-to-end fixture experiment: probe the fixture network, rank channels
by PE, then compare H-25 / L-25 / F subsets on a synthetic blur QA set.

Reproduces, at desk scale, the finding that high-PE channel subsets
correlate better with degradation severity than low-PE subsets.
"""
import argparse
import tempfile
from pathlib import Path

from percep import model_io, perception, protocols, stimuli
from percep.distance import MetricConfig
from percep.inference import pin_blas
from percep.synthdata import build_blur_qa_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--workdir", help="keep artifacts here (default: temp)")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    pin_blas()

    ctx = tempfile.TemporaryDirectory() if args.workdir is None else None
    workdir = Path(ctx.name if ctx else args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    manifest_path, container_path = model_io.gen_fixture(args.seed,
                                                         workdir / "model")
    model = model_io.load_model(manifest_path, container_path)
    grid = stimuli.StimulusGrid(size=model.input_spec.height)
    result = perception.probe_channels(model, "probe", grid,
                                       threads=args.threads)

    print(f"channel scores (tap 'probe', seed {args.seed}):")
    print(f"{'ch':>3} {'mu1':>12} {'mu2':>12} {'pe':>12} rank")
    rank_of = {ch: r + 1 for r, ch in enumerate(result.ranking())}
    for s in result.scores:
        print(f"{s.channel:>3} {s.mu1:>12.4e} {s.mu2:>12.4e} {s.pe:>12.4e} "
              f"{rank_of[s.channel]:>4}")

    pe = result.pe_values()
    subsets = {
        "H-25": perception.select_subset(pe, "H", 25, layer="probe"),
        "L-25": perception.select_subset(pe, "L", 25, layer="probe"),
        "F": perception.full_subset(len(pe), layer="probe"),
    }
    data_manifest = build_blur_qa_dataset(workdir / "qa")
    records = protocols.load_manifest(data_manifest, "qa")
    print(f"\nQA over {len(records)} blur records (DMOS proxy = sigma):")
    for name, subset in subsets.items():
        cfg = MetricConfig(model=model, tap="probe", subset=subset)
        stats = protocols.qa_test(cfg, records, threads=args.threads)
        print(f"  {name:<5} channels={list(subset.indices)}")
        print(f"        srocc={stats['srocc']:+.4f} lcc={stats['lcc']:+.4f} "
              f"rmse={stats['rmse']:.4f}")
    if ctx:
        ctx.cleanup()


if __name__ == "__main__":
    main()
