"""Command-line entry point.

Subcommands: gen-fixture, dump-stimuli, probe, select, distance, evaluate,
forward. Configuration precedence is CLI flags > --config JSON > defaults.
Exit codes: 0 success, 1 internal numeric failure, 2 user/config error.
"""
import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import images, model_io, perception, protocols, stimuli
from .distance import MetricConfig, baseline_l2, baseline_ssim, perceptual_distance
from .errors import NumericError, PercepError
from .inference import forward, pin_blas
from .parallel import resolve_threads


@dataclass
class RunConfig:
    """Resolved per-invocation settings shared by the model-driven commands."""

    model_manifest: str = None
    container: str = None
    tap: str = None
    ppd: float = stimuli.DEFAULT_PPD
    contrast: float = stimuli.DEFAULT_CONTRAST
    freq_start: float = stimuli.DEFAULT_FREQ_RANGE[0]
    freq_stop: float = stimuli.DEFAULT_FREQ_RANGE[1]
    freq_step: float = stimuli.DEFAULT_FREQ_RANGE[2]
    ori_step: float = stimuli.DEFAULT_ORIENTATION_STEP
    size: int = None
    weighting: str = "uniform"
    threads: int = None
    seed: int = 0


def _load_config_file(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PercepError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise PercepError(f"config file {path} must hold a JSON object")
    return doc


def _resolve_config(args):
    """Merge CLI flags over config-file values over RunConfig defaults."""
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig()
    for name in vars(cfg):
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(cfg, name, flag)
        elif name in file_values:
            setattr(cfg, name, file_values[name])
    cfg.threads = resolve_threads(cfg.threads)
    return cfg


def _require(value, message):
    if value is None:
        raise PercepError(message)
    return value


def _load_model(cfg):
    _require(cfg.model_manifest, "--model is required")
    _require(cfg.container, "--weights is required")
    return model_io.load_model(cfg.model_manifest, cfg.container)


def _stimulus_grid(cfg, model=None):
    size = cfg.size
    if size is None and model is not None:
        size = min(model.input_spec.height, model.input_spec.width)
    if size is None:
        size = 224
    return stimuli.StimulusGrid(
        frequencies=stimuli.frequency_sweep(cfg.freq_start, cfg.freq_stop,
                                            cfg.freq_step),
        orientations=stimuli.orientation_sweep(cfg.ori_step),
        contrast=cfg.contrast,
        size=size,
        geometry=stimuli.ViewingGeometry(cfg.ppd),
    )


def _subset_for(args, cfg, model):
    """Subset from --subset JSON, from --mode/--percent (+ scores or inline
    probe), or the full layer by default."""
    tap = _require(cfg.tap, "--tap is required")
    if getattr(args, "subset", None):
        return perception.read_subset(args.subset)
    mode = getattr(args, "mode", None)
    if mode in ("H", "L"):
        percent = _require(getattr(args, "percent", None),
                           "--percent is required with --mode")
        if getattr(args, "scores", None):
            scores = perception.read_scores_csv(args.scores)
            pe = [s.pe for s in sorted(scores, key=lambda s: s.channel)]
        else:
            result = perception.probe_channels(model, tap, _stimulus_grid(cfg, model),
                                               threads=cfg.threads)
            pe = result.pe_values()
        return perception.select_subset(
            pe, mode, percent, layer=tap,
            weights_from_pe=(cfg.weighting == "pe-proportional"),
        )
    return perception.full_subset(model.tap_channels(tap), layer=tap)


def _read_image(path):
    try:
        return images.decode_image(path)
    except FileNotFoundError as exc:
        raise PercepError(f"cannot read image {path!r}: {exc}") from exc


# --- subcommands ---------------------------------------------------------------

def _cmd_gen_fixture(args):
    manifest, container = model_io.gen_fixture(args.seed, args.out)
    print(f"wrote {manifest} and {container}")
    return 0


def _cmd_dump_stimuli(args):
    cfg = _resolve_config(args)
    grid = _stimulus_grid(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in grid.frequencies:
        images.encode_pgm(out / f"freq_{f:06.2f}cpd.pgm",
                          stimuli.radial_grating(f, grid)[0])
    f_ori = perception.orientation_probe_frequency(perception.MANNOS_SAKRISON,
                                                   grid)
    for t in grid.orientations:
        images.encode_pgm(out / f"ori_{t:05.1f}deg.pgm",
                          stimuli.oriented_grating(t, f_ori, grid)[0])
    n = len(grid.frequencies) + len(grid.orientations)
    print(f"wrote {n} stimuli to {out}")
    return 0


def _cmd_probe(args):
    pin_blas()
    cfg = _resolve_config(args)
    model = _load_model(cfg)
    tap = _require(cfg.tap, "--tap is required")
    result = perception.probe_channels(model, tap, _stimulus_grid(cfg, model),
                                       threads=cfg.threads)
    perception.write_scores_csv(args.out, result)
    curves_out = args.curves_out or str(args.out) + ".curves.csv"
    perception.write_curves_csv(curves_out, result)
    print(f"probed {len(result.scores)} channels of tap {tap!r} -> {args.out}")
    return 0


def _cmd_select(args):
    scores = perception.read_scores_csv(args.scores)
    scores = sorted(scores, key=lambda s: s.channel)
    layer = scores[0].layer
    subset = perception.select_subset(
        [s.pe for s in scores], args.mode, args.percent, layer=layer,
        weights_from_pe=args.pe_weights,
    )
    perception.write_subset(args.out, subset)
    print(f"{subset.provenance}: {len(subset)} of {len(scores)} channels "
          f"-> {args.out}")
    return 0


def _cmd_distance(args):
    pin_blas()
    cfg = _resolve_config(args)
    if args.baseline:
        if args.pairs:
            raise PercepError("--baseline does not support --pairs mode")
        if len(args.images) != 2:
            raise PercepError("distance needs exactly two image paths")
        a, b = (_read_image(p) for p in args.images)
        fn = baseline_l2 if args.baseline == "l2" else baseline_ssim
        print(repr(fn(a, b)))
        return 0
    model = _load_model(cfg)
    subset = _subset_for(args, cfg, model)
    metric = MetricConfig(model=model, tap=cfg.tap, subset=subset,
                          weighting=cfg.weighting)
    if args.pairs:
        base = Path(args.pairs).parent
        rows = []
        with open(args.pairs, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or not {"img1", "img2"} <= set(reader.fieldnames):
                raise PercepError(f"{args.pairs}: pair manifest needs img1,img2")
            rows = [(str(base / r["img1"]), str(base / r["img2"])) for r in reader]
        if not rows:
            raise PercepError(f"{args.pairs}: empty pair manifest")
        dists = protocols.record_distances(metric, rows, threads=cfg.threads)
        out = _require(args.out, "--out is required with --pairs")
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["img1", "img2", "distance"])
            for (p1, p2), d in zip(rows, dists):
                writer.writerow([p1, p2, repr(float(d))])
        print(f"wrote {len(rows)} distances to {out}")
        return 0
    if len(args.images) != 2:
        raise PercepError("distance needs exactly two image paths")
    img1, img2 = (_read_image(p) for p in args.images)
    print(repr(perceptual_distance(metric, img1, img2)))
    return 0


def _cmd_evaluate(args):
    pin_blas()
    cfg = _resolve_config(args)
    model = _load_model(cfg)
    subset = _subset_for(args, cfg, model)
    metric = MetricConfig(model=model, tap=cfg.tap, subset=subset,
                          weighting=cfg.weighting)
    records = protocols.load_manifest(args.records, args.protocol)
    if args.protocol == "qa":
        statistics = protocols.qa_test(metric, records, threads=cfg.threads)
    elif args.protocol == "jnd":
        statistics = {"jnd_score": protocols.jnd_score(metric, records,
                                                       threads=cfg.threads)}
    else:
        statistics = {"afc_score": protocols.afc_score(metric, records,
                                                       threads=cfg.threads)}
    doc = {
        "protocol": args.protocol,
        "subset": {
            "layer": subset.layer,
            "provenance": subset.provenance,
            "indices": list(subset.indices),
            "weighting": cfg.weighting,
        },
        "statistics": statistics,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                                  encoding="utf-8")
    summary = " ".join(f"{k}={v}" for k, v in sorted(statistics.items()))
    print(f"{args.protocol} {subset.provenance}: {summary}")
    return 0


def _cmd_forward(args):
    pin_blas()
    cfg = _resolve_config(args)
    model = _load_model(cfg)
    taps = [t for t in args.taps.split(",") if t]
    if not taps:
        raise PercepError("--taps must name at least one tap")
    image = _read_image(args.image)
    acts = forward(model, image, taps)
    model_io.write_container(args.out, {name: acts[name] for name in taps})
    shapes = ", ".join(f"{t}={acts[t].shape}" for t in taps)
    print(f"wrote activations {shapes} to {args.out}")
    return 0


# --- parser --------------------------------------------------------------------

def _add_model_args(sub):
    sub.add_argument("--model", dest="model_manifest", help="network manifest JSON")
    sub.add_argument("--weights", dest="container", help="tensor container file")
    sub.add_argument("--tap", help="tap name to probe/measure")


def _add_grid_args(sub):
    sub.add_argument("--ppd", type=float, help="pixels per degree")
    sub.add_argument("--contrast", type=float, help="grating contrast in (0,1]")
    sub.add_argument("--freq-start", type=float, dest="freq_start")
    sub.add_argument("--freq-stop", type=float, dest="freq_stop")
    sub.add_argument("--freq-step", type=float, dest="freq_step")
    sub.add_argument("--ori-step", type=float, dest="ori_step")
    sub.add_argument("--size", type=int, help="stimulus image size (pixels)")


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file (flags take precedence)")
    sub.add_argument("--threads", type=int,
                     help="worker threads (default: PERCEP_THREADS or cores)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="percep",
        description="Grating-probe channel analysis and subset perceptual metrics",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-fixture", help="write the deterministic fixture network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_fixture)

    p = subs.add_parser("dump-stimuli", help="write grating stimuli as PGM")
    p.add_argument("--out", required=True)
    _add_grid_args(p)
    _add_common(p)
    p.set_defaults(fn=_cmd_dump_stimuli)

    p = subs.add_parser("probe", help="score every channel of one tap")
    _add_model_args(p)
    _add_grid_args(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="score CSV output path")
    p.add_argument("--curves-out", dest="curves_out",
                   help="raw response curve CSV (default: <out>.curves.csv)")
    p.set_defaults(fn=_cmd_probe)

    p = subs.add_parser("select", help="build an H-x / L-x subset from scores")
    p.add_argument("--scores", required=True, help="score CSV from probe")
    p.add_argument("--mode", choices=("H", "L"), required=True)
    p.add_argument("--percent", type=float, required=True)
    p.add_argument("--pe-weights", action="store_true", dest="pe_weights",
                   help="store PE values as subset weights")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_select)

    p = subs.add_parser("distance", help="perceptual distance between images")
    _add_model_args(p)
    _add_grid_args(p)
    _add_common(p)
    p.add_argument("--subset", help="subset JSON from select")
    p.add_argument("--mode", choices=("H", "L"), help="inline subset mode")
    p.add_argument("--percent", type=float, help="inline subset percent")
    p.add_argument("--scores", help="score CSV for inline subset selection")
    p.add_argument("--weighting", choices=("uniform", "pe-proportional"))
    p.add_argument("--baseline", choices=("l2", "ssim"),
                   help="pixel-space baseline instead of the model metric")
    p.add_argument("--pairs", help="CSV of img1,img2 pairs for batch mode")
    p.add_argument("--out", help="output CSV for batch mode")
    p.add_argument("images", nargs="*", help="two image paths")
    p.set_defaults(fn=_cmd_distance)

    p = subs.add_parser("evaluate", help="run a qa/jnd/2afc protocol")
    _add_model_args(p)
    _add_grid_args(p)
    _add_common(p)
    p.add_argument("--protocol", choices=("qa", "jnd", "2afc"), required=True)
    p.add_argument("--records", required=True, help="dataset manifest CSV")
    p.add_argument("--subset", help="subset JSON from select")
    p.add_argument("--mode", choices=("H", "L"), help="inline subset mode")
    p.add_argument("--percent", type=float, help="inline subset percent")
    p.add_argument("--scores", help="score CSV for inline subset selection")
    p.add_argument("--weighting", choices=("uniform", "pe-proportional"))
    p.add_argument("--out", help="result JSON path")
    p.set_defaults(fn=_cmd_evaluate)

    p = subs.add_parser("forward", help="dump tap activations for one image")
    _add_model_args(p)
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--taps", required=True, help="comma-separated tap names")
    p.add_argument("--out", required=True, help="activation container path")
    p.set_defaults(fn=_cmd_forward)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (PercepError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
