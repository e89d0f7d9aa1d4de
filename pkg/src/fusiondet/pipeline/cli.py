"""``fusiondet`` command line: gen-data, simulate-beams, train, eval, report, matrix."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    pass


# ------------------------------------------------------------------ commands


def cmd_gen_data(args) -> int:
    from ..simkit import SceneSpec, generate_scene, write_dataset

    spec = SceneSpec.load(args.spec) if args.spec else SceneSpec()
    if args.seed is not None:
        spec.seed = args.seed
    if args.num_objects is not None:
        spec.num_objects = args.num_objects
    samples = [generate_scene(spec, args.offset + i, f"{args.split}_{args.offset + i:05d}") for i in range(args.scenes)]
    shortfall = sum(s.placement_shortfall for s in samples)
    write_dataset(samples, args.out, spec=spec.to_dict(), split=args.split, provenance={"generator": "simkit", "scene_seed": spec.seed, "lidar_preset": "full"})
    print(f"wrote {len(samples)} scenes to {args.out} (placement shortfall {shortfall})")
    return EXIT_OK


def cmd_simulate_beams(args) -> int:
    from ..simkit import PRESETS, read_dataset, read_manifest, reduce_beams, write_dataset

    manifest = read_manifest(args.data)
    samples = read_dataset(args.data)
    bands = PRESETS[args.preset]
    before = sum(len(s.lidar) for s in samples)
    for s in samples:
        s.lidar = reduce_beams(s.lidar, bands)
        s.provenance = {**s.provenance, "lidar_preset": args.preset}
    after = sum(len(s.lidar) for s in samples)
    prov = {
        **manifest.provenance,
        "lidar_preset": args.preset,
        "source_dir": str(Path(args.data).resolve()),
        "source_files": [f["sha256"] for f in manifest.files],
    }
    write_dataset(samples, args.out, spec=manifest.spec, split=manifest.split, provenance=prov)
    print(f"{args.preset}: kept {after} of {before} LiDAR points; wrote {args.out}")
    return EXIT_OK


def _load_config(args):
    from .config import RunConfig

    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig.from_ini("")
    train = {}
    if getattr(args, "steps", None) is not None:
        train["steps"] = args.steps
    if getattr(args, "seed", None) is not None:
        train["seed"] = args.seed
    model = {}
    if getattr(args, "modalities", None):
        model["modalities"] = tuple(m.strip() for m in args.modalities.split(",") if m.strip())
    return cfg.replace(train=train, model=model)


def _class_names(data_dir) -> List[str]:
    from ..simkit import SceneSpec, read_manifest

    spec = read_manifest(data_dir).spec
    return SceneSpec.from_dict(spec).class_names if spec else []


def cmd_train(args) -> int:
    from .train import load_samples, train

    cfg = _load_config(args)
    data = args.data or cfg.data.train_dir
    if not data:
        raise CliError("no training data: pass --data or set [data] train_dir")
    samples = load_samples(data, cfg.data.lidar_preset)
    val_dir = args.val or cfg.data.val_dir
    val = load_samples(val_dir, cfg.data.lidar_preset) if val_dir else None
    res = train(cfg, samples, out_dir=args.out, resume_from=args.resume, val_samples=val, class_names=_class_names(data))
    print(f"trained {len(res.log.steps)} steps in {res.seconds:.1f}s; final loss {res.log.totals()[-1]:.4f}; checkpoint {res.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from ..dethead import read_dump, write_dump
    from ..evalkit import emit_report, evaluate
    from .train import TrainLog, load_model, load_samples, run_inference

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _class_names(args.data)
    if args.dets:
        samples = load_samples(args.data)
        dump = read_dump(args.dets)
    elif args.checkpoint:
        model, cfg = load_model(args.checkpoint)
        samples = load_samples(args.data, cfg.data.lidar_preset)
        dump = run_inference(model, samples, cfg)
        write_dump(dump, out / "detections.txt")
        names = names or [f"class{i}" for i in range(cfg.model.num_classes)]
    else:
        raise CliError("eval needs --dets FILE or --checkpoint FILE")
    gts = {s.scene_id: s.gt_boxes for s in samples}
    report = evaluate(dump, gts, names or [f"class{i}" for i in range(1 + max((b.class_id for v in gts.values() for b in v), default=0))])
    curve = None
    if args.log:
        tlog = TrainLog.load(args.log)
        curve = (tlog.steps, list(tlog.totals()))
    paths = emit_report(report, out, curve)
    print(f"mAP {report.mean_ap:.4f} NDS {report.nds:.4f} -> {paths['metrics']}")
    return EXIT_OK


def cmd_report(args) -> int:
    from ..evalkit import emit_report, read_metrics
    from .train import TrainLog

    report = read_metrics(args.metrics)
    curve = None
    if args.log:
        tlog = TrainLog.load(args.log)
        curve = (tlog.steps, list(tlog.totals()))
    paths = emit_report(report, args.out, curve)
    print(" ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_matrix(args) -> int:
    from .matrix import VARIANTS, run_experiment_matrix
    from .train import load_samples

    cfg = _load_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise CliError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    seeds = [int(s) for s in args.seeds.split(",")]
    train_samples = load_samples(args.train, cfg.data.lidar_preset)
    val_samples = load_samples(args.val, cfg.data.lidar_preset)
    prov = {"train_dir": str(args.train), "val_dir": str(args.val)}
    result = run_experiment_matrix(cfg, train_samples, val_samples, variants, seeds, _class_names(args.train), args.out, prov)
    sys.stdout.write(result.table())
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fusiondet", description="Query-based multi-sensor 3-D detection on synthetic scenes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=20)
    g.add_argument("--seed", type=int, default=None, help="scene-spec seed (default from spec)")
    g.add_argument("--offset", type=int, default=0, help="first per-scene seed")
    g.add_argument("--num-objects", type=int, default=None)
    g.add_argument("--split", default="train")
    g.add_argument("--spec", help="scene spec JSON file")
    g.set_defaults(func=cmd_gen_data)

    b = sub.add_parser("simulate-beams", help="derive a reduced-beam copy of a dataset")
    b.add_argument("--data", required=True)
    b.add_argument("--preset", required=True, choices=["full", "4beam", "1beam"])
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_simulate_beams)

    t = sub.add_parser("train", help="train a detector")
    t.add_argument("--config", help="INI run config")
    t.add_argument("--data", help="training dataset directory")
    t.add_argument("--val", help="validation dataset directory")
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--modalities", help="comma list from lidar,camera,radar")
    t.add_argument("--resume", help="training checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score detections against a dataset")
    e.add_argument("--dets", help="detection dump file")
    e.add_argument("--checkpoint", help="run inference with this checkpoint instead of --dets")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--log", help="train_log.txt for the training-curve plot")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="re-render plots from a metrics file")
    r.add_argument("--metrics", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--log", help="train_log.txt for the training-curve plot")
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("matrix", help="train and compare sensor combinations")
    m.add_argument("--config", help="INI run config shared by all variants")
    m.add_argument("--train", required=True)
    m.add_argument("--val", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--variants", default="L,C,L+C,C+R,L+C+R")
    m.add_argument("--seeds", default="0")
    m.add_argument("--steps", type=int)
    m.set_defaults(func=cmd_matrix)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(f"fusiondet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
