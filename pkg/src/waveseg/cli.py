"""Command-line entry point: corpus, training, eval, ablation, benchmarks."""

import os

# Pin BLAS threading before numpy loads so benchmark timings are stable.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from . import data
from .config import apply_overrides, int_list, load_config
from .exceptions import WavesegError
from .train import (
    build_model,
    evaluate_model,
    export_merged,
    format_ablation_table,
    run_ablation,
    run_training,
    set_precision,
)


def _add_common(parser):
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--toggle-hpg", choices=["on", "off"], default=None)
    parser.add_argument("--toggle-sda", choices=["on", "off", "conv"], default=None)
    parser.add_argument("--wm", choices=["wavelet", "vssm-only"], default=None)
    parser.add_argument("--precision", choices=["f32", "f64"], default=None)


def _config_from(args, extra=()):
    cfg = load_config(args.config)
    overrides = [
        ("train", "seed", args.seed),
        ("model", "toggle_hpg", args.toggle_hpg),
        ("model", "toggle_sda", args.toggle_sda),
        ("model", "wm", args.wm),
        ("train", "precision", args.precision),
    ]
    overrides.extend(extra)
    return apply_overrides(cfg, overrides)


def cmd_gen_corpus(args):
    cfg = _config_from(args)
    corpus = cfg["corpus"]
    out = data.gen_corpus(
        seed=cfg["train"]["seed"],
        n_train=corpus["n_train"],
        n_val=corpus["n_val"],
        size=corpus["size"],
        num_classes=corpus["num_classes"],
        out_dir=args.out,
    )
    print(f"corpus written to {out} "
          f"({corpus['n_train']} train / {corpus['n_val']} val, "
          f"{corpus['size']}x{corpus['size']}, {corpus['num_classes']} classes)")
    return 0


def cmd_train(args):
    cfg = _config_from(args, [("train", "steps", args.steps)])
    result = run_training(cfg, args.out, corpus_dir=args.data, log=print)
    report = result["report"]
    print()
    print(report.table())
    print(f"final loss {result['final_loss']:.4f}  best val mIoU {result['best_miou']:.4f}")
    print(f"checkpoint: {result['checkpoint']}")
    return 0


def cmd_eval(args):
    cfg = _config_from(args)
    set_precision(cfg["train"]["precision"])
    from .tensor import default_dtype

    model = build_model(cfg, cfg["train"]["seed"])
    model.load(args.ckpt)
    images, masks = data.load_split(args.data, args.split, default_dtype())
    report = evaluate_model(
        model, images, masks, cfg["corpus"]["num_classes"],
        cfg["eval"]["boundary_radius"], cfg["eval"]["batch_size"],
    )
    print(report.table())
    os.makedirs(args.out, exist_ok=True)
    report.write_csv(os.path.join(args.out, "eval.csv"))
    return 0


def cmd_ablate(args):
    cfg = _config_from(args, [("ablate", "steps", args.steps),
                              ("ablate", "seeds", args.seeds)])
    result = run_ablation(cfg, args.out, corpus_dir=args.data, log=print)
    print()
    print(format_ablation_table(result["summary"]))
    summary = result["summary"]
    print(f"\nwith-HPG boundary F1 {summary['boundary_f1']['full']:.4f} vs "
          f"without {summary['boundary_f1']['no_hpg']:.4f}")
    print(f"with-SDA mIoU {summary['miou']['full']:.4f} vs "
          f"conv replacement {summary['miou']['conv_sda']:.4f}")
    return 0


def cmd_bench_scan(args):
    cfg = _config_from(args)
    bench_cfg = cfg["bench"]
    lengths = int_list(args.lengths or bench_cfg["lengths"])
    dtype = np.float64 if cfg["train"]["precision"] == "f64" else np.float32
    rows = bench_mod.run_scan_bench(
        lengths,
        channels=bench_cfg["channels"],
        state=bench_cfg["state_size"],
        repeats=bench_cfg["repeats"],
        warmup=bench_cfg["warmup"],
        seed=cfg["train"]["seed"],
        dtype=dtype,
    )
    print(bench_mod.format_table(rows))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bench.csv")
    bench_mod.write_csv(path, rows)
    print(f"\nwritten {path}")
    return 0


def cmd_export(args):
    cfg = _config_from(args)
    set_precision(cfg["train"]["precision"])
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "model_merged.wseg")
    export_merged(cfg, args.ckpt, out_path, seed=cfg["train"]["seed"])
    print(f"merged inference checkpoint: {out_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="waveseg",
        description="Wavelet/selective-scan segmentation decoder harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the synthetic corpus")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("train", help="train on a corpus and write a checkpoint")
    _add_common(p)
    p.add_argument("--data", default=None, help="existing corpus directory")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run the HPG/SDA ablation arms")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("bench-scan", help="scan vs attention complexity benchmark")
    _add_common(p)
    p.add_argument("--lengths", default=None, help="comma-separated lengths")
    p.set_defaults(fn=cmd_bench_scan)

    p = sub.add_parser("export", help="write a merged-RepBlock inference checkpoint")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=cmd_export)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except WavesegError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
