"""Training, evaluation, and ablation drivers."""

import csv
import os
import time
import zlib

import numpy as np

from . import data, ops
from .config import int_list
from .exceptions import ConfigurationError
from .metrics import EvalReport, compute_boundary_f1, compute_miou
from .model import DecoderConfig, WaveSegModel
from .optim import AdamW
from .rng import generator
from .tensor import Tape, Tensor, default_dtype, no_grad, set_default_dtype


def set_precision(name):
    if name == "f32":
        set_default_dtype(np.float32)
    elif name == "f64":
        set_default_dtype(np.float64)
    else:
        raise ConfigurationError(f"unknown precision {name!r}")


def decoder_config(cfg):
    model = cfg["model"]
    return DecoderConfig(
        c_dec=model["c_dec"],
        num_classes=cfg["corpus"]["num_classes"],
        encoder_channels=tuple(int_list(model["encoder_channels"])),
        state_size=model["state_size"],
        directions=model["directions"],
        ffn_expansion=model["ffn_expansion"],
        per_band_vssm=model["per_band_vssm"],
        scan_mode=model["scan_mode"],
        use_hpg=model["toggle_hpg"] == "on",
        sda_mode={"on": "sda", "off": "off", "conv": "conv"}[model["toggle_sda"]],
        wm_mode=model["wm"],
    )


def build_model(cfg, seed):
    return WaveSegModel(decoder_config(cfg), seed=seed)


def ensure_corpus(cfg, corpus_dir):
    """Generate the corpus when it is absent; reuse it otherwise."""
    corpus = cfg["corpus"]
    meta_path = os.path.join(corpus_dir, "meta.txt")
    if not os.path.exists(meta_path):
        data.gen_corpus(
            seed=cfg["train"]["seed"],
            n_train=corpus["n_train"],
            n_val=corpus["n_val"],
            size=corpus["size"],
            num_classes=corpus["num_classes"],
            out_dir=corpus_dir,
        )
    return corpus_dir


def predict_masks(model, images, batch_size=8):
    """Argmax class predictions for a stack of images."""
    preds = []
    with no_grad():
        for lo in range(0, len(images), batch_size):
            batch = Tensor(images[lo : lo + batch_size].astype(default_dtype()))
            logits = model(batch)
            preds.append(np.argmax(logits.data, axis=1))
    return np.concatenate(preds)


def evaluate_model(model, images, masks, num_classes, radius, batch_size=8):
    preds = predict_masks(model, images, batch_size)
    inter = np.zeros(num_classes)
    union = np.zeros(num_classes)
    bf1 = []
    for pred, true in zip(preds, masks):
        for k in range(num_classes):
            p = pred == k
            t = true == k
            inter[k] += np.logical_and(p, t).sum()
            union[k] += np.logical_or(p, t).sum()
        bf1.append(compute_boundary_f1(pred, true, radius))
    ious = np.where(union > 0, inter / np.maximum(union, 1), np.nan)
    finite = ious[np.isfinite(ious)]
    return EvalReport(
        per_class_iou=ious,
        miou=float(finite.mean()) if finite.size else 0.0,
        boundary_f1=float(np.mean(bf1)),
        boundary_radius=radius,
    )


def run_training(cfg, out_dir, corpus_dir=None, log=None, save=True):
    """Train the configured model; returns a result dict with the report."""
    os.makedirs(out_dir, exist_ok=True)
    set_precision(cfg["train"]["precision"])
    corpus_dir = corpus_dir or os.path.join(out_dir, "corpus")
    ensure_corpus(cfg, corpus_dir)
    dtype = default_dtype()
    train_images, train_masks = data.load_split(corpus_dir, "train", dtype)
    val_images, val_masks = data.load_split(corpus_dir, "val", dtype)

    train_cfg = cfg["train"]
    seed = train_cfg["seed"]
    model = build_model(cfg, seed)
    optimizer = AdamW(
        model.named_parameters(),
        lr=train_cfg["lr"],
        weight_decay=train_cfg["weight_decay"],
        warmup_steps=train_cfg["warmup_steps"],
    )
    batch_rng = generator(seed, "batches")
    num_classes = cfg["corpus"]["num_classes"]
    radius = cfg["eval"]["boundary_radius"]
    eval_every = train_cfg["eval_every"]
    steps = train_cfg["steps"]
    batch_size = train_cfg["batch_size"]

    loss_curve = []
    step_times = []
    evals = []
    for step in range(1, steps + 1):
        idx = batch_rng.integers(0, len(train_images), size=batch_size)
        images = Tensor(train_images[idx])
        labels = train_masks[idx]
        started = time.perf_counter()
        with Tape() as tape:
            logits = model(images)
            loss = ops.cross_entropy_logits(logits, labels)
            tape.backward(loss)
        optimizer.step()
        optimizer.zero_grad()
        step_times.append(time.perf_counter() - started)
        loss_curve.append(float(loss.data))
        if eval_every and (step % eval_every == 0 or step == steps):
            report = evaluate_model(
                model, val_images, val_masks, num_classes, radius,
                cfg["eval"]["batch_size"],
            )
            evals.append((step, report.miou, report.boundary_f1))
            if log:
                log(f"step {step:5d}  loss {loss_curve[-1]:.4f}  "
                    f"val mIoU {report.miou:.4f}  boundary F1 {report.boundary_f1:.4f}")
        elif log and step % 100 == 0:
            log(f"step {step:5d}  loss {loss_curve[-1]:.4f}")

    final_report = evaluate_model(
        model, val_images, val_masks, num_classes, radius, cfg["eval"]["batch_size"]
    )
    final_report.loss_curve = loss_curve
    final_report.step_times = step_times
    if not evals or evals[-1][0] != steps:
        evals.append((steps, final_report.miou, final_report.boundary_f1))

    result = {
        "model": model,
        "report": final_report,
        "final_loss": loss_curve[-1] if loss_curve else float("nan"),
        "best_miou": max(m for _, m, _ in evals),
        "evals": evals,
        "corpus_dir": corpus_dir,
    }
    if save:
        ckpt = os.path.join(out_dir, "model.wseg")
        model.save(ckpt)
        result["checkpoint"] = ckpt
        with open(os.path.join(out_dir, "loss_curve.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss"])
            for i, value in enumerate(loss_curve, start=1):
                writer.writerow([i, f"{value:.6f}"])
        with open(os.path.join(out_dir, "val_metrics.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "miou", "boundary_f1"])
            for step, miou, bf1 in evals:
                writer.writerow([step, f"{miou:.6f}", f"{bf1:.6f}"])
        final_report.write_csv(os.path.join(out_dir, "report.csv"))
    return result


def _weight_checksums(model):
    return {name: zlib.crc32(p.data.astype("<f8").tobytes())
            for name, p in model.named_parameters().items()}


def check_arm_inits(models):
    """Fresh per-arm init: shared names must agree bitwise, extras must not.

    Returns the dict of per-arm weight checksums after asserting that any
    two arms agree exactly on every parameter name they share.
    """
    sums = {arm: _weight_checksums(model) for arm, model in models.items()}
    arms = list(sums)
    for i, a in enumerate(arms):
        for b in arms[i + 1:]:
            shared = set(sums[a]) & set(sums[b])
            for name in shared:
                if sums[a][name] != sums[b][name]:
                    raise AssertionError(
                        f"arm {a} and {b} disagree on shared parameter {name}"
                    )
    return sums


ABLATION_ARMS = {
    "full": {"toggle_hpg": "on", "toggle_sda": "on"},
    "no_hpg": {"toggle_hpg": "off", "toggle_sda": "on"},
    "conv_sda": {"toggle_hpg": "on", "toggle_sda": "conv"},
}


def run_ablation(cfg, out_dir, corpus_dir=None, log=None):
    """Tables-style ablation at toy scale: HPG on/off and SDA vs conv."""
    os.makedirs(out_dir, exist_ok=True)
    seeds = int_list(cfg["ablate"]["seeds"])
    base_corpus = corpus_dir or os.path.join(out_dir, "corpus")
    ensure_corpus(cfg, base_corpus)

    rows = []
    for seed in seeds:
        arm_models = {}
        for arm, toggles in ABLATION_ARMS.items():
            arm_cfg = {section: dict(values) for section, values in cfg.items()}
            arm_cfg["model"].update(toggles)
            arm_cfg["train"]["seed"] = seed
            arm_cfg["train"]["steps"] = cfg["ablate"]["steps"]
            arm_cfg["train"]["eval_every"] = cfg["ablate"]["eval_every"]
            arm_models[arm] = build_model(arm_cfg, seed)
            result = run_training(
                arm_cfg, os.path.join(out_dir, f"{arm}_seed{seed}"),
                corpus_dir=base_corpus, log=None, save=False,
            )
            rows.append({
                "arm": arm,
                "seed": seed,
                "miou": result["report"].miou,
                "boundary_f1": result["report"].boundary_f1,
                "final_loss": result["final_loss"],
                "params": result["model"].param_count(),
            })
            if log:
                log(f"seed {seed} arm {arm:9s}  mIoU {rows[-1]['miou']:.4f}  "
                    f"boundary F1 {rows[-1]['boundary_f1']:.4f}  "
                    f"params {rows[-1]['params']}")
        check_arm_inits(arm_models)

    def mean_over(arm, key):
        return float(np.mean([r[key] for r in rows if r["arm"] == arm]))

    summary = {
        "miou": {arm: mean_over(arm, "miou") for arm in ABLATION_ARMS},
        "boundary_f1": {arm: mean_over(arm, "boundary_f1") for arm in ABLATION_ARMS},
        "params": {arm: mean_over(arm, "params") for arm in ABLATION_ARMS},
    }
    with open(os.path.join(out_dir, "ablation.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["arm", "seed", "miou", "boundary_f1", "final_loss", "params"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return {"rows": rows, "summary": summary}


def format_ablation_table(summary):
    lines = [f"{'arm':<10}{'mIoU':>8}{'bF1':>8}{'params':>10}"]
    for arm in ABLATION_ARMS:
        lines.append(
            f"{arm:<10}{summary['miou'][arm]:>8.4f}"
            f"{summary['boundary_f1'][arm]:>8.4f}"
            f"{summary['params'][arm]:>10.0f}"
        )
    return "\n".join(lines)


def export_merged(cfg, ckpt_in, ckpt_out, seed=0):
    """Load a checkpoint, fuse every RepBlock, write the inference form."""
    model = build_model(cfg, seed)
    model.load(ckpt_in)
    model.merge_rep_blocks()
    model.save(ckpt_out, merged=True)
    return model
