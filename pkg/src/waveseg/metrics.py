"""Segmentation quality metrics: mean IoU and boundary F1."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .exceptions import DataError


def _validate(pred, true, num_classes):
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise DataError(f"mask shapes differ: {pred.shape} vs {true.shape}")
    for name, mask in (("pred", pred), ("true", true)):
        if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
            raise DataError(
                f"{name} mask ids out of range [0, {num_classes}): "
                f"[{mask.min()}, {mask.max()}]"
            )
    return pred, true


def compute_miou(pred, true, num_classes):
    """Per-class IoU and their mean; classes with empty union are excluded.

    Returns:
        (ious, miou): `ious` has one entry per class, NaN where both masks
        are empty for that class; `miou` averages the finite entries.
    """
    pred, true = _validate(pred, true, num_classes)
    ious = np.full(num_classes, np.nan)
    for k in range(num_classes):
        p = pred == k
        t = true == k
        union = np.logical_or(p, t).sum()
        if union == 0:
            continue
        ious[k] = np.logical_and(p, t).sum() / union
    finite = ious[np.isfinite(ious)]
    miou = float(finite.mean()) if finite.size else 0.0
    return ious, miou


def boundary_pixels(mask):
    """Pixels whose class differs from at least one 4-neighbor."""
    mask = np.asarray(mask)
    boundary = np.zeros(mask.shape, dtype=bool)
    boundary[:-1, :] |= mask[:-1, :] != mask[1:, :]
    boundary[1:, :] |= mask[1:, :] != mask[:-1, :]
    boundary[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    boundary[:, 1:] |= mask[:, 1:] != mask[:, :-1]
    return boundary


def compute_boundary_f1(pred, true, radius):
    """Per-class boundary F1 matched within a Chebyshev radius, averaged.

    For each class present in either mask, boundary pixels are matched when
    the other mask has a boundary pixel of the same class within `radius`
    (Chebyshev).  Classes without boundary pixels in both masks are skipped.
    """
    if radius < 1:
        raise DataError(f"radius must be >= 1, got {radius}")
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise DataError(f"mask shapes differ: {pred.shape} vs {true.shape}")
    size = 2 * radius + 1
    scores = []
    for k in np.union1d(np.unique(pred), np.unique(true)):
        bp = boundary_pixels(pred == k) & (pred == k)
        bt = boundary_pixels(true == k) & (true == k)
        np_, nt = bp.sum(), bt.sum()
        if np_ == 0 and nt == 0:
            continue
        if np_ == 0 or nt == 0:
            scores.append(0.0)
            continue
        bt_wide = maximum_filter(bt.astype(np.uint8), size=size).astype(bool)
        bp_wide = maximum_filter(bp.astype(np.uint8), size=size).astype(bool)
        precision = (bp & bt_wide).sum() / np_
        recall = (bt & bp_wide).sum() / nt
        if precision + recall == 0:
            scores.append(0.0)
        else:
            scores.append(2.0 * precision * recall / (precision + recall))
    return float(np.mean(scores)) if scores else 1.0


@dataclass
class EvalReport:
    per_class_iou: np.ndarray
    miou: float
    boundary_f1: float
    boundary_radius: int
    loss_curve: list = field(default_factory=list)
    step_times: list = field(default_factory=list)

    def table(self):
        lines = ["metric            value", "-" * 28]
        lines.append(f"mIoU              {self.miou:.4f}")
        lines.append(f"boundary F1 (r={self.boundary_radius}) {self.boundary_f1:.4f}")
        for k, iou in enumerate(self.per_class_iou):
            shown = "n/a" if not np.isfinite(iou) else f"{iou:.4f}"
            lines.append(f"IoU class {k}       {shown}")
        if self.step_times:
            lines.append(f"mean step time    {np.mean(self.step_times) * 1e3:.1f} ms")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["miou", f"{self.miou:.6f}"])
            writer.writerow(["boundary_f1", f"{self.boundary_f1:.6f}"])
            writer.writerow(["boundary_radius", self.boundary_radius])
            for k, iou in enumerate(self.per_class_iou):
                writer.writerow([f"iou_class_{k}", "" if not np.isfinite(iou) else f"{iou:.6f}"])
