"""Scan complexity benchmark with a quadratic attention baseline.

Times the linear-recurrence scan (parallel and sequential paths) against a
blocked single-head softmax attention over the same token counts.  Doubling
the sequence length should roughly double scan time while roughly
quadrupling attention time.
"""

import csv
import time

import numpy as np

from .rng import generator
from .ssm import _linrec


def _scan_case(length, channels, state, rng):
    a = rng.uniform(0.2, 0.95, size=(1, length, channels, state))
    v = rng.standard_normal((1, length, channels, state))
    c = rng.standard_normal((1, length, state))
    d = rng.standard_normal(channels)
    x = rng.standard_normal((1, length, channels))
    return a, v, c, d, x


def _run_scan(case, mode):
    a, v, c, d, x = case
    h = _linrec(a, v, mode)
    return (h * c[:, :, None, :]).sum(axis=3) + d * x


def quadratic_attention(q, k, v, block=2048):
    """Blocked softmax attention: O(L^2 d) work, O(block * L) memory."""
    length, dim = q.shape
    out = np.empty_like(v)
    scale = 1.0 / np.sqrt(dim)
    for lo in range(0, length, block):
        hi = min(lo + block, length)
        scores = (q[lo:hi] @ k.T) * scale
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        out[lo:hi] = scores @ v
    return out


def _time(fn, repeats, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    arr = np.asarray(samples, dtype=np.float64)
    return float(arr.mean()), float(arr.std()), float(np.median(arr))


def run_scan_bench(lengths, channels=4, state=16, repeats=5, warmup=2,
                   attention_dim=16, seed=0, dtype=np.float32,
                   kinds=("parallel", "sequential", "attention")):
    """Benchmark rows: kind, length, mean/std/median ns, ratio to previous length."""
    rng = generator(seed, "bench")
    rows = []
    for kind in kinds:
        prev = None
        for length in lengths:
            if kind == "attention":
                q = rng.standard_normal((length, attention_dim)).astype(dtype)
                k = rng.standard_normal((length, attention_dim)).astype(dtype)
                v = rng.standard_normal((length, attention_dim)).astype(dtype)
                fn = lambda q=q, k=k, v=v: quadratic_attention(q, k, v)
            else:
                case = tuple(arr.astype(dtype) for arr in
                             _scan_case(length, channels, state, rng))
                fn = lambda case=case, kind=kind: _run_scan(case, kind)
            mean, std, median = _time(fn, repeats, warmup)
            ratio = median / prev if prev else float("nan")
            prev = median
            rows.append({
                "kind": kind,
                "length": length,
                "mean_ns": mean,
                "std_ns": std,
                "median_ns": median,
                "ratio": ratio,
            })
    return rows


def format_table(rows):
    lines = [f"{'kind':<12}{'length':>8}{'mean ns':>14}{'std ns':>13}{'ratio':>8}"]
    for row in rows:
        ratio = "" if np.isnan(row["ratio"]) else f"{row['ratio']:.2f}"
        lines.append(
            f"{row['kind']:<12}{row['length']:>8}{row['mean_ns']:>14.0f}"
            f"{row['std_ns']:>13.0f}{ratio:>8}"
        )
    return "\n".join(lines)


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["kind", "length", "mean_ns", "std_ns", "median_ns", "ratio"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def ratios(rows, kind):
    return [r["ratio"] for r in rows if r["kind"] == kind and np.isfinite(r["ratio"])]
