"""Synthetic segmentation corpus and netpbm file I/O.

Each sample is a low-frequency textured background with 1-4 colored shapes
(disk, axis-aligned rectangle, triangle) whose mask ids follow the shape
colors, plus Gaussian pixel noise.  Class boundaries therefore coincide
with intensity edges.  Images are stored as binary PPM (P6) and masks as
binary PGM (P5), so the corpus is byte-identical for a fixed seed.
"""

import os

import numpy as np

from .exceptions import DataError
from .rng import generator

NOISE_SIGMA = 0.05


# ---------------------------------------------------------------------------
# netpbm I/O
# ---------------------------------------------------------------------------

def write_ppm(path, rgb):
    """Write an (H, W, 3) uint8 array as binary PPM."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    try:
        with open(path, "wb") as fh:
            fh.write(b"P6\n%d %d\n255\n" % (w, h))
            fh.write(rgb.tobytes())
    except OSError as err:
        raise DataError(f"{path}: cannot write image ({err})") from err


def write_pgm(path, gray):
    """Write an (H, W) uint8 array as binary PGM."""
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    try:
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(gray.tobytes())
    except OSError as err:
        raise DataError(f"{path}: cannot write mask ({err})") from err


def _read_netpbm(path, magic, channels):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise DataError(f"{path}: cannot read ({err})") from err
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != magic:
        raise DataError(f"{path}: not a {magic.decode()} file")
    try:
        w, h = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError as err:
        raise DataError(f"{path}: bad netpbm header") from err
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
    expected = h * w * channels
    body = parts[3][:expected]
    if len(body) != expected:
        raise DataError(f"{path}: truncated pixel data")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path):
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path):
    return _read_netpbm(path, b"P5", 1)


# ---------------------------------------------------------------------------
# sample synthesis
# ---------------------------------------------------------------------------

def _class_palette(num_classes):
    # Background plus well-separated foreground colors.
    base = [
        (0.85, 0.25, 0.25),
        (0.25, 0.80, 0.30),
        (0.25, 0.40, 0.90),
        (0.90, 0.80, 0.20),
        (0.75, 0.30, 0.85),
        (0.25, 0.80, 0.85),
    ]
    if num_classes - 1 > len(base):
        extra = num_classes - 1 - len(base)
        for i in range(extra):
            phase = 2.0 * np.pi * (i + 1) / (extra + 1)
            base.append(
                (
                    0.5 + 0.4 * np.cos(phase),
                    0.5 + 0.4 * np.cos(phase + 2.1),
                    0.5 + 0.4 * np.cos(phase + 4.2),
                )
            )
    return np.asarray(base[: num_classes - 1])


def _smooth_background(rng, size):
    coarse = rng.uniform(0.35, 0.65, size=(3, size // 8 + 2, size // 8 + 2))
    ys = np.linspace(0, coarse.shape[1] - 1.001, size)
    xs = np.linspace(0, coarse.shape[2] - 1.001, size)
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    c00 = coarse[:, y0][:, :, x0]
    c01 = coarse[:, y0][:, :, x0 + 1]
    c10 = coarse[:, y0 + 1][:, :, x0]
    c11 = coarse[:, y0 + 1][:, :, x0 + 1]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
            + c10 * fy * (1 - fx) + c11 * fy * fx)


def _disk(yy, xx, rng, size):
    r = rng.uniform(size * 0.14, size * 0.26)
    cy = rng.uniform(r, size - r)
    cx = rng.uniform(r, size - r)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _rectangle(yy, xx, rng, size):
    hy = rng.uniform(size * 0.12, size * 0.24)
    hx = rng.uniform(size * 0.12, size * 0.24)
    cy = rng.uniform(hy, size - hy)
    cx = rng.uniform(hx, size - hx)
    return (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)


def _triangle(yy, xx, rng, size):
    r = rng.uniform(size * 0.16, size * 0.3)
    cy = rng.uniform(r, size - r)
    cx = rng.uniform(r, size - r)
    start = rng.uniform(0, 2 * np.pi)
    angles = start + np.array([0.0, 2.0, 4.0]) * np.pi / 3 + rng.uniform(-0.3, 0.3, 3)
    pts = np.stack([cy + r * np.sin(angles), cx + r * np.cos(angles)], axis=1)
    inside = np.ones_like(yy, dtype=bool)
    signs = []
    for i in range(3):
        ay, ax = pts[i]
        by, bx = pts[(i + 1) % 3]
        signs.append((xx - ax) * (by - ay) - (yy - ay) * (bx - ax))
    pos = (signs[0] >= 0) & (signs[1] >= 0) & (signs[2] >= 0)
    negv = (signs[0] <= 0) & (signs[1] <= 0) & (signs[2] <= 0)
    inside &= pos | negv
    return inside


_SHAPES = (_disk, _rectangle, _triangle)


def synth_sample(rng, size, num_classes):
    """One (image float (3, H, W) in [0, 1], mask int (H, W)) pair."""
    yy, xx = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float),
                         indexing="ij")
    palette = _class_palette(num_classes)
    image = _smooth_background(rng, size)
    mask = np.zeros((size, size), dtype=np.uint8)
    for _ in range(int(rng.integers(1, 5))):
        cls = int(rng.integers(1, num_classes))
        shape_fn = _SHAPES[int(rng.integers(0, len(_SHAPES)))]
        inside = shape_fn(yy, xx, rng, size)
        color = palette[cls - 1] + rng.uniform(-0.06, 0.06, 3)
        mask[inside] = cls
        for ch in range(3):
            image[ch][inside] = color[ch]
    image = image + rng.normal(0.0, NOISE_SIGMA, size=image.shape)
    return np.clip(image, 0.0, 1.0), mask


def gen_corpus(seed, n_train, n_val, size, num_classes, out_dir):
    """Generate a deterministic corpus under `out_dir` (train/ and val/)."""
    if size % 16:
        raise DataError(f"corpus size must be divisible by 16, got {size}")
    for split, count in (("train", n_train), ("val", n_val)):
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        for i in range(count):
            rng = generator(seed, f"{split}:{i}")
            image, mask = synth_sample(rng, size, num_classes)
            rgb = np.round(image * 255.0).astype(np.uint8).transpose(1, 2, 0)
            write_ppm(os.path.join(split_dir, f"img_{i:04d}.ppm"), rgb)
            write_pgm(os.path.join(split_dir, f"mask_{i:04d}.pgm"), mask)
    meta = os.path.join(out_dir, "meta.txt")
    with open(meta, "w") as fh:
        fh.write(f"seed={seed}\nn_train={n_train}\nn_val={n_val}\n"
                 f"size={size}\nnum_classes={num_classes}\n")
    return out_dir


def load_split(corpus_dir, split, dtype=np.float64):
    """Load one split as (images (N, 3, H, W) in [0, 1], masks (N, H, W))."""
    split_dir = os.path.join(corpus_dir, split)
    if not os.path.isdir(split_dir):
        raise DataError(f"{split_dir}: corpus split not found")
    names = sorted(f for f in os.listdir(split_dir) if f.startswith("img_"))
    images, masks = [], []
    for name in names:
        idx = name[4:8]
        rgb = read_ppm(os.path.join(split_dir, name))
        mask = read_pgm(os.path.join(split_dir, f"mask_{idx}.pgm"))
        images.append(rgb.transpose(2, 0, 1).astype(dtype) / 255.0)
        masks.append(mask.astype(np.int64))
    if not images:
        raise DataError(f"{split_dir}: no samples found")
    return np.stack(images), np.stack(masks)


def read_meta(corpus_dir):
    path = os.path.join(corpus_dir, "meta.txt")
    meta = {}
    try:
        with open(path) as fh:
            for line in fh:
                if "=" in line:
                    key, value = line.strip().split("=", 1)
                    meta[key] = int(value)
    except OSError as err:
        raise DataError(f"{path}: cannot read corpus metadata ({err})") from err
    return meta
