"""Dataset ingestion: IDX and CIFAR-10 binary parsers plus batching utilities.

When no real MNIST files are present a deterministic synthetic digit set is
rendered and written in the same IDX format, so the parser and the training
pipeline are exercised identically either way.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3*32*32 pixels

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


@dataclass
class Dataset:
    """Images as float32 N x C x H x W scaled to [0, 1], integer labels, split tag."""

    images: np.ndarray
    labels: np.ndarray
    split: str
    num_classes: int = 10

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataFormatError(f"labels out of range [0, {self.num_classes})")

    def __len__(self):
        return self.images.shape[0]


# -- IDX ---------------------------------------------------------------------


def _read_exact(f, n: int, offset: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(
            f"truncated IDX file: expected {n} bytes of {what} at offset {offset}, got {len(buf)}"
        )
    return buf


def load_mnist_idx(image_path: str, label_path: str) -> Dataset:
    """Parse big-endian IDX image/label files into a Dataset (pixels scaled by 1/255)."""
    with open(image_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, 0, "image magic"))
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"bad image magic 0x{magic:08x} at offset 0 in {image_path}"
                f" (expected 0x{IDX_IMAGE_MAGIC:08x})"
            )
        n, rows, cols = struct.unpack(">III", _read_exact(f, 12, 4, "image dimensions"))
        payload = _read_exact(f, n * rows * cols, 16, "pixel data")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(n, 1, rows, cols)
    with open(label_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, 0, "label magic"))
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"bad label magic 0x{magic:08x} at offset 0 in {label_path}"
                f" (expected 0x{IDX_LABEL_MAGIC:08x})"
            )
        (n_labels,) = struct.unpack(">I", _read_exact(f, 4, 4, "label count"))
        labels = np.frombuffer(_read_exact(f, n_labels, 8, "label data"), dtype=np.uint8)
    split = "train" if "train" in os.path.basename(image_path) else "test"
    return Dataset(
        images=(images.astype(np.float32) / 255.0),
        labels=labels.astype(np.int64),
        split=split,
    )


def write_idx_images(path: str, images: np.ndarray):
    """images: uint8 (N, H, W)."""
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: str, labels: np.ndarray):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


# -- CIFAR-10 ----------------------------------------------------------------


def load_cifar10_bin(
    paths: Sequence[str],
    normalize: Optional[tuple[Sequence[float], Sequence[float]]] = None,
    split: str = "train",
) -> Dataset:
    """Parse CIFAR-10 binary batch files (3073-byte records, R/G/B planes).

    ``normalize`` optionally applies fixed per-channel (mean, std) constants
    after the 1/255 scaling.
    """
    chunks, label_chunks = [], []
    for path in paths:
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: length {raw.size} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        rec = raw.reshape(-1, CIFAR_RECORD_BYTES)
        label_chunks.append(rec[:, 0].astype(np.int64))
        chunks.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    images = np.concatenate(chunks).astype(np.float32) / 255.0
    labels = np.concatenate(label_chunks)
    if normalize is not None:
        mean, std = normalize
        mean = np.asarray(mean, dtype=np.float32).reshape(1, 3, 1, 1)
        std = np.asarray(std, dtype=np.float32).reshape(1, 3, 1, 1)
        images = (images - mean) / std
    return Dataset(images=images, labels=labels, split=split)


# -- synthetic digits ----------------------------------------------------------

_GLYPHS = [
    "01110 10001 10011 10101 11001 10001 01110",  # 0
    "00100 01100 00100 00100 00100 00100 01110",  # 1
    "01110 10001 00001 00010 00100 01000 11111",  # 2
    "11111 00010 00100 00010 00001 10001 01110",  # 3
    "00010 00110 01010 10010 11111 00010 00010",  # 4
    "11111 10000 11110 00001 00001 10001 01110",  # 5
    "00110 01000 10000 11110 10001 10001 01110",  # 6
    "11111 00001 00010 00100 01000 01000 01000",  # 7
    "01110 10001 10001 01110 10001 10001 01110",  # 8
    "01110 10001 10001 01111 00001 00010 01100",  # 9
]


def _glyph_canvas(digit: int) -> np.ndarray:
    rows = _GLYPHS[digit].split()
    bitmap = np.array([[int(ch) for ch in row] for row in rows], dtype=np.float32)
    up = np.kron(bitmap, np.ones((3, 3), dtype=np.float32))  # 21 x 15
    canvas = np.zeros((28, 28), dtype=np.float32)
    y0 = (28 - up.shape[0]) // 2
    x0 = (28 - up.shape[1]) // 2
    canvas[y0 : y0 + up.shape[0], x0 : x0 + up.shape[1]] = up
    return canvas


def _warp(img: np.ndarray, angle: float, scale: float, shear: float, tx: float, ty: float) -> np.ndarray:
    """Inverse-mapped affine warp around the image center with bilinear sampling."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    yc, xc = ys - cy - ty, xs - cx - tx
    cos_a, sin_a = np.cos(-angle), np.sin(-angle)
    src_x = (cos_a * xc - sin_a * yc) / scale + shear * yc + cx
    src_y = (sin_a * xc + cos_a * yc) / scale + cy
    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx, fy = src_x - x0, src_y - y0

    def grab(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros_like(img, dtype=np.float64)
        out[valid] = img[yy[valid], xx[valid]]
        return out

    top = grab(y0, x0) * (1 - fx) + grab(y0, x0 + 1) * fx
    bot = grab(y0 + 1, x0) * (1 - fx) + grab(y0 + 1, x0 + 1) * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def synth_digits(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Render n augmented digit images; returns (uint8 images (n,28,28), labels)."""
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, 28, 28), dtype=np.uint8)
    base = [_glyph_canvas(d) for d in range(10)]
    for i in range(n):
        img = base[labels[i]]
        if rng.random() < 0.35:  # stroke thickening
            img = np.maximum(img, np.maximum(np.roll(img, 1, axis=0), np.roll(img, 1, axis=1)))
        img = _warp(
            img,
            angle=rng.uniform(-0.30, 0.30),
            scale=rng.uniform(0.75, 1.15),
            shear=rng.uniform(-0.15, 0.15),
            tx=rng.uniform(-3.0, 3.0),
            ty=rng.uniform(-3.0, 3.0),
        )
        img = img * rng.uniform(0.75, 1.0) + rng.normal(0.0, rng.uniform(0.04, 0.14), img.shape)
        images[i] = (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return images, labels.astype(np.uint8)


def ensure_synthetic_mnist(data_dir: str, n_train: int = 12000, n_test: int = 4000,
                           seed: int = 20240901) -> None:
    """Write a deterministic synthetic digit set in IDX format unless already present."""
    os.makedirs(data_dir, exist_ok=True)
    if all(os.path.exists(os.path.join(data_dir, f)) for f in MNIST_FILES):
        return
    rng = np.random.default_rng(seed)
    train_images, train_labels = synth_digits(n_train, rng)
    test_images, test_labels = synth_digits(n_test, rng)
    write_idx_images(os.path.join(data_dir, MNIST_FILES[0]), train_images)
    write_idx_labels(os.path.join(data_dir, MNIST_FILES[1]), train_labels)
    write_idx_images(os.path.join(data_dir, MNIST_FILES[2]), test_images)
    write_idx_labels(os.path.join(data_dir, MNIST_FILES[3]), test_labels)


def resolve_mnist(data_dir: str, synthesize: bool = True) -> tuple[Dataset, Dataset, str]:
    """Load MNIST-format data from data_dir, synthesizing a stand-in set if absent.

    Returns (train, test, source) where source is "idx" for pre-existing files
    and "synthetic" when the stand-in generator produced them.
    """
    source = "idx"
    if not all(os.path.exists(os.path.join(data_dir, f)) for f in MNIST_FILES):
        if not synthesize:
            missing = [f for f in MNIST_FILES if not os.path.exists(os.path.join(data_dir, f))]
            raise DataFormatError(f"missing dataset files in {data_dir}: {missing}")
        ensure_synthetic_mnist(data_dir)
        source = "synthetic"
    train = load_mnist_idx(
        os.path.join(data_dir, MNIST_FILES[0]), os.path.join(data_dir, MNIST_FILES[1])
    )
    test = load_mnist_idx(
        os.path.join(data_dir, MNIST_FILES[2]), os.path.join(data_dir, MNIST_FILES[3])
    )
    return train, test, source


# -- batching ------------------------------------------------------------------


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic shuffle for one epoch: a pure function of (n, seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def augment_cifar(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random 4-pixel-pad crop plus horizontal flip (training-time CIFAR only)."""
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
    out = np.empty_like(images)
    offs = rng.integers(0, 9, size=(n, 2))
    flips = rng.random(n) < 0.5
    for i in range(n):
        dy, dx = offs[i]
        crop = padded[i, :, dy : dy + h, dx : dx + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
