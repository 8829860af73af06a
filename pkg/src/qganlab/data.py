"""IDX (MNIST) ingestion, desk-scale downscaling, and a synthetic fallback.

Images always leave this module as float64 arrays in [-1, 1]; the u8 mapping
is affine and exact at both endpoints (0 -> -1, 255 -> +1). Labels outside
[0, n_classes) abort ingestion rather than propagate silently.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_UBYTE = 0x08

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxParseError(ValueError):
    """Malformed IDX payload; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class IdxTensor:
    magic: int
    dtype_code: int
    shape: tuple[int, ...]
    data: np.ndarray  # uint8 payload reshaped to `shape`


def parse_idx(buf: bytes) -> IdxTensor:
    """Validate and decode one IDX buffer (unsigned-byte payloads only)."""
    buf = memoryview(buf)
    if len(buf) < 4:
        raise IdxParseError(f"need at least 4 header bytes, got {len(buf)}", 0)
    if buf[0] != 0 or buf[1] != 0:
        offset = 0 if buf[0] != 0 else 1
        raise IdxParseError(f"magic byte {offset} must be zero, got {buf[offset]:#04x}", offset)
    dtype_code = buf[2]
    if dtype_code != IDX_UBYTE:
        raise IdxParseError(f"unsupported dtype code {dtype_code:#04x}", 2)
    ndim = buf[3]
    if ndim < 1:
        raise IdxParseError("dimension count must be positive", 3)
    header_len = 4 + 4 * ndim
    if len(buf) < header_len:
        raise IdxParseError(
            f"truncated header: {len(buf)} bytes < {header_len} needed for {ndim} dims", len(buf)
        )
    shape = tuple(
        int.from_bytes(buf[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)
    )
    expected = 1
    for dim in shape:
        expected *= dim
    payload = len(buf) - header_len
    if payload != expected:
        raise IdxParseError(
            f"payload is {payload} bytes but dimensions {shape} require {expected}", header_len
        )
    magic = int.from_bytes(buf[0:4], "big")
    data = np.frombuffer(buf, dtype=np.uint8, offset=header_len).reshape(shape)
    return IdxTensor(magic, dtype_code, shape, data)


def load_idx_file(path: str | Path) -> IdxTensor:
    """Read an IDX file, inflating gzip transparently."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


@dataclass
class Dataset:
    """Images in [-1, 1] with integer labels in [0, n_classes)."""

    images: np.ndarray  # [n, H, W] float64
    labels: np.ndarray  # [n] int64
    n_classes: int

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]


def normalize_u8(images: np.ndarray) -> np.ndarray:
    """Affine u8 -> [-1, 1]; exact at both endpoints."""
    return images.astype(np.float64) / 127.5 - 1.0


def downscale(images: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping average pooling over the trailing two axes."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    n, h, w = images.shape
    if h % factor or w % factor:
        raise ValueError(f"image size {h}x{w} not divisible by factor {factor}")
    pooled = images.reshape(n, h // factor, factor, w // factor, factor)
    return pooled.mean(axis=(2, 4))


def _checked_labels(raw: np.ndarray, n_classes: int, what: str) -> np.ndarray:
    labels = raw.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        bad = labels[(labels < 0) | (labels >= n_classes)][0]
        raise ValueError(f"{what}: corrupt label {bad} outside [0, {n_classes})")
    return labels


def load_mnist(
    data_dir: str | Path, downscale_factor: int = 2, n_classes: int = 10
) -> tuple[Dataset, Dataset]:
    """Load the four standard IDX files (plain or .gz) from one directory."""
    data_dir = Path(data_dir)
    found: dict[str, Path] = {}
    missing = []
    for key, stem in MNIST_FILES.items():
        for candidate in (data_dir / stem, data_dir / (stem + ".gz")):
            if candidate.exists():
                found[key] = candidate
                break
        else:
            missing.append(str(data_dir / stem) + "[.gz]")
    if missing:
        raise FileNotFoundError("missing MNIST files: " + ", ".join(missing))

    def build(images_key: str, labels_key: str) -> Dataset:
        images_idx = load_idx_file(found[images_key])
        labels_idx = load_idx_file(found[labels_key])
        if len(images_idx.shape) != 3:
            raise IdxParseError(f"{images_key}: expected 3 dims, got {images_idx.shape}", 3)
        if len(labels_idx.shape) != 1:
            raise IdxParseError(f"{labels_key}: expected 1 dim, got {labels_idx.shape}", 3)
        if images_idx.shape[0] != labels_idx.shape[0]:
            raise ValueError(
                f"{images_key} has {images_idx.shape[0]} items but "
                f"{labels_key} has {labels_idx.shape[0]}"
            )
        images = downscale(normalize_u8(images_idx.data), downscale_factor)
        labels = _checked_labels(labels_idx.data, n_classes, labels_key)
        return Dataset(images, labels, n_classes)

    return build("train_images", "train_labels"), build("test_images", "test_labels")


# Class means for the synthetic mixture are a fixed property of the family
# (independent of the sampling seed) so different draws share one geometry.
_MEANS_ENTROPY = 0x51DE


def gmm_class_means(n_classes: int, dim: int, scale: float = 0.8) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([_MEANS_ENTROPY, n_classes, dim]))
    means = rng.standard_normal((n_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    return means * scale


def synthetic_gmm(
    n_per_class: int,
    n_classes: int,
    dim: int,
    seed: int,
    sigma: float = 0.1,
    mean_scale: float = 1.2,
    image_shape: tuple[int, int] | None = None,
) -> Dataset:
    """Isotropic Gaussian blobs at well-separated fixed class means, in [-1, 1]."""
    if n_classes < 1 or dim < 1 or n_per_class < 0:
        raise ValueError("n_per_class must be >= 0, n_classes and dim positive")
    if image_shape is None:
        side = int(np.sqrt(dim))
        if side * side != dim:
            raise ValueError(f"dim {dim} is not square; pass image_shape explicitly")
        image_shape = (side, side)
    means = gmm_class_means(n_classes, dim, mean_scale)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x6D6D,)))
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    samples = means[labels] + sigma * rng.standard_normal((len(labels), dim))
    np.clip(samples, -1.0, 1.0, out=samples)
    images = samples.reshape(len(labels), *image_shape)
    return Dataset(images, labels, n_classes)


# -- dataset cache -------------------------------------------------------------

CACHE_SCHEMA = "qgl-dataset-v1"


def save_cache(path: str | Path, train: Dataset, test: Dataset, meta: dict) -> None:
    path = Path(path)
    np.savez_compressed(
        path,
        schema=CACHE_SCHEMA,
        train_images=train.images,
        train_labels=train.labels,
        test_images=test.images,
        test_labels=test.labels,
        n_classes=train.n_classes,
        meta=np.array([repr(meta)], dtype=object),
    )


def load_cache(path: str | Path) -> tuple[Dataset, Dataset]:
    with np.load(Path(path), allow_pickle=True) as blob:
        if str(blob["schema"]) != CACHE_SCHEMA:
            raise ValueError(f"unknown dataset cache schema {blob['schema']!r}")
        n_classes = int(blob["n_classes"])
        train = Dataset(blob["train_images"], blob["train_labels"], n_classes)
        test = Dataset(blob["test_images"], blob["test_labels"], n_classes)
    return train, test
