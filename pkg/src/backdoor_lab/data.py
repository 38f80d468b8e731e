"""Dataset ingestion (IDX), synthetic fixtures, label filtering, batching."""

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Images (count, H, W, C) float32 in [0,1] plus optional integer labels."""

    images: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DataError(f"images must be (count, H, W, C), got shape {self.images.shape}")
        if self.images.dtype != np.float32:
            self.images = self.images.astype(np.float32)
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError("pixel values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.images):
                raise DataError(
                    f"label count {len(self.labels)} does not match image count {len(self.images)}")

    @property
    def count(self):
        return self.images.shape[0]

    @property
    def image_shape(self):
        return self.images.shape[1:]


def _read_bytes(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
        rest = fh.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(images_path, labels_path=None, name=None, split="train"):
    """Load an IDX image file (and optional IDX label file) into a Dataset.

    Pixels are scaled from [0, 255] bytes to [0, 1] floats. Gzipped files are
    accepted transparently.
    """
    raw = _read_bytes(images_path)
    if len(raw) < 16:
        raise FormatError(f"{images_path}: too short for an IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"{images_path}: bad IDX image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = count * rows * cols
    payload = raw[16:]
    if len(payload) != expected:
        raise DataError(
            f"{images_path}: truncated payload, expected {expected} pixel bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols, 1)
    images = pixels.astype(np.float32) / 255.0

    labels = None
    if labels_path is not None:
        lraw = _read_bytes(labels_path)
        if len(lraw) < 8:
            raise FormatError(f"{labels_path}: too short for an IDX label header")
        lmagic, lcount = struct.unpack(">II", lraw[:8])
        if lmagic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{labels_path}: bad IDX label magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
        lpayload = lraw[8:]
        if len(lpayload) != lcount:
            raise DataError(
                f"{labels_path}: truncated payload, expected {lcount} label bytes, got {len(lpayload)}")
        if lcount != count:
            raise DataError(
                f"label count {lcount} does not match image count {count}")
        labels = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)

    return Dataset(images=images, labels=labels,
                   name=name or str(images_path), split=split)


def write_idx_images(path, images_uint8):
    """Write (count, H, W) uint8 pixels as a raw IDX image file."""
    arr = np.ascontiguousarray(images_uint8, dtype=np.uint8)
    if arr.ndim != 3:
        raise DataError(f"expected (count, rows, cols) uint8, got shape {arr.shape}")
    count, rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(arr.tobytes())


def write_idx_labels(path, labels):
    arr = np.ascontiguousarray(labels, dtype=np.uint8)
    if arr.ndim != 1:
        raise DataError(f"expected flat labels, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(arr)))
        fh.write(arr.tobytes())


def filter_by_labels(d, keep):
    """Keep exactly the examples whose label is in ``keep``, order preserved."""
    if d.labels is None:
        raise ContractError("filter_by_labels needs a labeled dataset")
    keep = set(int(k) for k in keep)
    mask = np.isin(d.labels, sorted(keep))
    if not mask.any():
        raise DataError(f"filtering by labels {sorted(keep)} leaves an empty dataset")
    return Dataset(images=d.images[mask].copy(), labels=d.labels[mask].copy(),
                   name=d.name, split=d.split)


def synth_blobs(count, height, width, seed):
    """Seeded images of one bright rectangle on black; label = quadrant of its center."""
    if count <= 0 or height < 4 or width < 4:
        raise DataError(f"synth_blobs needs count > 0 and sides >= 4, "
                        f"got count={count}, {height}x{width}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    images = np.zeros((count, height, width, 1), dtype=np.float32)
    labels = np.zeros(count, dtype=np.int64)
    for i in range(count):
        rh = int(rng.integers(max(2, height // 5), max(3, height // 3) + 1))
        rw = int(rng.integers(max(2, width // 5), max(3, width // 3) + 1))
        r0 = int(rng.integers(0, height - rh + 1))
        c0 = int(rng.integers(0, width - rw + 1))
        brightness = np.float32(rng.uniform(0.7, 1.0))
        images[i, r0:r0 + rh, c0:c0 + rw, 0] = brightness
        bottom = (r0 + (rh - 1) / 2.0) >= height / 2.0
        right = (c0 + (rw - 1) / 2.0) >= width / 2.0
        labels[i] = 2 * int(bottom) + int(right)
    return Dataset(images=images, labels=labels,
                   name=f"synth_blobs_{seed}", split="train")


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    seed: int
    drop_last: bool = False


def batches(count, plan, epoch):
    """Index batches for one epoch; the permutation is a pure function of (seed, epoch)."""
    if plan.batch_size <= 0:
        raise DataError(f"batch_size must be positive, got {plan.batch_size}")
    if plan.batch_size > count:
        raise DataError(f"batch_size {plan.batch_size} exceeds dataset size {count}")
    ss = np.random.SeedSequence(entropy=plan.seed & (2 ** 64 - 1), spawn_key=(epoch,))
    perm = np.random.default_rng(ss).permutation(count)
    out = []
    for start in range(0, count, plan.batch_size):
        idx = perm[start:start + plan.batch_size]
        if plan.drop_last and len(idx) < plan.batch_size:
            break
        out.append(idx)
    return out
