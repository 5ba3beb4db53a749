"""Dataset ingestion, synthetic transfer tasks, and deterministic batching.

Feature matrices are float64 in [0, 1]; labels are one-hot (or multi-hot)
float64 matrices. Source datasets are unlabeled; when ground truth exists it
rides along as opaque DiagnosticLabels that only the metrics module reads.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

from akt.errors import IdxFormatError, StreamError, ValidationError
from akt.metrics import DiagnosticLabels

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Parse guard: refuse dimension products beyond ~1e12 elements.
_MAX_ELEMENTS = 1 << 40


@dataclass
class LabeledDataset:
    """Feature matrix in [0, 1] plus one-hot / multi-hot labels."""

    x: np.ndarray
    y: np.ndarray
    class_count: int
    name: str = "labeled"

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise ValidationError(
                f"{self.name}: features and labels must be 2-D, got {self.x.shape} and {self.y.shape}"
            )
        if self.x.shape[0] != self.y.shape[0]:
            raise ValidationError(
                f"{self.name}: {self.x.shape[0]} feature rows vs {self.y.shape[0]} label rows"
            )
        if self.y.shape[1] != self.class_count:
            raise ValidationError(
                f"{self.name}: labels have {self.y.shape[1]} columns, expected {self.class_count}"
            )
        if self.x.size and (self.x.min() < 0.0 or self.x.max() > 1.0):
            raise ValidationError(f"{self.name}: features must lie in [0, 1]")
        if not ((self.y == 0.0) | (self.y == 1.0)).all():
            raise ValidationError(f"{self.name}: label entries must be 0 or 1")

    def __len__(self):
        return self.x.shape[0]


@dataclass
class UnlabeledDataset:
    """Feature matrix in [0, 1]; optional diagnostics for metrics only."""

    x: np.ndarray
    diagnostics: DiagnosticLabels = None
    name: str = "unlabeled"

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValidationError(f"{self.name}: features must be 2-D, got {self.x.shape}")
        if self.x.size and (self.x.min() < 0.0 or self.x.max() > 1.0):
            raise ValidationError(f"{self.name}: features must lie in [0, 1]")
        if self.diagnostics is not None and len(self.diagnostics) != self.x.shape[0]:
            raise ValidationError(
                f"{self.name}: {len(self.diagnostics)} diagnostic labels vs "
                f"{self.x.shape[0]} samples"
            )

    def __len__(self):
        return self.x.shape[0]


def as_unlabeled(dataset, name=None):
    """Strip labels into diagnostics so a labeled set can play the source role."""
    return UnlabeledDataset(
        x=dataset.x,
        diagnostics=DiagnosticLabels(np.argmax(dataset.y, axis=1)),
        name=name if name is not None else dataset.name,
    )


@dataclass
class TransferTask:
    """A target train/test split plus an unlabeled source set."""

    target_train: LabeledDataset
    target_test: LabeledDataset
    source: UnlabeledDataset
    class_means: np.ndarray = None  # scaled generative means, target classes first
    noise_scale: float = None


# ---------------------------------------------------------------------------
# IDX files


def _read_u32(raw, offset, what):
    if offset + 4 > len(raw):
        raise IdxFormatError(f"truncated file while reading {what}", len(raw))
    return struct.unpack_from(">I", raw, offset)[0]


def _parse_idx(raw, expected_magic, rank, what):
    magic = _read_u32(raw, 0, f"{what} magic")
    if magic != expected_magic:
        raise IdxFormatError(
            f"bad {what} magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0
        )
    dims = []
    for i in range(rank):
        dims.append(_read_u32(raw, 4 + 4 * i, f"{what} dimension {i}"))
    total = 1
    for d in dims:
        total *= d
    if total > _MAX_ELEMENTS:
        raise IdxFormatError(f"dimension overflow: {dims} declares {total} elements", 4)
    header = 4 + 4 * rank
    if len(raw) - header < total:
        raise IdxFormatError(
            f"truncated payload: need {total} bytes after offset {header}, have {len(raw) - header}",
            len(raw),
        )
    if len(raw) - header > total:
        raise IdxFormatError(
            f"payload size mismatch: {len(raw) - header} bytes after offset {header}, expected {total}",
            header + total,
        )
    data = np.frombuffer(raw, dtype=np.uint8, offset=header)
    return data.reshape(dims)


def load_idx(images_path, labels_path=None, limit=None):
    """Parse IDX image (and optionally label) files into a dataset.

    Pixels are scaled to [0, 1] by dividing by 255; labels are one-hot encoded
    over 0..max(label). `limit` keeps the first records only.
    """
    raw = Path(images_path).read_bytes()
    images = _parse_idx(raw, IDX_IMAGES_MAGIC, 3, "image")
    n = images.shape[0]
    if limit is not None and limit > 0:
        images = images[:limit]
        n = images.shape[0]
    if n == 0:
        raise ValidationError(f"{images_path}: empty image file")
    x = images.reshape(n, -1).astype(np.float64) / 255.0
    if labels_path is None:
        return UnlabeledDataset(x=x, name=str(images_path))
    raw_labels = Path(labels_path).read_bytes()
    labels = _parse_idx(raw_labels, IDX_LABELS_MAGIC, 1, "label")
    if limit is not None and limit > 0:
        labels = labels[:limit]
    if labels.shape[0] != n:
        raise ValidationError(
            f"label count {labels.shape[0]} does not match image count {n}"
        )
    class_count = int(labels.max()) + 1
    y = np.zeros((n, class_count), dtype=np.float64)
    y[np.arange(n), labels.astype(np.int64)] = 1.0
    return LabeledDataset(x=x, y=y, class_count=class_count, name=str(images_path))


def write_idx_images(path, images):
    """Write a uint8 (n, rows, cols) array in IDX image format."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValidationError(f"images must be rank-3, got shape {images.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    """Write a uint8 (n,) label array in IDX label format."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8).reshape(-1)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# Synthetic Gaussian transfer task


def make_synthetic_transfer_task(
    seed,
    dim=16,
    target_classes=4,
    source_classes=8,
    target_per_class=50,
    test_per_class=100,
    source_per_class=250,
    separation=3.0,
    noise=1.0,
    min_separation=None,
    max_attempts=1000,
):
    """Gaussian clusters with disjoint target/source label spaces.

    All class means live on one sphere of radius `separation` (rejecting means
    closer than `min_separation`, default separation/2), so source classes are
    disjoint from target classes but share the generative family. Samples are
    mean + N(0, noise^2); everything is rescaled isotropically into [0, 1].
    """
    if separation <= 0.0 or noise <= 0.0:
        raise ValidationError(f"separation and noise must be > 0, got {separation}, {noise}")
    if target_classes < 2 or source_classes < 1:
        raise ValidationError(
            f"need >= 2 target and >= 1 source classes, got {target_classes}, {source_classes}"
        )
    rng = np.random.default_rng(seed)
    min_sep = separation / 2.0 if min_separation is None else min_separation
    total = target_classes + source_classes
    means = np.empty((total, dim))
    for k in range(total):
        for _ in range(max_attempts):
            v = rng.standard_normal(dim)
            candidate = separation * v / np.linalg.norm(v)
            if k == 0 or np.linalg.norm(means[:k] - candidate, axis=1).min() >= min_sep:
                means[k] = candidate
                break
        else:
            raise ValidationError(
                f"could not place class mean {k} after {max_attempts} attempts "
                f"(min separation {min_sep})"
            )

    def draw(class_index, count):
        return means[class_index] + noise * rng.standard_normal((count, dim))

    train_x = np.vstack([draw(k, target_per_class) for k in range(target_classes)])
    train_ids = np.repeat(np.arange(target_classes), target_per_class)
    test_x = np.vstack([draw(k, test_per_class) for k in range(target_classes)])
    test_ids = np.repeat(np.arange(target_classes), test_per_class)
    source_x = np.vstack(
        [draw(target_classes + k, source_per_class) for k in range(source_classes)]
    )
    source_ids = np.repeat(np.arange(source_classes), source_per_class)

    lo = min(train_x.min(), test_x.min(), source_x.min())
    hi = max(train_x.max(), test_x.max(), source_x.max())
    span = hi - lo

    def rescale(a):
        return (a - lo) / span

    def onehot(ids):
        out = np.zeros((ids.shape[0], target_classes))
        out[np.arange(ids.shape[0]), ids] = 1.0
        return out

    return TransferTask(
        target_train=LabeledDataset(
            rescale(train_x), onehot(train_ids), target_classes, name="synth-target-train"
        ),
        target_test=LabeledDataset(
            rescale(test_x), onehot(test_ids), target_classes, name="synth-target-test"
        ),
        source=UnlabeledDataset(
            rescale(source_x), DiagnosticLabels(source_ids), name="synth-source"
        ),
        class_means=rescale(means),
        noise_scale=noise / span,
    )


# ---------------------------------------------------------------------------
# Glyph transfer task (image-shaped desk-scale stand-in for character data)

_TARGET_GLYPHS = {
    "A": ("..###..", ".#...#.", ".#...#.", ".#####.", ".#...#.", ".#...#.", ".#...#."),
    "E": (".#####.", ".#.....", ".#.....", ".####..", ".#.....", ".#.....", ".#####."),
    "F": (".#####.", ".#.....", ".#.....", ".####..", ".#.....", ".#.....", ".#....."),
    "H": (".#...#.", ".#...#.", ".#...#.", ".#####.", ".#...#.", ".#...#.", ".#...#."),
    "K": (".#...#.", ".#..#..", ".#.#...", ".##....", ".#.#...", ".#..#..", ".#...#."),
    "L": (".#.....", ".#.....", ".#.....", ".#.....", ".#.....", ".#.....", ".#####."),
    "T": (".#####.", "...#...", "...#...", "...#...", "...#...", "...#...", "...#..."),
    "U": (".#...#.", ".#...#.", ".#...#.", ".#...#.", ".#...#.", ".#...#.", "..###.."),
    "X": (".#...#.", ".#...#.", "..#.#..", "...#...", "..#.#..", ".#...#.", ".#...#."),
    "Y": (".#...#.", ".#...#.", "..#.#..", "...#...", "...#...", "...#...", "...#..."),
}

_SOURCE_GLYPHS = {
    "0": ("..###..", ".#...#.", ".#...#.", ".#...#.", ".#...#.", ".#...#.", "..###.."),
    "1": ("...#...", "..##...", ".#.#...", "...#...", "...#...", "...#...", ".#####."),
    "2": ("..###..", ".#...#.", ".....#.", "....#..", "...#...", "..#....", ".#####."),
    "3": (".####..", ".....#.", ".....#.", "..###..", ".....#.", ".....#.", ".####.."),
    "4": (".#..#..", ".#..#..", ".#..#..", ".#####.", "....#..", "....#..", "....#.."),
    "5": (".#####.", ".#.....", ".#.....", ".####..", ".....#.", ".....#.", ".####.."),
    "6": ("..###..", ".#.....", ".#.....", ".####..", ".#...#.", ".#...#.", "..###.."),
    "7": (".#####.", ".....#.", "....#..", "...#...", "...#...", "..#....", "..#...."),
    "8": ("..###..", ".#...#.", ".#...#.", "..###..", ".#...#.", ".#...#.", "..###.."),
    "9": ("..###..", ".#...#.", ".#...#.", "..####.", ".....#.", ".....#.", "..###.."),
}

GLYPH_SIZE = 28


def _glyph_template(pattern):
    grid = np.array([[ch == "#" for ch in row] for row in pattern], dtype=bool)
    return np.kron(grid, np.ones((4, 4), dtype=bool))


def _render_glyph(rng, template, jitter, noise, dropout):
    dy, dx = rng.integers(-jitter, jitter + 1, size=2)
    if rng.random() < 0.5:
        template = binary_dilation(template)
    canvas = np.zeros((GLYPH_SIZE, GLYPH_SIZE))
    src = template[
        max(0, -dy) : GLYPH_SIZE - max(0, dy), max(0, -dx) : GLYPH_SIZE - max(0, dx)
    ]
    intensity = rng.uniform(0.55, 1.0) * 255.0
    keep = rng.random(src.shape) >= dropout
    canvas[
        max(0, dy) : GLYPH_SIZE - max(0, -dy), max(0, dx) : GLYPH_SIZE - max(0, -dx)
    ] = (src & keep) * intensity
    canvas += rng.normal(0.0, noise, canvas.shape)
    return np.clip(np.rint(canvas), 0.0, 255.0).astype(np.uint8)


def make_glyph_transfer_task(
    seed,
    target_classes=10,
    source_classes=10,
    target_per_class=200,
    test_per_class=100,
    source_per_class=1000,
    jitter=2,
    noise=35.0,
    dropout=0.15,
):
    """28x28 glyph images: letter-like target classes, digit-like source classes.

    Both families are rendered by the same pipeline (shift jitter, random
    thickness, stroke dropout, pixel noise), so they share low-level stroke
    structure while their label spaces stay disjoint.
    """
    if not 1 <= source_classes <= len(_SOURCE_GLYPHS):
        raise ValidationError(f"source_classes must be in 1..{len(_SOURCE_GLYPHS)}")
    if not 2 <= target_classes <= len(_TARGET_GLYPHS):
        raise ValidationError(f"target_classes must be in 2..{len(_TARGET_GLYPHS)}")
    rng = np.random.default_rng(seed)
    target_templates = [
        _glyph_template(p) for p in list(_TARGET_GLYPHS.values())[:target_classes]
    ]
    source_templates = [
        _glyph_template(p) for p in list(_SOURCE_GLYPHS.values())[:source_classes]
    ]

    def render_set(templates, per_class):
        images, ids = [], []
        for k, template in enumerate(templates):
            for _ in range(per_class):
                images.append(_render_glyph(rng, template, jitter, noise, dropout))
                ids.append(k)
        return np.stack(images), np.array(ids, dtype=np.int64)

    train_imgs, train_ids = render_set(target_templates, target_per_class)
    test_imgs, test_ids = render_set(target_templates, test_per_class)
    source_imgs, source_ids = render_set(source_templates, source_per_class)

    def flatten(images):
        return images.reshape(images.shape[0], -1).astype(np.float64) / 255.0

    def onehot(ids):
        out = np.zeros((ids.shape[0], target_classes))
        out[np.arange(ids.shape[0]), ids] = 1.0
        return out

    return TransferTask(
        target_train=LabeledDataset(
            flatten(train_imgs), onehot(train_ids), target_classes, name="glyph-target-train"
        ),
        target_test=LabeledDataset(
            flatten(test_imgs), onehot(test_ids), target_classes, name="glyph-target-test"
        ),
        source=UnlabeledDataset(
            flatten(source_imgs), DiagnosticLabels(source_ids), name="glyph-source"
        ),
    )


# ---------------------------------------------------------------------------
# Batching


class BatchStream:
    """Cycling minibatch stream over one dataset.

    Each pass uses a fresh seeded Fisher-Yates permutation; within a pass
    every index appears at most once and the final short batch is dropped so
    all batches have exactly batch_size rows. On exhaustion the stream
    reshuffles and continues.
    """

    def __init__(self, dataset, batch_size, rng):
        self.dataset = dataset
        self.batch_size = int(batch_size)
        n = len(dataset)
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
        if self.batch_size > n:
            raise StreamError(f"batch_size {self.batch_size} exceeds dataset size {n}")
        self._rng = rng
        self._perm = self._rng.permutation(n)
        self._pos = 0

    def next_indices(self):
        if self._pos + self.batch_size > self._perm.shape[0]:
            self._perm = self._rng.permutation(self._perm.shape[0])
            self._pos = 0
        idx = self._perm[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx

    def next_batch(self):
        """Next (x, y) pair; y is None for unlabeled datasets."""
        idx = self.next_indices()
        x = self.dataset.x[idx]
        y = self.dataset.y[idx] if hasattr(self.dataset, "y") else None
        return x, y


def batch_iterator(stream):
    """Endless iterator over a stream's batches."""
    while True:
        yield stream.next_batch()
