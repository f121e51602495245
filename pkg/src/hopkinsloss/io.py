"""Feature CSV files, IDX (MNIST-style) binaries and dataset splitting."""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import make_rng
from .train import Dataset, Split

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class FeatureTable:
    x: np.ndarray
    labels: np.ndarray | None = None
    groups: np.ndarray | None = None
    columns: list[str] | None = None


def write_features(path, x: np.ndarray, labels=None, columns=None):
    """CSV with a header row; floats use 17 significant digits so they round-trip."""
    x = np.asarray(x, dtype=np.float64)
    columns = columns or [f"f{j}" for j in range(x.shape[1])]
    header = list(columns) + (["label"] if labels is not None else [])
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(x):
            cells = [format(v, ".17g") for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            w.writerow(cells)


def read_features(path) -> FeatureTable:
    """Parse a feature CSV; optional ``label`` and ``group`` columns are split off."""
    path = Path(path)
    try:
        f = open(path, newline="")
    except OSError as e:
        raise DataError(f"{path}: cannot open ({e.strerror})") from None
    with f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        label_col = header.index("label") if "label" in header else None
        group_col = header.index("group") if "group" in header else None
        feat_cols = [j for j, h in enumerate(header) if j not in (label_col, group_col)]
        if not feat_cols:
            raise DataError(f"{path}: no feature columns")
        rows, labels, groups = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(rec)}")
            vals = []
            for j in feat_cols:
                try:
                    v = float(rec[j])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {header[j]!r}: "
                                    f"not a number: {rec[j]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {header[j]!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
            if label_col is not None:
                try:
                    lab = int(rec[label_col])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column 'label': "
                                    f"not an integer: {rec[label_col]!r}") from None
                if lab < 0:
                    raise DataError(f"{path}:{lineno}: column 'label': negative label {lab}")
                labels.append(lab)
            if group_col is not None:
                groups.append(rec[group_col])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return FeatureTable(np.array(rows, dtype=np.float64),
                        np.array(labels, dtype=np.int64) if label_col is not None else None,
                        np.array(groups) if group_col is not None else None,
                        [header[j] for j in feat_cols])


def _open_bytes(path) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"{path}: cannot open ({e.strerror})") from None
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(buf: bytes, path, magic: int, ndim: int) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise DataError(f"{path}: truncated header at byte {len(buf)} (need {need})")
    (got,) = struct.unpack_from(">I", buf, 0)
    if got != magic:
        raise DataError(f"{path}: bad magic 0x{got:08x} at byte 0, expected 0x{magic:08x}")
    return struct.unpack_from(f">{ndim}I", buf, 4)


def read_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Flattened images scaled to [-1, 1] (``p / 127.5 - 1``) and their labels."""
    ibuf = _open_bytes(images_path)
    count, rows, cols = _idx_header(ibuf, images_path, IDX_IMAGES_MAGIC, 3)
    size = count * rows * cols
    if len(ibuf) < 16 + size:
        raise DataError(f"{images_path}: truncated pixel data at byte {len(ibuf)}, "
                        f"expected {16 + size} bytes")
    pixels = np.frombuffer(ibuf, np.uint8, size, 16).reshape(count, rows * cols)

    lbuf = _open_bytes(labels_path)
    (lcount,) = _idx_header(lbuf, labels_path, IDX_LABELS_MAGIC, 1)
    if len(lbuf) < 8 + lcount:
        raise DataError(f"{labels_path}: truncated label data at byte {len(lbuf)}, "
                        f"expected {8 + lcount} bytes")
    if lcount != count:
        raise DataError(f"{count} images but {lcount} labels")
    labels = np.frombuffer(lbuf, np.uint8, lcount, 8).astype(np.int64)
    return pixels / 127.5 - 1.0, labels


def write_idx(images_path, labels_path, images: np.ndarray, labels):
    """Write uint8 images of shape (count, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


def split_indices(n: int, fractions=(0.6, 0.2, 0.2), seed: int = 0,
                  groups: np.ndarray | None = None) -> list[np.ndarray]:
    """Random train/val/test partition; with ``groups`` no group spans two splits."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.size != 3 or (fr < 0).any() or not np.isclose(fr.sum(), 1.0):
        raise ValueError("split fractions must be three non-negative numbers summing to 1")
    rng = make_rng(seed)
    if groups is None:
        order = rng.permutation(n)
        cut = np.floor(np.cumsum(fr)[:2] * n + 0.5).astype(int)
        return [np.sort(p) for p in np.split(order, cut)]
    uniq = np.unique(groups)
    order = uniq[rng.permutation(uniq.size)]
    cut = np.floor(np.cumsum(fr)[:2] * uniq.size + 0.5).astype(int)
    return [np.flatnonzero(np.isin(groups, part)) for part in np.split(order, cut)]


def zscore(data: Dataset) -> Dataset:
    """Standardise every split with the training split's column mean and std."""
    mu = data.train.x.mean(axis=0)
    sd = data.train.x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return Dataset(*(Split((s.x - mu) / sd, s.y) for s in (data.train, data.val, data.test)),
                   num_classes=data.num_classes)


def make_dataset(x: np.ndarray, labels=None, fractions=(0.6, 0.2, 0.2), seed: int = 0,
                 groups=None) -> Dataset:
    parts = split_indices(x.shape[0], fractions, seed, groups)
    if any(p.size == 0 for p in parts):
        raise DataError("a split is empty; provide more rows or change the split fractions")
    num_classes = int(labels.max()) + 1 if labels is not None else 0
    return Dataset(*(Split(x[p], None if labels is None else labels[p]) for p in parts),
                   num_classes=num_classes)
