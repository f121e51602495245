"""
Reading MNIST-style IDX files
=============================

Pass an image file and a label file (gzip is fine) to inspect a real dataset;
with no arguments a two-image file is written and read back.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from hopkinsloss.io import read_idx, write_idx

if len(sys.argv) == 3:
    images, labels = Path(sys.argv[1]), Path(sys.argv[2])
else:
    tmp = Path(tempfile.mkdtemp())
    images, labels = tmp / "images.idx", tmp / "labels.idx"
    pixels = np.array([[[0, 255], [128, 0]], [[255, 255], [0, 1]]], dtype=np.uint8)
    write_idx(images, labels, pixels, [3, 7])

x, y = read_idx(images, labels)
print(f"{x.shape[0]} images, {x.shape[1]} features, range [{x.min()}, {x.max()}]")
print("first rows:\n", np.round(x[:2, :8], 6))
print("labels:", y[:10])
