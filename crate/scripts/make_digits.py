"""Writes the scikit-learn 8x8 handwritten digits as IDX files.

The first 1500 images form the training split, the remaining 297 the test
split. Pixel values 0..16 are scaled to 0..255.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 8, 8))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    d = load_digits()
    images = np.round(d.images.reshape(-1, 64) * 255.0 / 16.0)
    labels = d.target
    for name, sl in [("train", slice(0, 1500)), ("test", slice(1500, None))]:
        write_images(out / f"{name}-images.idx", images[sl])
        write_labels(out / f"{name}-labels.idx", labels[sl])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/digits")
