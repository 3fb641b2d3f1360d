#!/usr/bin/env python3
"""Convert the digit dump shipped in the npm `mnist` package (10 000 MNIST
digits stored as JSON floats in [0, 1]) into gzipped IDX files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/make_mnist_sample.py package/src/digits data/mnist-sample

Writes an 8000/2000 train/test split, shuffled with a fixed seed.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SEED = 12345
TRAIN = 8000


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            pixels = [round(v * 255) for v in flat[i : i + 784]]
            samples.append((pixels, digit))
    random.Random(SEED).shuffle(samples)
    train, test = samples[:TRAIN], samples[TRAIN:]
    dst.mkdir(parents=True, exist_ok=True)
    write_images(dst / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_labels(dst / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_images(dst / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_labels(dst / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test samples to {dst}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
