#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into gzip'd IDX files.

The package ships 10,000 MNIST digits as per-class JSON arrays of
pixel intensities in [0, 1]. This script restores the original byte
values, shuffles the samples with a fixed seed and writes

    mnist-10k-images-idx3-ubyte.gz
    mnist-10k-labels-idx1-ubyte.gz

Usage: mnist_from_npm.py <path/to/package/src/digits> <out_dir>
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for label in range(10):
        data = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            pixels = bytes(round(v * 255) for v in data[i * 784:(i + 1) * 784])
            samples.append((pixels, label))
    random.Random(20190601).shuffle(samples)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(out_dir / "mnist-10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(out_dir / "mnist-10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in samples))


if __name__ == "__main__":
    main()
