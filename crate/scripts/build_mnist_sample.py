#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the MIT-licensed `mnist` npm
package into gzipped IDX files under data/mnist-sample/.

Usage: scripts/build_mnist_sample.py <path to unpacked npm package>
       (obtain it with `npm pack mnist && tar xzf mnist-*.tgz`)

The digits are shuffled with a fixed seed and split 8000 train / 2000 test.
"""
import gzip
import json
import os
import random
import struct
import sys

ROWS = COLS = 28


def main():
    pkg = sys.argv[1]
    samples = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as fh:
            flat = json.load(fh)["data"]
        for start in range(0, len(flat), ROWS * COLS):
            pixels = bytes(round(v * 255) for v in flat[start:start + ROWS * COLS])
            samples.append((pixels, digit))
    random.Random(20190128).shuffle(samples)

    out = os.path.join(os.path.dirname(__file__), "..", "data", "mnist-sample")
    os.makedirs(out, exist_ok=True)
    for prefix, part in (("train", samples[:8000]), ("t10k", samples[8000:])):
        with gzip.GzipFile(os.path.join(out, f"{prefix}-images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
            fh.write(struct.pack(">IIII", 2051, len(part), ROWS, COLS))
            for pixels, _ in part:
                fh.write(pixels)
        with gzip.GzipFile(os.path.join(out, f"{prefix}-labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
            fh.write(struct.pack(">II", 2049, len(part)))
            fh.write(bytes(label for _, label in part))


if __name__ == "__main__":
    main()
