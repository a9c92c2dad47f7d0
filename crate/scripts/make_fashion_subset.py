"""Build the balanced Fashion-MNIST subset under data/fashion-mnist-subset.

Source: npm package `fashion-mnist` (MIT), files src/clothes/<class>.json,
each {"data": [[784 uint8 pixels], ...]} with 7000 images per class
(Fashion-MNIST train + test pooled; empty entries are skipped). Per class, the first 200 images go to
the training split and the last 100 to the test split; classes are
interleaved round-robin.

usage: python3 scripts/make_fashion_subset.py <path/to/src/clothes> <out dir>
"""

import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 100


def write_idx(out, name, images, labels):
    with open(out / f"{name}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out / f"{name}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    per_class = []
    for c in range(10):
        data = json.loads((src / f"{c}.json").read_text())["data"]
        # 0.json carries two empty entries
        data = [img for img in data if len(img) == 784]
        per_class.append((data[:TRAIN_PER_CLASS], data[-TEST_PER_CLASS:]))
    for split, count in (("train", TRAIN_PER_CLASS), ("test", TEST_PER_CLASS)):
        k = 0 if split == "train" else 1
        images, labels = [], []
        for i in range(count):
            for c in range(10):
                images.append(per_class[c][k][i])
                labels.append(c)
        write_idx(out, split, images, labels)


if __name__ == "__main__":
    main()
