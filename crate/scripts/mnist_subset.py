#!/usr/bin/env python3
"""Write a 5000-image MNIST subset as IDX files.

The source is the `mnist_5k.csv.gz` table bundled with the mlxtend wheel (one
row per image: label, then 784 pixel bytes). The first 4000 rows become the
training split and the last 1000 the held-out split.

    python3 scripts/mnist_subset.py path/to/mlxtend-*.whl data/mnist

Get the wheel with `pip download mlxtend --no-deps -d /tmp/mlx`.
"""

import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN = 4000


def write_idx(path, dims, payload):
    magic = 0x0800 | len(dims)
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    wheel, out = Path(sys.argv[1]), Path(sys.argv[2])
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read(MEMBER)).decode()
    rows = [list(map(int, line.split(","))) for line in io.StringIO(text) if line.strip()]
    if any(len(r) != 785 for r in rows):
        sys.exit("unexpected row width")
    out.mkdir(parents=True, exist_ok=True)
    splits = {"train": rows[:TRAIN], "t10k": rows[TRAIN:]}
    for name, part in splits.items():
        labels = bytes(r[0] for r in part)
        pixels = bytes(v for r in part for v in r[1:])
        write_idx(out / f"{name}-images-idx3-ubyte", [len(part), 28, 28], pixels)
        write_idx(out / f"{name}-labels-idx1-ubyte", [len(part)], labels)
        print(f"{name}: {len(part)} images")


if __name__ == "__main__":
    main()
