#!/usr/bin/env python3
"""Convert the digit JSON bundled in the npm `mnist` package (v1.1.0) to IDX.

Usage: npm pack mnist && tar xzf mnist-1.1.0.tgz
       python3 scripts/npm_mnist_to_idx.py package/src/digits data/mnist10k

Pixels in the JSON are byte/255 rounded to three decimals; they are mapped
back to bytes with round(v * 255). Examples are written in a fixed shuffled
order (seed 20180123) so that prefixes are class-mixed.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: str, dst: str) -> None:
    rows = []
    for digit in range(10):
        data = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            px = bytes(round(v * 255) for v in data[k * 784:(k + 1) * 784])
            rows.append((px, digit))
    random.Random(20180123).shuffle(rows)
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for px, _ in rows:
            f.write(px)
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(rows)))
        f.write(bytes(d for _, d in rows))
    print(f"wrote {len(rows)} examples to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
